#pragma once

#include <map>
#include <unordered_set>
#include <variant>

#include "dnlb/dataset.hpp"
#include "dnlb/index.hpp"

namespace dnlb {

/// Draws n ids uniformly without replacement from the corpus minus the
/// query's relevant set (Floyd's algorithm over the non-relevant ids).
inline std::vector<DocId> sample_random_negatives(const QueryJudgments& j,
                                                  std::size_t n,
                                                  std::size_t corpus_size,
                                                  Rng& rng) {
  if (n == 0) fail("sample_random_negatives: n must be >= 1");
  std::size_t n_rel = 0;
  for (DocId r : j.relevant) n_rel += r < corpus_size;
  const std::size_t available = corpus_size - n_rel;
  if (available < n) {
    fail("sample_random_negatives: only ", available,
         " non-relevant documents, ", n, " requested");
  }
  // r-th non-relevant id.
  auto nth_nonrelevant = [&](std::size_t r) {
    std::size_t id = r;
    for (DocId rel : j.relevant) {
      if (rel <= id) ++id;
      else break;
    }
    return static_cast<DocId>(id);
  };
  std::vector<DocId> out;
  out.reserve(n);
  std::unordered_set<std::size_t> chosen;
  for (std::size_t k = available - n; k < available; ++k) {
    std::size_t t = rng.below(k + 1);
    if (!chosen.insert(t).second) {
      chosen.insert(k);
      t = k;
    }
    out.push_back(nth_nonrelevant(t));
  }
  return out;
}

struct BatchRow {
  std::size_t query = 0;  // index into the query split
  DocId positive = 0;
  std::vector<DocId> negatives;
};

struct BatchLayout {
  std::vector<BatchRow> rows;
};

/// Every document of the other rows (positives and hard negatives), minus
/// documents relevant to this row's query, first occurrence order.
inline std::vector<DocId> in_batch_negatives(const BatchLayout& batch,
                                             std::size_t row_index,
                                             const QueryJudgments& j) {
  if (row_index >= batch.rows.size()) fail("in_batch_negatives: bad row");
  std::vector<DocId> out;
  std::unordered_set<DocId> seen;
  auto take = [&](DocId d) {
    if (j.is_relevant(d)) return;
    if (seen.insert(d).second) out.push_back(d);
  };
  for (std::size_t r = 0; r < batch.rows.size(); ++r) {
    if (r == row_index) continue;
    take(batch.rows[r].positive);
    for (DocId d : batch.rows[r].negatives) take(d);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Static pools

enum class PoolProvenance { bm25, warmup_dense };

inline std::string to_string(PoolProvenance p) {
  return p == PoolProvenance::bm25 ? "bm25" : "warmup_dense";
}

inline PoolProvenance parse_provenance(const std::string& s) {
  if (s == "bm25") return PoolProvenance::bm25;
  if (s == "warmup_dense") return PoolProvenance::warmup_dense;
  fail("unknown pool provenance '", s, "'");
}

struct NegativePool {
  PoolProvenance provenance = PoolProvenance::bm25;
  std::size_t k_pool = 200;
  std::size_t step = 0;
  std::map<std::string, std::vector<DocId>> negatives;  // rank order

  const std::vector<DocId>& of(const std::string& qid) const {
    auto it = negatives.find(qid);
    if (it == negatives.end()) fail("no pooled negatives for query '", qid, "'");
    return it->second;
  }

  friend bool operator==(const NegativePool&, const NegativePool&) = default;
};

struct Bm25Retriever {
  const Bm25Index* index = nullptr;
};

/// Dense retrieval with the query tower of `params` against `index`.
struct DenseRetriever {
  const DualEncoderParams* params = nullptr;
  const AnyIndex* index = nullptr;
};

using Retriever = std::variant<Bm25Retriever, DenseRetriever>;

inline NegativePool build_static_negatives(const Retriever& retriever,
                                           const QuerySplit& queries,
                                           std::size_t k_pool) {
  if (k_pool == 0) fail("build_static_negatives: K_pool must be >= 1");
  NegativePool pool;
  pool.k_pool = k_pool;
  pool.provenance = std::holds_alternative<Bm25Retriever>(retriever)
                        ? PoolProvenance::bm25
                        : PoolProvenance::warmup_dense;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& j = queries.judgments[i];
    const std::size_t depth = k_pool + j.relevant.size();
    RankedList ranked;
    if (const auto* b = std::get_if<Bm25Retriever>(&retriever)) {
      ranked = b->index->top_k(queries.queries[i].tokens, depth);
    } else {
      const auto& d = std::get<DenseRetriever>(retriever);
      ranked = search(*d.index, embed_query(*d.params, queries.features[i]),
                      depth);
    }
    std::vector<DocId> negs;
    for (const auto& s : ranked) {
      if (negs.size() == k_pool) break;
      if (!j.is_relevant(s.id)) negs.push_back(s.id);
    }
    if (negs.empty()) {
      log(LogLevel::error, "warning: query '", queries.queries[i].qid,
          "' has no non-relevant candidates; pool left empty");
    }
    pool.negatives[queries.queries[i].qid] = std::move(negs);
  }
  return pool;
}

inline constexpr std::size_t kNeverRefresh =
    std::numeric_limits<std::size_t>::max();

/// Re-encodes the corpus with `params`, rebuilds an exact index, and
/// rebuilds the pool when step mod period == 0; otherwise returns `pool`.
inline NegativePool refresh_static(const NegativePool& pool,
                                   const DualEncoderParams& params,
                                   const Collection& collection,
                                   const QuerySplit& queries, std::size_t step,
                                   std::size_t period) {
  if (period == 0) fail("refresh_static: period must be >= 1");
  if (step % period != 0) return pool;
  const AnyIndex index =
      build_exact(embed_all(params, Tower::doc, collection.doc_features));
  NegativePool fresh = build_static_negatives(
      DenseRetriever{&params, &index}, queries, pool.k_pool);
  fresh.step = step;
  return fresh;
}

/// Exactly the K top-ranked irrelevant documents under the current index.
inline std::vector<DocId> dynamic_hard_negatives(const AnyIndex& index,
                                                 std::span<const double> q_emb,
                                                 std::size_t K,
                                                 const QueryJudgments& j) {
  if (K == 0) fail("dynamic_hard_negatives: K must be >= 1");
  const auto ranked = search(index, q_emb, K + j.relevant.size());
  std::vector<DocId> out;
  out.reserve(K);
  for (const auto& s : ranked) {
    if (out.size() == K) break;
    if (!j.is_relevant(s.id)) out.push_back(s.id);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pool files: TSV `qid<TAB>ext1,ext2,...` plus a JSON sidecar.

inline void save_pool(const NegativePool& pool, const Corpus& corpus,
                      const std::filesystem::path& tsv,
                      const std::filesystem::path& sidecar) {
  auto out = detail::open_out(tsv);
  for (const auto& [qid, ids] : pool.negatives) {
    out << qid << '\t';
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) out << ',';
      out << corpus[ids[i]].external_id;
    }
    out << '\n';
  }
  auto meta = detail::open_out(sidecar);
  meta << nlohmann::json{{"provenance", to_string(pool.provenance)},
                         {"K_pool", pool.k_pool},
                         {"step", pool.step}}
              .dump(2)
       << '\n';
}

inline NegativePool load_pool(const Corpus& corpus,
                              const std::filesystem::path& tsv,
                              const std::filesystem::path& sidecar) {
  NegativePool pool;
  {
    auto in = detail::open_in(sidecar);
    const auto meta = nlohmann::json::parse(in);
    pool.provenance = parse_provenance(meta.at("provenance").get<std::string>());
    pool.k_pool = meta.at("K_pool").get<std::size_t>();
    pool.step = meta.at("step").get<std::size_t>();
  }
  auto in = detail::open_in(tsv);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) fail("pool line ", lineno, ": missing tab");
    std::vector<DocId> ids;
    std::istringstream list(line.substr(tab + 1));
    std::string ext;
    while (std::getline(list, ext, ',')) {
      auto id = corpus.find(ext);
      if (!id) fail("pool line ", lineno, ": unknown document '", ext, "'");
      ids.push_back(*id);
    }
    if (ids.size() > pool.k_pool) {
      fail("pool line ", lineno, ": more than K_pool entries");
    }
    pool.negatives[line.substr(0, tab)] = std::move(ids);
  }
  return pool;
}

}  // namespace dnlb
