#pragma once

#include <filesystem>
#include <fstream>
#include <variant>
#include <vector>

#include "dnlb/binary_io.hpp"
#include "dnlb/common.hpp"
#include "dnlb/encoder.hpp"
#include "dnlb/metrics.hpp"

namespace dnlb {

/// Brute-force inner-product index. Rows are stored as 32-bit reals in
/// internal-id order; scores accumulate in double.
struct ExactIndex {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<float> data;

  std::span<const float> row(std::size_t i) const {
    return {data.data() + i * dim, dim};
  }
};

inline ExactIndex build_exact(const EmbeddingMatrix& m) {
  ExactIndex idx{m.rows, m.dim, {}};
  idx.data.resize(m.values.size());
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    idx.data[i] = static_cast<float>(m.values[i]);
  }
  return idx;
}

inline ExactIndex build_exact(const std::vector<Embedding>& embeddings) {
  EmbeddingMatrix m;
  m.rows = embeddings.size();
  m.dim = embeddings.empty() ? 0 : embeddings.front().size();
  m.values.reserve(m.rows * m.dim);
  for (const auto& e : embeddings) {
    if (e.size() != m.dim) {
      fail("build_exact: embedding of dimension ", e.size(),
           " in an index of dimension ", m.dim);
    }
    m.values.insert(m.values.end(), e.begin(), e.end());
  }
  return build_exact(m);
}

inline std::vector<double> score_all(const ExactIndex& index,
                                     std::span<const double> q) {
  if (index.n != 0 && q.size() != index.dim) {
    fail("query dimension ", q.size(), " does not match index dimension ",
         index.dim);
  }
  std::vector<double> scores(index.n);
  const float* row = index.data.data();
  for (std::size_t i = 0; i < index.n; ++i, row += index.dim) {
    double s = 0.0;
    for (std::size_t c = 0; c < index.dim; ++c) s += q[c] * row[c];
    scores[i] = s;
  }
  return scores;
}

inline RankedList search_exact(const ExactIndex& index,
                               std::span<const double> q, std::size_t k) {
  if (k == 0) fail("search: k must be >= 1");
  return top_k_from_scores(score_all(index, q), k);
}

// ---------------------------------------------------------------------------
// Product quantization

struct PQCodebook {
  std::size_t dim = 0;
  std::size_t M = 0;    // subvectors
  std::size_t k_c = 0;  // centroids per subspace, <= 256
  std::vector<float> centroids;  // M x k_c x dsub

  std::size_t dsub() const { return M == 0 ? 0 : dim / M; }

  std::span<const float> centroid(std::size_t m, std::size_t c) const {
    return {centroids.data() + (m * k_c + c) * dsub(), dsub()};
  }
};

struct PQIndex {
  PQCodebook codebook;
  std::size_t n = 0;
  std::vector<std::uint8_t> codes;  // n x M

  std::span<const std::uint8_t> code(std::size_t i) const {
    return {codes.data() + i * codebook.M, codebook.M};
  }
};

namespace detail {

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Lloyd's k-means on one subspace. `points` is n x dsub (row-major).
// Appends the objective after each assignment step to `trace`.
inline std::vector<double> kmeans(const std::vector<double>& points,
                                  std::size_t n, std::size_t dsub,
                                  std::size_t k, std::size_t iters, Rng& rng,
                                  std::vector<double>* trace) {
  auto pt = [&](std::size_t i) {
    return std::span<const double>(points.data() + i * dsub, dsub);
  };
  std::vector<double> cent(k * dsub);
  auto ct = [&](std::size_t c) {
    return std::span<double>(cent.data() + c * dsub, dsub);
  };

  // k-means++ seeding.
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::size_t first = rng.below(n);
  std::copy(pt(first).begin(), pt(first).end(), ct(0).begin());
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      best[i] = std::min(best[i], sq_dist(pt(i), ct(c - 1)));
      total += best[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (best[i] == 0.0) continue;
        pick = i;  // last positive-weight point if rounding exhausts r
        acc += best[i];
        if (acc > r) break;
      }
    } else {
      pick = rng.below(n);
    }
    std::copy(pt(pick).begin(), pt(pick).end(), ct(c).begin());
  }

  std::vector<std::size_t> assign(n, k);
  std::vector<double> dist(n, 0.0);
  for (std::size_t it = 0; it < std::max<std::size_t>(iters, 1); ++it) {
    bool changed = false;
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t arg = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        const double d = sq_dist(pt(i), ct(c));
        if (d < bd) {
          bd = d;
          arg = c;
        }
      }
      if (assign[i] != arg) changed = true;
      assign[i] = arg;
      dist[i] = bd;
      objective += bd;
    }
    if (trace) trace->push_back(objective);
    if (!changed || it + 1 == iters) break;

    std::vector<double> sum(k * dsub, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++count[assign[i]];
      auto p = pt(i);
      for (std::size_t j = 0; j < dsub; ++j) sum[assign[i] * dsub + j] += p[j];
    }
    // Points sorted by distance to their centroid, farthest first, feed
    // empty clusters.
    std::vector<std::size_t> order;
    std::size_t next_far = 0;
    for (std::size_t c = 0; c < k; ++c) {
      if (count[c] > 0) {
        for (std::size_t j = 0; j < dsub; ++j) {
          ct(c)[j] = sum[c * dsub + j] / static_cast<double>(count[c]);
        }
        continue;
      }
      if (order.empty()) {
        order.resize(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) {
                           return dist[a] > dist[b];
                         });
      }
      const std::size_t p = order[std::min(next_far++, n - 1)];
      std::copy(pt(p).begin(), pt(p).end(), ct(c).begin());
    }
  }
  return cent;
}

}  // namespace detail

/// Per-subspace k-means. `objective_trace`, if given, receives the total
/// quantization error (sum over subspaces) after each assignment round.
inline PQCodebook train_pq(const EmbeddingMatrix& docs, std::size_t M,
                           std::size_t k_c, std::size_t iters,
                           std::uint64_t seed,
                           std::vector<double>* objective_trace = nullptr) {
  if (M == 0 || docs.dim % M != 0) {
    fail("train_pq: M = ", M, " does not divide d_emb = ", docs.dim);
  }
  if (k_c == 0 || k_c > 256) fail("train_pq: k_c must lie in [1, 256]");
  if (docs.rows < k_c) {
    fail("train_pq: ", docs.rows, " vectors cannot train ", k_c,
         " centroids");
  }
  PQCodebook cb{docs.dim, M, k_c, {}};
  const std::size_t dsub = cb.dsub();
  cb.centroids.resize(M * k_c * dsub);
  std::vector<std::vector<double>> traces(M);
  for (std::size_t m = 0; m < M; ++m) {
    // Work on the float-rounded values that the index actually stores.
    std::vector<double> pts(docs.rows * dsub);
    for (std::size_t i = 0; i < docs.rows; ++i) {
      for (std::size_t j = 0; j < dsub; ++j) {
        pts[i * dsub + j] =
            static_cast<float>(docs.values[i * docs.dim + m * dsub + j]);
      }
    }
    Rng rng(mix_seed(seed, m));
    auto cent = detail::kmeans(pts, docs.rows, dsub, k_c, iters, rng,
                               objective_trace ? &traces[m] : nullptr);
    for (std::size_t i = 0; i < cent.size(); ++i) {
      cb.centroids[m * k_c * dsub + i] = static_cast<float>(cent[i]);
    }
  }
  if (objective_trace) {
    // Subspaces may stop at different rounds; a finished subspace keeps
    // its final value.
    std::size_t rounds = 0;
    for (const auto& t : traces) rounds = std::max(rounds, t.size());
    objective_trace->assign(rounds, 0.0);
    for (const auto& t : traces) {
      for (std::size_t r = 0; r < rounds; ++r) {
        (*objective_trace)[r] += t[std::min(r, t.size() - 1)];
      }
    }
  }
  return cb;
}

/// Nearest centroid by L2 in each subspace; ties go to the lowest id.
inline std::vector<std::uint8_t> encode_pq(const PQCodebook& cb,
                                           std::span<const double> v) {
  if (v.size() != cb.dim) fail("encode_pq: dimension mismatch");
  const std::size_t dsub = cb.dsub();
  std::vector<std::uint8_t> code(cb.M);
  for (std::size_t m = 0; m < cb.M; ++m) {
    std::size_t arg = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cb.k_c; ++c) {
      auto cen = cb.centroid(m, c);
      double d = 0.0;
      for (std::size_t j = 0; j < dsub; ++j) {
        const double diff =
            static_cast<double>(static_cast<float>(v[m * dsub + j])) - cen[j];
        d += diff * diff;
      }
      if (d < bd) {
        bd = d;
        arg = c;
      }
    }
    code[m] = static_cast<std::uint8_t>(arg);
  }
  return code;
}

inline PQIndex build_pq(PQCodebook cb, const EmbeddingMatrix& docs) {
  PQIndex idx{std::move(cb), docs.rows, {}};
  idx.codes.reserve(docs.rows * idx.codebook.M);
  for (std::size_t i = 0; i < docs.rows; ++i) {
    auto c = encode_pq(idx.codebook, docs.row(i));
    idx.codes.insert(idx.codes.end(), c.begin(), c.end());
  }
  return idx;
}

inline Embedding reconstruct(const PQIndex& index, std::size_t i) {
  const auto& cb = index.codebook;
  Embedding v(cb.dim);
  const std::size_t dsub = cb.dsub();
  auto code = index.code(i);
  for (std::size_t m = 0; m < cb.M; ++m) {
    auto cen = cb.centroid(m, code[m]);
    for (std::size_t j = 0; j < dsub; ++j) v[m * dsub + j] = cen[j];
  }
  return v;
}

/// Per-query table of <q_sub, centroid> for every (subspace, centroid).
inline std::vector<double> pq_score_table(const PQCodebook& cb,
                                          std::span<const double> q) {
  if (q.size() != cb.dim) {
    fail("query dimension ", q.size(), " does not match index dimension ",
         cb.dim);
  }
  const std::size_t dsub = cb.dsub();
  std::vector<double> table(cb.M * cb.k_c);
  for (std::size_t m = 0; m < cb.M; ++m) {
    for (std::size_t c = 0; c < cb.k_c; ++c) {
      auto cen = cb.centroid(m, c);
      double s = 0.0;
      for (std::size_t j = 0; j < dsub; ++j) s += q[m * dsub + j] * cen[j];
      table[m * cb.k_c + c] = s;
    }
  }
  return table;
}

inline std::vector<double> score_all(const PQIndex& index,
                                     std::span<const double> q) {
  std::vector<double> scores(index.n);
  if (index.n == 0) return scores;
  const auto& cb = index.codebook;
  const auto table = pq_score_table(cb, q);
  for (std::size_t i = 0; i < index.n; ++i) {
    const std::uint8_t* code = index.codes.data() + i * cb.M;
    double s = 0.0;
    for (std::size_t m = 0; m < cb.M; ++m) s += table[m * cb.k_c + code[m]];
    scores[i] = s;
  }
  return scores;
}

/// Asymmetric search: sum of M table lookups per document.
inline RankedList search_pq(const PQIndex& index, std::span<const double> q,
                            std::size_t k) {
  if (k == 0) fail("search: k must be >= 1");
  return top_k_from_scores(score_all(index, q), k);
}

// ---------------------------------------------------------------------------
// Either kind behind one interface.

using AnyIndex = std::variant<ExactIndex, PQIndex>;

inline std::size_t index_size(const AnyIndex& index) {
  return std::visit([](const auto& i) { return i.n; }, index);
}

inline std::size_t index_dim(const AnyIndex& index) {
  if (const auto* e = std::get_if<ExactIndex>(&index)) return e->dim;
  return std::get<PQIndex>(index).codebook.dim;
}

inline std::vector<double> score_all(const AnyIndex& index,
                                     std::span<const double> q) {
  return std::visit([&](const auto& i) { return score_all(i, q); }, index);
}

inline RankedList search(const AnyIndex& index, std::span<const double> q,
                         std::size_t k) {
  if (k == 0) fail("search: k must be >= 1");
  return top_k_from_scores(score_all(index, q), k);
}

/// The vector the index scores against for document i.
inline Embedding stored_vector(const AnyIndex& index, std::size_t i) {
  if (const auto* e = std::get_if<ExactIndex>(&index)) {
    auto r = e->row(i);
    return Embedding(r.begin(), r.end());
  }
  return reconstruct(std::get<PQIndex>(index), i);
}

inline EmbeddingMatrix stored_vectors(const AnyIndex& index) {
  EmbeddingMatrix m{index_size(index), index_dim(index), {}};
  m.values.reserve(m.rows * m.dim);
  for (std::size_t i = 0; i < m.rows; ++i) {
    auto v = stored_vector(index, i);
    m.values.insert(m.values.end(), v.begin(), v.end());
  }
  return m;
}

/// Index kind used for training/evaluation grids.
struct IndexSpec {
  bool pq = false;
  std::size_t M = 0;
  std::size_t k_c = 256;
  std::size_t iters = 25;

  std::string label() const {
    return pq ? "pq" + std::to_string(M) : "exact";
  }

  friend bool operator==(const IndexSpec&, const IndexSpec&) = default;
};

inline AnyIndex build_index(const EmbeddingMatrix& docs, const IndexSpec& spec,
                            std::uint64_t seed) {
  if (!spec.pq) return build_exact(docs);
  auto cb = train_pq(docs, spec.M, std::min(spec.k_c, docs.rows), spec.iters,
                     seed);
  return build_pq(std::move(cb), docs);
}

// ---------------------------------------------------------------------------
// Index files
//
// "DNIX" | u32 version=1 | u32 kind (0 exact, 1 pq) | u64 n | u32 d_emb |
// u32 M | u32 k_c | payload. Exact payload: n x d_emb f32. PQ payload:
// M x k_c x (d_emb/M) f32 centroids, then n x M u8 codes. M = k_c = 0 for
// exact indexes.

inline constexpr std::uint32_t kIndexVersion = 1;

inline void save_index(const AnyIndex& index, std::ostream& out) {
  LeWriter w(out);
  w.magic("DNIX");
  w.u32(kIndexVersion);
  if (const auto* e = std::get_if<ExactIndex>(&index)) {
    w.u32(0);
    w.u64(e->n);
    w.u32(static_cast<std::uint32_t>(e->dim));
    w.u32(0);
    w.u32(0);
    w.f32s(e->data);
  } else {
    const auto& p = std::get<PQIndex>(index);
    w.u32(1);
    w.u64(p.n);
    w.u32(static_cast<std::uint32_t>(p.codebook.dim));
    w.u32(static_cast<std::uint32_t>(p.codebook.M));
    w.u32(static_cast<std::uint32_t>(p.codebook.k_c));
    w.f32s(p.codebook.centroids);
    w.bytes(p.codes);
  }
  w.check();
}

inline void save_index(const AnyIndex& index,
                       const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot open '", path.string(), "' for writing");
  save_index(index, out);
}

inline AnyIndex load_index(std::istream& in) {
  LeReader r(in);
  r.expect_magic("DNIX");
  if (const auto v = r.u32(); v != kIndexVersion) {
    fail("unsupported index version ", v);
  }
  const auto kind = r.u32();
  const auto n = static_cast<std::size_t>(r.u64());
  const std::size_t dim = r.u32();
  const std::size_t M = r.u32();
  const std::size_t k_c = r.u32();
  if (kind == 0) {
    ExactIndex e{n, dim, std::vector<float>(n * dim)};
    r.f32s(e.data);
    r.expect_eof();
    return e;
  }
  if (kind != 1) fail("unknown index kind ", kind);
  if (M == 0 || dim % M != 0 || k_c == 0 || k_c > 256) {
    fail("corrupt pq header");
  }
  PQIndex p{PQCodebook{dim, M, k_c, std::vector<float>(dim * k_c)}, n,
            std::vector<std::uint8_t>(n * M)};
  r.f32s(p.codebook.centroids);
  r.bytes(p.codes);
  r.expect_eof();
  for (auto c : p.codes) {
    if (c >= k_c) fail("pq code ", int(c), " out of range");
  }
  return p;
}

inline AnyIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open '", path.string(), "' for reading");
  return load_index(in);
}

// ---------------------------------------------------------------------------

struct IndexQuality {
  std::size_t num_queries = 0;
  double mrr10 = 0.0;
};

/// MRR@10 of top-10 retrieval through `index` for every judged query.
inline IndexQuality index_quality(const AnyIndex& index,
                                  const QuerySet& queries, const Qrels& qrels,
                                  const Corpus& corpus,
                                  const DualEncoderParams& params) {
  IndexQuality q;
  double total = 0.0;
  for (const auto& query : queries) {
    if (!qrels.judged(query.qid)) continue;
    const auto j = resolve(qrels, query.qid, corpus);
    const auto emb =
        embed_query(params, hash_features(query.tokens, params.shape.H));
    const auto top = search(index, emb, 10);
    total += mrr_at_k(ids_of(top), j, 10);
    ++q.num_queries;
  }
  if (q.num_queries) q.mrr10 = total / static_cast<double>(q.num_queries);
  return q;
}

}  // namespace dnlb
