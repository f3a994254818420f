#pragma once

#include <filesystem>
#include <functional>
#include <optional>

#include <json.hpp>

#include "dnlb/dataset.hpp"
#include "dnlb/index.hpp"
#include "dnlb/loss.hpp"
#include "dnlb/metrics.hpp"

namespace dnlb {

// ---------------------------------------------------------------------------
// Rank profiles: for each positive, its 1-based rank pi in the full corpus
// ranking and delta, the number of positives ranked before it.

struct RankEntry {
  DocId positive = 0;
  std::size_t pi = 0;
  std::size_t delta = 0;

  std::size_t errors() const { return pi - delta - 1; }
};

struct QueryProfile {
  std::string qid;
  std::vector<RankEntry> entries;

  std::size_t total_errors() const {
    std::size_t s = 0;
    for (const auto& e : entries) s += e.errors();
    return s;
  }

  std::size_t topk_errors(std::size_t K) const {
    std::size_t s = 0;
    for (const auto& e : entries) s += std::min(e.errors(), K);
    return s;
  }
};

/// Profile from precomputed corpus scores. pi is the position in the
/// canonical full ranking.
inline QueryProfile rank_profile(std::span<const double> scores,
                                 const QueryJudgments& j, std::string qid) {
  if (j.relevant.empty()) {
    fail("rank_profile: query '", qid, "' has no relevant judgments");
  }
  QueryProfile p{std::move(qid), {}};
  for (DocId pos : j.relevant) {
    if (pos >= scores.size()) fail("rank_profile: positive outside corpus");
    std::size_t before = 0, rel_before = 0;
    for (std::size_t d = 0; d < scores.size(); ++d) {
      if (ranks_before(scores[d], static_cast<DocId>(d), scores[pos], pos)) {
        ++before;
        rel_before += j.is_relevant(static_cast<DocId>(d));
      }
    }
    p.entries.push_back({pos, before + 1, rel_before});
  }
  return p;
}

inline QueryProfile rank_profile(const AnyIndex& index,
                                 std::span<const double> q_emb,
                                 const QueryJudgments& j, std::string qid) {
  return rank_profile(score_all(index, q_emb), j, std::move(qid));
}

/// Mean over queries of sum over positives of (pi - delta - 1).
inline double total_pairwise_errors(const std::vector<QueryProfile>& profiles) {
  if (profiles.empty()) return 0.0;
  double s = 0.0;
  for (const auto& p : profiles) s += static_cast<double>(p.total_errors());
  return s / static_cast<double>(profiles.size());
}

/// Mean over queries of sum over positives of min(pi - delta - 1, K).
inline double topk_pairwise_errors(const std::vector<QueryProfile>& profiles,
                                   std::size_t K) {
  if (K == 0) fail("topk_pairwise_errors: K must be >= 1");
  if (profiles.empty()) return 0.0;
  double s = 0.0;
  for (const auto& p : profiles) s += static_cast<double>(p.topk_errors(K));
  return s / static_cast<double>(profiles.size());
}

/// Best (smallest) 1-based rank reached by any member of `set`.
inline std::size_t quality_phi(std::span<const DocId> set,
                               std::span<const double> scores) {
  if (set.empty()) fail("quality_phi: empty negative set");
  DocId best = set.front();
  for (DocId d : set) {
    if (d >= scores.size()) fail("quality_phi: id outside corpus");
    if (ranks_before(scores[d], d, scores[best], best)) best = d;
  }
  std::size_t before = 0;
  for (std::size_t d = 0; d < scores.size(); ++d) {
    before += ranks_before(scores[d], static_cast<DocId>(d), scores[best], best);
  }
  return before + 1;
}

/// Same, reading ranks from a full ranking (rank_of[id] is 1-based).
inline std::size_t quality_phi_from_ranks(std::span<const DocId> set,
                                          std::span<const std::size_t> rank_of) {
  if (set.empty()) fail("quality_phi: empty negative set");
  std::size_t best = std::numeric_limits<std::size_t>::max();
  for (DocId d : set) best = std::min(best, rank_of[d]);
  return best;
}

inline double overlap_ratio(std::span<const DocId> static_set,
                            std::span<const DocId> dynamic_set) {
  if (static_set.empty()) fail("overlap_ratio: empty static set");
  std::vector<DocId> a(static_set.begin(), static_set.end());
  std::vector<DocId> b(dynamic_set.begin(), dynamic_set.end());
  std::sort(a.begin(), a.end());
  a.erase(std::unique(a.begin(), a.end()), a.end());
  std::sort(b.begin(), b.end());
  b.erase(std::unique(b.begin(), b.end()), b.end());
  std::vector<DocId> both;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                        std::back_inserter(both));
  return static_cast<double>(both.size()) / static_cast<double>(a.size());
}

// ---------------------------------------------------------------------------
// Error distribution

struct ErrorBucket {
  double lo = 0.0;  // inclusive
  double hi = 0.0;  // exclusive
  std::size_t queries = 0;
  double query_fraction = 0.0;
  double error_fraction = 0.0;
};

/// 0, 1, 10, 100, ..., 1e7, inf.
inline std::vector<double> default_error_edges() {
  std::vector<double> e{0.0};
  for (double x = 1.0; x <= 1e7; x *= 10.0) e.push_back(x);
  e.push_back(std::numeric_limits<double>::infinity());
  return e;
}

/// Share of queries and share of total error mass per bucket. With zero
/// total error every error share is 0.
inline std::vector<ErrorBucket> error_distribution(
    const std::vector<double>& per_query_errors,
    const std::vector<double>& edges = default_error_edges()) {
  if (edges.size() < 2 || !std::is_sorted(edges.begin(), edges.end())) {
    fail("error_distribution: need at least two ascending edges");
  }
  std::vector<ErrorBucket> buckets(edges.size() - 1);
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    buckets[b].lo = edges[b];
    buckets[b].hi = edges[b + 1];
  }
  double total = 0.0;
  std::vector<double> mass(buckets.size(), 0.0);
  for (double e : per_query_errors) {
    auto it = std::upper_bound(edges.begin(), edges.end(), e);
    std::size_t b = it == edges.begin() ? 0
                                        : static_cast<std::size_t>(it - edges.begin()) - 1;
    b = std::min(b, buckets.size() - 1);
    ++buckets[b].queries;
    mass[b] += e;
    total += e;
  }
  const double n = static_cast<double>(per_query_errors.size());
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    buckets[b].query_fraction =
        n > 0 ? static_cast<double>(buckets[b].queries) / n : 0.0;
    buckets[b].error_fraction = total > 0 ? mass[b] / total : 0.0;
  }
  return buckets;
}

/// Highest non-empty bucket, if any.
inline std::optional<ErrorBucket> top_bucket(
    const std::vector<ErrorBucket>& buckets) {
  for (auto it = buckets.rbegin(); it != buckets.rend(); ++it) {
    if (it->queries > 0) return *it;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Objective audit: total-error objective against the top-K clamp.

struct Theorem1Report {
  bool condition_holds = false;
  double objective_random = 0.0;  // sum of (pi - delta - 1)
  double objective_topk = 0.0;    // sum of min(pi - delta - 1, K)
  std::size_t max_errors = 0;     // largest per-positive pi - delta - 1
};

inline Theorem1Report theorem1_audit(const std::vector<QueryProfile>& profiles,
                                     std::size_t K) {
  Theorem1Report r;
  r.condition_holds = true;
  for (const auto& p : profiles) {
    for (const auto& e : p.entries) {
      r.max_errors = std::max(r.max_errors, e.errors());
      if (e.errors() > K) r.condition_holds = false;
    }
    r.objective_random += static_cast<double>(p.total_errors());
    r.objective_topk += static_cast<double>(p.topk_errors(K));
  }
  if (r.condition_holds && r.objective_random != r.objective_topk) {
    fail("theorem1_audit: objectives differ although no clamp is active");
  }
  return r;
}

inline std::vector<QueryProfile> profiles_for(const AnyIndex& index,
                                              const DualEncoderParams& params,
                                              const QuerySplit& split) {
  std::vector<QueryProfile> out;
  for (std::size_t i = 0; i < split.size(); ++i) {
    if (split.judgments[i].relevant.empty()) continue;
    out.push_back(rank_profile(index, embed_query(params, split.features[i]),
                               split.judgments[i], split.queries[i].qid));
  }
  return out;
}

inline Theorem1Report theorem1_audit(const DualEncoderParams& params,
                                     const Collection& collection,
                                     const QuerySplit& split, std::size_t K) {
  const AnyIndex index =
      build_exact(embed_all(params, Tower::doc, collection.doc_features));
  return theorem1_audit(profiles_for(index, params, split), K);
}

struct SweepPoint {
  double t = 0.0;
  Theorem1Report report;
};

/// Evaluates both objectives along a one-parameter family.
inline std::vector<SweepPoint> theorem1_sweep(
    const std::function<std::vector<QueryProfile>(double)>& family,
    const std::vector<double>& grid, std::size_t K) {
  std::vector<SweepPoint> out;
  for (double t : grid) out.push_back({t, theorem1_audit(family(t), K)});
  return out;
}

/// First grid index minimizing each objective.
inline std::pair<std::size_t, std::size_t> sweep_argmins(
    const std::vector<SweepPoint>& sweep) {
  std::size_t ar = 0, ak = 0;
  for (std::size_t i = 1; i < sweep.size(); ++i) {
    if (sweep[i].report.objective_random < sweep[ar].report.objective_random) ar = i;
    if (sweep[i].report.objective_topk < sweep[ak].report.objective_topk) ak = i;
  }
  return {ar, ak};
}

// ---------------------------------------------------------------------------
// Metrics reports and run files

struct QueryReport {
  std::string qid;
  std::vector<double> values;  // aligned with MetricsReport::metrics
  std::size_t first_relevant_rank = 0;  // 0 if none retrieved
  std::size_t total_errors = 0;
  std::size_t topk_errors = 0;
};

struct MetricsReport {
  std::vector<MetricSpec> metrics;
  std::vector<QueryReport> queries;
  std::vector<double> means;
  std::size_t skipped = 0;  // queries without judgments
  std::size_t topk = 50;
  double mean_total_errors = 0.0;
  double mean_topk_errors = 0.0;
  std::vector<ErrorBucket> error_histogram;
};

struct RunEntry {
  std::string qid;
  RankedList ranked;
};

using Run = std::vector<RunEntry>;

struct EvalOptions {
  std::vector<MetricSpec> metrics{{MetricKind::mrr, 10},
                                  {MetricKind::ndcg, 10},
                                  {MetricKind::recall, 100}};
  std::size_t depth = 0;  // 0: max metric cutoff
  std::size_t topk = 50;
  Gain gain = Gain::exponential;
};

inline MetricsReport evaluate(const AnyIndex& index,
                              const DualEncoderParams& params,
                              const QuerySplit& split, const EvalOptions& opt,
                              Run* run = nullptr) {
  MetricsReport rep;
  rep.metrics = opt.metrics;
  rep.topk = opt.topk;
  std::size_t depth = opt.depth;
  for (const auto& m : opt.metrics) depth = std::max(depth, m.cutoff);
  depth = std::max<std::size_t>(depth, 1);
  rep.means.assign(opt.metrics.size(), 0.0);
  std::vector<QueryProfile> profiles;
  std::vector<double> per_query_errors;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const auto& q = split.queries[i];
    const auto& j = split.judgments[i];
    const auto emb = embed_query(params, split.features[i]);
    const auto scores = score_all(index, emb);
    const auto ranked = top_k_from_scores(scores, depth);
    if (run) run->push_back({q.qid, ranked});
    if (j.relevant.empty()) {
      ++rep.skipped;
      continue;
    }
    const auto ids = ids_of(ranked);
    QueryReport qr{q.qid, {}, 0, 0, 0};
    for (const auto& m : opt.metrics) qr.values.push_back(m.evaluate(ids, j, opt.gain));
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (j.is_relevant(ids[r])) {
        qr.first_relevant_rank = r + 1;
        break;
      }
    }
    auto prof = rank_profile(scores, j, q.qid);
    qr.total_errors = prof.total_errors();
    qr.topk_errors = prof.topk_errors(opt.topk);
    per_query_errors.push_back(static_cast<double>(qr.total_errors));
    profiles.push_back(std::move(prof));
    rep.queries.push_back(std::move(qr));
  }
  if (!rep.queries.empty()) {
    for (const auto& qr : rep.queries) {
      for (std::size_t m = 0; m < rep.means.size(); ++m) rep.means[m] += qr.values[m];
    }
    for (double& v : rep.means) v /= static_cast<double>(rep.queries.size());
  }
  rep.mean_total_errors = total_pairwise_errors(profiles);
  rep.mean_topk_errors = topk_pairwise_errors(profiles, opt.topk);
  rep.error_histogram = error_distribution(per_query_errors);
  return rep;
}

inline nlohmann::json to_json(const MetricsReport& rep) {
  using nlohmann::json;
  json metrics = json::array();
  for (const auto& m : rep.metrics) metrics.push_back(m.name());
  // nlohmann::json objects sort keys; keep the requested order explicit.
  json ordered = json::array();
  for (std::size_t m = 0; m < rep.metrics.size(); ++m) {
    ordered.push_back({{"metric", rep.metrics[m].name()}, {"mean", rep.means[m]}});
  }
  json per_query = json::array();
  for (const auto& q : rep.queries) {
    json values = json::array();
    for (std::size_t m = 0; m < rep.metrics.size(); ++m) {
      values.push_back({{"metric", rep.metrics[m].name()}, {"value", q.values[m]}});
    }
    per_query.push_back({{"qid", q.qid},
                         {"metrics", values},
                         {"first_relevant_rank", q.first_relevant_rank},
                         {"total_errors", q.total_errors},
                         {"topk_errors", q.topk_errors}});
  }
  json hist = json::array();
  for (const auto& b : rep.error_histogram) {
    hist.push_back({{"lo", b.lo},
                    {"hi", std::isinf(b.hi) ? json("inf") : json(b.hi)},
                    {"queries", b.queries},
                    {"query_fraction", b.query_fraction},
                    {"error_fraction", b.error_fraction}});
  }
  return {{"metrics", metrics},
          {"aggregates", ordered},
          {"num_queries", rep.queries.size()},
          {"skipped_queries", rep.skipped},
          {"topk", rep.topk},
          {"mean_total_errors", rep.mean_total_errors},
          {"mean_topk_errors", rep.mean_topk_errors},
          {"error_histogram", hist},
          {"per_query", per_query}};
}

/// One header line and one row of aggregates.
inline void write_report_csv(const MetricsReport& rep, std::ostream& out) {
  out << "num_queries";
  for (const auto& m : rep.metrics) out << ',' << m.name();
  out << ",total_errors,topk_errors\n";
  out << rep.queries.size();
  for (double v : rep.means) out << ',' << v;
  out << ',' << rep.mean_total_errors << ',' << rep.mean_topk_errors << '\n';
}

/// TREC six-column run: `qid Q0 external_id rank score tag`.
inline void write_run(const Run& run, const Corpus& corpus, std::ostream& out,
                      const std::string& tag = "dnlb") {
  char buf[64];
  for (const auto& e : run) {
    for (std::size_t r = 0; r < e.ranked.size(); ++r) {
      std::snprintf(buf, sizeof buf, "%.9g", e.ranked[r].score);
      out << e.qid << " Q0 " << corpus[e.ranked[r].id].external_id << ' '
          << (r + 1) << ' ' << buf << ' ' << tag << '\n';
    }
  }
}

inline Run parse_run(std::istream& in, const Corpus& corpus) {
  Run run;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream f(line);
    std::string qid, q0, ext, tag;
    std::size_t rank = 0;
    double sc = 0.0;
    if (!(f >> qid)) continue;
    if (!(f >> q0 >> ext >> rank >> sc >> tag)) {
      fail("run line ", lineno, ": expected 6 columns");
    }
    auto id = corpus.find(ext);
    if (!id) fail("run line ", lineno, ": unknown document '", ext, "'");
    if (run.empty() || run.back().qid != qid) run.push_back({qid, {}});
    if (rank != run.back().ranked.size() + 1) {
      fail("run line ", lineno, ": ranks must be consecutive from 1");
    }
    run.back().ranked.push_back({*id, sc});
  }
  return run;
}

}  // namespace dnlb
