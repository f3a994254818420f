#pragma once

#include <vector>

#include "dnlb/common.hpp"
#include "dnlb/metrics.hpp"

namespace dnlb {

/// 1 iff the negative ranks before the positive under the canonical order
/// (higher score, or equal score and smaller id).
inline int indicator_loss(double s_pos, double s_neg, DocId id_pos,
                          DocId id_neg) {
  return ranks_before(s_neg, id_neg, s_pos, id_pos) ? 1 : 0;
}

struct PairLoss {
  double loss = 0.0;
  double d_pos = 0.0;  // dL/ds_pos
  double d_neg = 0.0;  // dL/ds_neg
};

inline double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// log(1 + exp(s_neg - s_pos)), evaluated without overflow.
inline PairLoss ranknet_loss(double s_pos, double s_neg) {
  const double x = s_neg - s_pos;
  const double loss =
      x >= 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  const double sig = logistic(x);
  return {loss, -sig, sig};
}

struct PairItem {
  DocId pos = 0;
  DocId neg = 0;
  double s_pos = 0.0;
  double s_neg = 0.0;
  double weight = 1.0;
};

/// weight * RankNet; the weight (delta metric) is a constant.
inline PairLoss lambda_loss(const PairItem& pair) {
  if (!(pair.weight >= 0.0)) fail("lambda_loss: weight must be >= 0");
  if (pair.weight == 0.0) return {};
  const PairLoss r = ranknet_loss(pair.s_pos, pair.s_neg);
  return {pair.weight * r.loss, pair.weight * r.d_pos, pair.weight * r.d_neg};
}

/// |M(after swap) - M(before)| for the documents at the two ids' positions.
inline double delta_metric(std::span<const DocId> list, DocId pos_id,
                           DocId neg_id, const MetricSpec& metric,
                           const QueryJudgments& j) {
  auto pi = std::find(list.begin(), list.end(), pos_id);
  auto ni = std::find(list.begin(), list.end(), neg_id);
  if (pi == list.end() || ni == list.end()) {
    fail("delta_metric: id ", pi == list.end() ? pos_id : neg_id,
         " missing from the candidate list");
  }
  // Positions beyond the cutoff do not change a truncated metric.
  const auto p = static_cast<std::size_t>(pi - list.begin());
  const auto n = static_cast<std::size_t>(ni - list.begin());
  if (p >= metric.cutoff && n >= metric.cutoff) return 0.0;
  const double before = metric.evaluate(list, j);
  std::vector<DocId> swapped(list.begin(), list.end());
  std::swap(swapped[p], swapped[n]);
  return std::abs(metric.evaluate(swapped, j) - before);
}

inline double delta_metric(const RankedList& list, DocId pos_id, DocId neg_id,
                           const MetricSpec& metric, const QueryJudgments& j) {
  const auto ids = ids_of(list);
  return delta_metric(std::span<const DocId>(ids), pos_id, neg_id, metric, j);
}

struct ObjectiveValue {
  double loss = 0.0;
  std::vector<PairLoss> random_terms;  // per-pair value and gradients
  std::vector<PairLoss> static_terms;
};

/// alpha * sum RankNet(random) + sum RankNet(static). Per-pair gradients
/// already include the alpha factor.
inline ObjectiveValue star_objective(const std::vector<PairItem>& random_pairs,
                                     const std::vector<PairItem>& static_pairs,
                                     double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    fail("star_objective: alpha must lie in (0, 1), got ", alpha);
  }
  ObjectiveValue v;
  for (const auto& p : random_pairs) {
    PairLoss r = ranknet_loss(p.s_pos, p.s_neg);
    r = {alpha * r.loss, alpha * r.d_pos, alpha * r.d_neg};
    v.loss += r.loss;
    v.random_terms.push_back(r);
  }
  for (const auto& p : static_pairs) {
    const PairLoss r = ranknet_loss(p.s_pos, p.s_neg);
    v.loss += r.loss;
    v.static_terms.push_back(r);
  }
  return v;
}

}  // namespace dnlb
