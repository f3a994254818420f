#pragma once

#include <string>
#include <vector>

#include "dnlb/common.hpp"
#include "dnlb/corpus.hpp"

namespace dnlb {

// Truncated ranking metrics over a list of ids in rank order.

inline double mrr_at_k(std::span<const DocId> ranked,
                       const QueryJudgments& j, std::size_t k) {
  const std::size_t n = std::min(k, ranked.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (j.is_relevant(ranked[i])) return 1.0 / static_cast<double>(i + 1);
  }
  return 0.0;
}

inline double recall_at_k(std::span<const DocId> ranked,
                          const QueryJudgments& j, std::size_t k) {
  if (j.relevant.empty()) return 0.0;
  const std::size_t n = std::min(k, ranked.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) hits += j.is_relevant(ranked[i]);
  return static_cast<double>(hits) / static_cast<double>(j.relevant.size());
}

enum class Gain { exponential, linear };

inline double gain_of(int grade, Gain gain) {
  if (grade <= 0) return 0.0;
  return gain == Gain::exponential ? std::exp2(grade) - 1.0
                                   : static_cast<double>(grade);
}

inline double ndcg_at_k(std::span<const DocId> ranked, const QueryJudgments& j,
                        std::size_t k, Gain gain = Gain::exponential) {
  std::vector<double> ideal;
  for (const auto& [id, grade] : j.graded) ideal.push_back(gain_of(grade, gain));
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) {
    idcg += ideal[i] / std::log2(static_cast<double>(i) + 2.0);
  }
  if (idcg == 0.0) return 0.0;
  double dcg = 0.0;
  const std::size_t n = std::min(k, ranked.size());
  for (std::size_t i = 0; i < n; ++i) {
    const double g = gain_of(j.grade(ranked[i]), gain);
    if (g != 0.0) dcg += g / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg / idcg;
}

inline std::vector<DocId> ids_of(const RankedList& list) {
  std::vector<DocId> ids(list.size());
  for (std::size_t i = 0; i < list.size(); ++i) ids[i] = list[i].id;
  return ids;
}

enum class MetricKind { mrr, ndcg, recall };

struct MetricSpec {
  MetricKind kind = MetricKind::mrr;
  std::size_t cutoff = 10;

  std::string name() const {
    const char* base = kind == MetricKind::mrr    ? "mrr"
                       : kind == MetricKind::ndcg ? "ndcg"
                                                  : "r";
    return std::string(base) + "@" + std::to_string(cutoff);
  }

  double evaluate(std::span<const DocId> ranked, const QueryJudgments& j,
                  Gain gain = Gain::exponential) const {
    switch (kind) {
      case MetricKind::mrr: return mrr_at_k(ranked, j, cutoff);
      case MetricKind::ndcg: return ndcg_at_k(ranked, j, cutoff, gain);
      case MetricKind::recall: return recall_at_k(ranked, j, cutoff);
    }
    return 0.0;
  }

  friend bool operator==(const MetricSpec&, const MetricSpec&) = default;
};

inline constexpr const char* kValidMetricNames = "mrr@N, ndcg@N, r@N (N >= 1)";

/// Parses names such as "mrr@10", "ndcg@10", "r@100".
inline MetricSpec parse_metric(const std::string& name) {
  const auto at = name.find('@');
  auto bad = [&]() -> MetricSpec {
    fail("unknown metric '", name, "'; valid metrics: ", kValidMetricNames);
  };
  if (at == std::string::npos) return bad();
  const std::string base = name.substr(0, at);
  const std::string num = name.substr(at + 1);
  if (num.empty() ||
      !std::all_of(num.begin(), num.end(),
                   [](char c) { return c >= '0' && c <= '9'; })) {
    return bad();
  }
  MetricSpec m;
  m.cutoff = std::stoul(num);
  if (m.cutoff == 0) return bad();
  if (base == "mrr") m.kind = MetricKind::mrr;
  else if (base == "ndcg") m.kind = MetricKind::ndcg;
  else if (base == "r" || base == "recall") m.kind = MetricKind::recall;
  else return bad();
  return m;
}

}  // namespace dnlb
