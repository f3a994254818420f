#pragma once

#include <vector>

#include "dnlb/corpus.hpp"

namespace dnlb {

/// A corpus with its hashed document features.
struct Collection {
  Corpus corpus;
  std::uint32_t H = 1;
  std::vector<FeatureVector> doc_features;

  Collection() = default;
  Collection(Corpus c, std::uint32_t hash_dim) : corpus(std::move(c)), H(hash_dim) {
    doc_features.reserve(corpus.size());
    for (const auto& d : corpus.documents()) {
      doc_features.push_back(hash_features(d.tokens, H));
    }
  }

  std::size_t size() const { return corpus.size(); }
};

/// Queries with features and judgments resolved against a collection.
struct QuerySplit {
  QuerySet queries;
  std::vector<FeatureVector> features;
  std::vector<QueryJudgments> judgments;

  QuerySplit() = default;
  QuerySplit(QuerySet qs, const Qrels& qrels, const Collection& c)
      : queries(std::move(qs)) {
    features.reserve(queries.size());
    judgments.reserve(queries.size());
    for (const auto& q : queries) {
      features.push_back(hash_features(q.tokens, c.H));
      judgments.push_back(resolve(qrels, q.qid, c.corpus));
    }
  }

  std::size_t size() const { return queries.size(); }
};

}  // namespace dnlb
