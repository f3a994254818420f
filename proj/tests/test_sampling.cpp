#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "dnlb/sampling.hpp"

using namespace dnlb;

namespace {

QueryJudgments judged(std::vector<DocId> rel) {
  QueryJudgments j;
  std::sort(rel.begin(), rel.end());
  j.relevant = rel;
  for (DocId d : rel) j.graded.push_back({d, 1});
  return j;
}

SyntheticConfig small_config() {
  SyntheticConfig c;
  c.n_docs = 400;
  c.n_train_queries = 30;
  c.n_dev_queries = 10;
  c.n_topics = 40;
  c.vocab_size = 300;
  c.n_clusters = 6;
  c.cluster_terms = 30;
  return c;
}

}  // namespace

TEST(RandomNegatives, ForcedSet) {
  Rng rng(1);
  auto got = sample_random_negatives(judged({3}), 9, 10, rng);
  std::set<DocId> s(got.begin(), got.end());
  EXPECT_EQ(s, (std::set<DocId>{0, 1, 2, 4, 5, 6, 7, 8, 9}));
  EXPECT_THROW(sample_random_negatives(judged({3}), 10, 10, rng), Error);
  EXPECT_THROW(sample_random_negatives(judged({3}), 0, 10, rng), Error);
}

TEST(RandomNegatives, NeverRelevantNoDuplicates) {
  Rng rng(2);
  auto j = judged({0, 5, 6, 19});
  for (int t = 0; t < 10000; ++t) {
    auto got = sample_random_negatives(j, 4, 20, rng);
    std::set<DocId> s(got.begin(), got.end());
    ASSERT_EQ(s.size(), 4u);
    for (DocId d : got) ASSERT_FALSE(j.is_relevant(d));
  }
}

TEST(RandomNegatives, UniformChiSquare) {
  Rng rng(3);
  auto j = judged({2, 7});
  const std::size_t C = 12, n = 3, trials = 100000 / n;
  std::vector<double> counts(C, 0);
  for (std::size_t t = 0; t < trials; ++t) {
    for (DocId d : sample_random_negatives(j, n, C, rng)) ++counts[d];
  }
  const double expect = static_cast<double>(trials * n) / (C - 2);
  double chi2 = 0;
  for (DocId d = 0; d < C; ++d) {
    if (j.is_relevant(d)) {
      EXPECT_EQ(counts[d], 0);
      continue;
    }
    chi2 += (counts[d] - expect) * (counts[d] - expect) / expect;
  }
  // 9 degrees of freedom; 99.9th percentile is 27.9.
  EXPECT_LT(chi2, 27.9);
}

TEST(InBatch, DefinitionAndExclusion) {
  BatchLayout one{{{0, 10, {11, 12}}}};
  EXPECT_TRUE(in_batch_negatives(one, 0, judged({10})).empty());

  BatchLayout two{{{0, 10, {11, 12}}, {1, 20, {21, 22}}}};
  EXPECT_EQ(in_batch_negatives(two, 0, judged({10})),
            (std::vector<DocId>{20, 21, 22}));
  EXPECT_EQ(in_batch_negatives(two, 0, judged({10, 20})),
            (std::vector<DocId>{21, 22}));

  BatchLayout dup{{{0, 1, {}}, {1, 2, {3}}, {2, 3, {2}}}};
  EXPECT_EQ(in_batch_negatives(dup, 0, judged({1})), (std::vector<DocId>{2, 3}));
  EXPECT_THROW(in_batch_negatives(dup, 3, judged({1})), Error);
}

TEST(StaticPool, FiltersRelevantAndTruncates) {
  // Doc 0 scores highest, then 5, then 2.
  EmbeddingMatrix m{6, 1, {9, 1, 3, 0, -1, 4}};
  AnyIndex idx = build_exact(m);
  DualEncoderParams p = init_params(Arch::linear, 1, 1, 0, 1);
  p.query.w1 = {1.0};
  Corpus c;
  for (int i = 0; i < 6; ++i) c.add("d" + std::to_string(i), {"x"});
  Collection coll(c, 1);
  QuerySet qs;
  qs.push_back({"q", {"x"}});
  Qrels qrels;
  qrels.judgments["q"]["d0"] = 1;
  QuerySplit split(qs, qrels, coll);
  auto pool = build_static_negatives(DenseRetriever{&p, &idx}, split, 2);
  EXPECT_EQ(pool.of("q"), (std::vector<DocId>{5, 2}));
  EXPECT_EQ(pool.provenance, PoolProvenance::warmup_dense);
}

TEST(StaticPool, Bm25MatchesOracle) {
  auto d = generate_synthetic(small_config(), 2);
  Collection coll(d.corpus, 512);
  QuerySplit split(d.train, d.qrels, coll);
  Bm25Index bm(d.corpus);
  auto pool = build_static_negatives(Bm25Retriever{&bm}, split, 20);
  EXPECT_EQ(pool.provenance, PoolProvenance::bm25);
  for (std::size_t i = 0; i < split.size(); ++i) {
    auto s = bm.score_all(split.queries[i].tokens);
    std::vector<DocId> ids(s.size());
    std::iota(ids.begin(), ids.end(), 0);
    std::sort(ids.begin(), ids.end(),
              [&](DocId a, DocId b) { return ranks_before(s[a], a, s[b], b); });
    std::vector<DocId> expect;
    for (DocId id : ids) {
      if (expect.size() == 20) break;
      if (!split.judgments[i].is_relevant(id)) expect.push_back(id);
    }
    EXPECT_EQ(pool.of(split.queries[i].qid), expect);
  }
}

TEST(StaticPool, RefreshOnlyOnPeriod) {
  auto d = generate_synthetic(small_config(), 3);
  Collection coll(d.corpus, 512);
  QuerySplit split(d.train, d.qrels, coll);
  auto p = init_params(Arch::linear, 512, 8, 0, 4);
  Bm25Index bm(d.corpus);
  auto pool = build_static_negatives(Bm25Retriever{&bm}, split, 10);
  EXPECT_EQ(refresh_static(pool, p, coll, split, 7, 5), pool);
  EXPECT_EQ(refresh_static(pool, p, coll, split, 3, kNeverRefresh), pool);
  auto fresh = refresh_static(pool, p, coll, split, 10, 5);
  AnyIndex idx = build_exact(embed_all(p, Tower::doc, coll.doc_features));
  auto expect = build_static_negatives(DenseRetriever{&p, &idx}, split, 10);
  expect.step = 10;
  EXPECT_EQ(fresh, expect);
  EXPECT_THROW(refresh_static(pool, p, coll, split, 1, 0), Error);
}

TEST(DynamicHard, MatchesBruteForceAndPhiBound) {
  Rng rng(8);
  for (int t = 0; t < 30; ++t) {
    EmbeddingMatrix m{100, 4, std::vector<double>(400)};
    // Coarse values produce ties.
    for (double& x : m.values) x = static_cast<double>(rng.below(5)) - 2;
    AnyIndex idx = build_exact(m);
    std::vector<double> q{1, -1, 0.5, 2};
    std::vector<DocId> rel;
    for (int k = 0; k < 3; ++k) rel.push_back(static_cast<DocId>(rng.below(100)));
    std::sort(rel.begin(), rel.end());
    rel.erase(std::unique(rel.begin(), rel.end()), rel.end());
    auto j = judged(rel);
    const std::size_t K = 1 + rng.below(20);
    auto got = dynamic_hard_negatives(idx, q, K, j);

    auto s = score_all(idx, q);
    std::vector<DocId> ids(100);
    std::iota(ids.begin(), ids.end(), 0);
    std::sort(ids.begin(), ids.end(),
              [&](DocId a, DocId b) { return ranks_before(s[a], a, s[b], b); });
    std::vector<DocId> expect;
    std::size_t first_neg_rank = 0;
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (j.is_relevant(ids[r])) continue;
      if (expect.empty()) first_neg_rank = r + 1;
      if (expect.size() < K) expect.push_back(ids[r]);
    }
    ASSERT_EQ(got, expect);
    EXPECT_LE(first_neg_rank, rel.size() + 1);
  }
}

TEST(PoolFile, RoundTrip) {
  auto d = generate_synthetic(small_config(), 5);
  Collection coll(d.corpus, 256);
  QuerySplit split(d.train, d.qrels, coll);
  Bm25Index bm(d.corpus);
  auto pool = build_static_negatives(Bm25Retriever{&bm}, split, 7);
  pool.step = 3;
  auto dir = std::filesystem::temp_directory_path() / "dnlb_pool_test";
  std::filesystem::create_directories(dir);
  save_pool(pool, d.corpus, dir / "pool.tsv", dir / "pool.json");
  EXPECT_EQ(load_pool(d.corpus, dir / "pool.tsv", dir / "pool.json"), pool);
  std::filesystem::remove_all(dir);
}
