#include <gtest/gtest.h>

#include <set>

#include "dnlb/common.hpp"

using namespace dnlb;

TEST(Ranking, HigherScoreFirstThenLowerId) {
  EXPECT_TRUE(ranks_before(2.0, 9, 1.0, 0));
  EXPECT_FALSE(ranks_before(1.0, 0, 2.0, 9));
  EXPECT_TRUE(ranks_before(1.0, 3, 1.0, 4));
  EXPECT_FALSE(ranks_before(1.0, 4, 1.0, 3));
  EXPECT_FALSE(ranks_before(1.0, 4, 1.0, 4));
}

TEST(Ranking, TopKMatchesFullSortPrefix) {
  Rng rng(3);
  std::vector<double> s(300);
  // Coarse values force many ties.
  for (auto& x : s) x = static_cast<double>(rng.below(20));
  RankedList all;
  for (std::size_t i = 0; i < s.size(); ++i) all.push_back({DocId(i), s[i]});
  std::sort(all.begin(), all.end(),
            [](const ScoredDoc& a, const ScoredDoc& b) { return ranks_before(a, b); });
  for (std::size_t k : {1u, 7u, 50u, 300u, 1000u}) {
    auto top = top_k_from_scores(s, k);
    ASSERT_EQ(top.size(), std::min<std::size_t>(k, s.size()));
    for (std::size_t i = 0; i < top.size(); ++i) EXPECT_EQ(top[i], all[i]);
  }
}

TEST(Dot, Basics) {
  std::vector<double> a{1, 2}, b{3, 4};
  EXPECT_DOUBLE_EQ(dot(a, b), 11.0);
  std::vector<double> c{1, 2, 3};
  EXPECT_THROW(dot(a, c), Error);
}

TEST(Rng, DeterministicPerSeed) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    EXPECT_EQ(x, b.next());
    differs |= x != c.next();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformInUnitInterval) {
  Rng r(1);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(Rng, BelowCoversRangeRoughlyEvenly) {
  Rng r(5);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) ++counts[r.below(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
  EXPECT_THROW(r.below(0), Error);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng r(9);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  r.shuffle(v);
  std::set<int> s(v.begin(), v.end());
  EXPECT_EQ(s.size(), 50u);
}

TEST(Rng, QueryStreamsIndependentOfCallOrder) {
  auto a1 = query_stream(1, "q1", 5).next();
  auto b = query_stream(1, "q2", 5).next();
  auto a2 = query_stream(1, "q1", 5).next();
  EXPECT_EQ(a1, a2);
  EXPECT_NE(a1, b);
  EXPECT_NE(a1, query_stream(1, "q1", 6).next());
  EXPECT_NE(a1, query_stream(2, "q1", 5).next());
}

TEST(Fnv1a, KnownVectors) {
  // Published FNV-1a 64-bit test values.
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(Finite, DetectsNanAndInf) {
  std::vector<double> ok{1, 2}, bad{1, std::nan("")}, inf{HUGE_VAL};
  EXPECT_TRUE(all_finite(ok));
  EXPECT_FALSE(all_finite(bad));
  EXPECT_FALSE(all_finite(inf));
}
