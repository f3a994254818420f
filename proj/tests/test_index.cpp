#include <gtest/gtest.h>

#include <sstream>

#include "dnlb/index.hpp"

using namespace dnlb;

namespace {

EmbeddingMatrix random_matrix(std::size_t rows, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  EmbeddingMatrix m{rows, dim, std::vector<double>(rows * dim)};
  for (double& x : m.values) x = rng.uniform(-1, 1);
  return m;
}

// Every row is one of `distinct` prototypes, so k_c >= distinct
// quantizes without loss.
EmbeddingMatrix few_distinct(std::size_t rows, std::size_t dim,
                             std::size_t distinct, std::uint64_t seed) {
  auto protos = random_matrix(distinct, dim, seed);
  EmbeddingMatrix m{rows, dim, std::vector<double>(rows * dim)};
  Rng rng(seed + 1);
  for (std::size_t i = 0; i < rows; ++i) {
    auto src = protos.row(rng.below(distinct));
    // Store float-exact values so the index cannot round them.
    for (std::size_t j = 0; j < dim; ++j) m.row(i)[j] = static_cast<float>(src[j]);
  }
  return m;
}

}  // namespace

TEST(ExactIndex, SearchMatchesBruteForce) {
  auto m = random_matrix(200, 8, 1);
  auto idx = build_exact(m);
  std::vector<double> q{0.3, -0.2, 0.9, 0.1, 0, 0.5, -0.7, 0.2};
  auto top = search_exact(idx, q, 10);
  ASSERT_EQ(top.size(), 10u);
  std::vector<double> s(200);
  for (std::size_t i = 0; i < 200; ++i) {
    double v = 0;
    for (std::size_t j = 0; j < 8; ++j) v += q[j] * static_cast<float>(m.row(i)[j]);
    s[i] = v;
  }
  auto expect = top_k_from_scores(s, 10);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(top[i].id, expect[i].id);
    EXPECT_NEAR(top[i].score, expect[i].score, 1e-12);
  }
}

TEST(ExactIndex, TiesBreakByLowerId) {
  EmbeddingMatrix m{3, 1, {1.0, 1.0, 1.0}};
  auto top = search_exact(build_exact(m), std::vector<double>{2.0}, 3);
  EXPECT_EQ(ids_of(top), (std::vector<DocId>{0, 1, 2}));
}

TEST(PQ, PerfectCodebookReconstructsAndScoresExactly) {
  auto m = few_distinct(300, 8, 12, 4);
  for (std::size_t M : {1u, 2u, 4u, 8u}) {
    auto cb = train_pq(m, M, 16, 25, 7);
    auto pq = build_pq(cb, m);
    for (std::size_t i = 0; i < m.rows; ++i) {
      auto r = reconstruct(pq, i);
      for (std::size_t j = 0; j < m.dim; ++j) ASSERT_EQ(r[j], m.row(i)[j]);
    }
    std::vector<double> q{1, -2, 0.5, 0.25, 3, -1, 0, 2};
    auto exact = score_all(build_exact(m), q);
    auto approx = score_all(pq, q);
    for (std::size_t i = 0; i < m.rows; ++i) EXPECT_NEAR(exact[i], approx[i], 1e-9);
  }
}

TEST(PQ, KmeansObjectiveNeverIncreases) {
  for (std::uint64_t seed : {1, 2, 3}) {
    auto m = random_matrix(500, 16, seed);
    std::vector<double> trace;
    train_pq(m, 4, 32, 30, seed, &trace);
    ASSERT_GE(trace.size(), 2u);
    for (std::size_t i = 1; i < trace.size(); ++i) {
      EXPECT_LE(trace[i], trace[i - 1] * (1 + 1e-12)) << "round " << i;
    }
  }
}

TEST(PQ, AdcScoreEqualsScoreOfReconstruction) {
  auto m = random_matrix(400, 8, 2);
  auto pq = build_pq(train_pq(m, 4, 16, 10, 3), m);
  std::vector<double> q{0.1, 0.2, -0.3, 0.4, -0.5, 0.6, 0.7, -0.8};
  auto s = score_all(pq, q);
  for (std::size_t i = 0; i < m.rows; i += 37) {
    EXPECT_NEAR(s[i], dot(reconstruct(pq, i), q), 1e-9);
  }
}

TEST(PQ, RejectsBadParameters) {
  auto m = random_matrix(10, 6, 1);
  EXPECT_THROW(train_pq(m, 4, 4, 5, 1), Error);
  EXPECT_THROW(train_pq(m, 3, 0, 5, 1), Error);
  EXPECT_THROW(train_pq(m, 3, 257, 5, 1), Error);
  EXPECT_THROW(train_pq(m, 3, 11, 5, 1), Error);
}

TEST(IndexFile, RoundTripAndSizes) {
  auto m = random_matrix(100, 8, 5);
  AnyIndex exact = build_exact(m);
  std::stringstream eb;
  save_index(exact, eb);
  const std::size_t header = 4 + 4 + 4 + 8 + 4 + 4 + 4;
  EXPECT_EQ(eb.str().size(), header + 100 * 8 * 4);
  auto e2 = load_index(eb);
  EXPECT_EQ(std::get<ExactIndex>(e2).data, std::get<ExactIndex>(exact).data);

  AnyIndex pq = build_index(m, IndexSpec{true, 4, 16, 10}, 1);
  std::stringstream pb;
  save_index(pq, pb);
  EXPECT_EQ(pb.str().size(), header + 4 * 16 * 2 * 4 + 100 * 4);
  auto p2 = load_index(pb);
  EXPECT_EQ(std::get<PQIndex>(p2).codes, std::get<PQIndex>(pq).codes);
  EXPECT_EQ(std::get<PQIndex>(p2).codebook.centroids,
            std::get<PQIndex>(pq).codebook.centroids);
}

TEST(IndexFile, RejectsCorruption) {
  auto m = random_matrix(20, 4, 5);
  std::stringstream buf;
  save_index(build_index(m, IndexSpec{true, 2, 4, 5}, 1), buf);
  std::string s = buf.str();
  std::stringstream trunc(s.substr(0, s.size() - 1));
  EXPECT_THROW(load_index(trunc), Error);
  std::string bad = s;
  bad.back() = 100;  // code past k_c
  std::stringstream badcode(bad);
  EXPECT_THROW(load_index(badcode), Error);
  std::stringstream magic("ABCD" + s.substr(4));
  EXPECT_THROW(load_index(magic), Error);
}
