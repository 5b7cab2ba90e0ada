#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "headgest/metrics.hpp"
#include "oracles.hpp"

using namespace headgest;

namespace {

ClusterSequence random_sequence(std::mt19937_64& rng, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::uniform_int_distribution<int> cl(1, 9);
  ClusterSequence s;
  for (std::size_t i = 0, n = len(rng); i < n; ++i) s.emplace_back(cl(rng));
  return s;
}

const ClusterSequence kA = make_sequence({8, 4, 2});
const ClusterSequence kP = make_sequence({7, 5, 1});
const ClusterSequence kQ = make_sequence({9, 5, 3});

}  // namespace

TEST(Accuracy, Examples) {
  const auto a = make_sequence({5, 3, 4}), b = make_sequence({5, 3});
  EXPECT_DOUBLE_EQ(exact_accuracy({a, b}, {a, a}), 0.5);
  EXPECT_DOUBLE_EQ(exact_accuracy({a, a}, {a, a}), 1.0);
  EXPECT_DOUBLE_EQ(exact_accuracy({b}, {a}), 0.0);
  EXPECT_THROW(exact_accuracy({a}, {a, a}), LengthMismatch);
  EXPECT_THROW(exact_accuracy({}, {}), LengthMismatch);
}

TEST(Dtw, PointDistances) {
  EXPECT_DOUBLE_EQ(dtw(make_sequence({1}), make_sequence({9})), 2 * std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(dtw(make_sequence({1}), make_sequence({2})), 1.0);
  EXPECT_DOUBLE_EQ(mdtw(make_sequence({4}), make_sequence({6})), 2.0);
  EXPECT_THROW(dtw({}, make_sequence({1})), LengthMismatch);
}

TEST(Dtw, IdentityNonNegativitySymmetry) {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_sequence(rng, 8), b = random_sequence(rng, 8);
    EXPECT_EQ(dtw(a, a), 0.0);
    EXPECT_EQ(mdtw(a, a), 0.0);
    EXPECT_GE(dtw(a, b), 0.0);
    EXPECT_GE(mdtw(a, b), 0.0);
    EXPECT_NEAR(dtw(a, b), dtw(b, a), 1e-12);
    EXPECT_NEAR(mdtw(a, b), mdtw(b, a), 1e-12);
  }
}

TEST(Dtw, ZeroDirectionalWeightIsPlainDtw) {
  std::mt19937_64 rng(22);
  for (int i = 0; i < 100; ++i) {
    const auto a = random_sequence(rng, 7), b = random_sequence(rng, 7);
    EXPECT_EQ(mdtw(a, b, {1.0, 0.0}), dtw(a, b));
  }
}

TEST(Dtw, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 300; ++i) {
    const auto a = random_sequence(rng, 6), b = random_sequence(rng, 6);
    EXPECT_NEAR(dtw(a, b), oracle::mdtw_exhaustive(a, b, 1.0, 0.0), 1e-12);
    for (double wd : {0.1, 1.0, 2.0}) {
      EXPECT_NEAR(mdtw(a, b, {1.0, wd}), oracle::mdtw_exhaustive(a, b, 1.0, wd), 1e-12);
    }
  }
}

TEST(Mdtw, DirectionAwareOrdering) {
  EXPECT_NEAR(dtw(kA, kP), dtw(kA, kQ), 1e-12);
  for (double wd : {0.1, 0.5, 1.0, 2.0}) {
    EXPECT_LT(mdtw(kA, kQ, {1.0, wd}), mdtw(kA, kP, {1.0, wd})) << "w_dir " << wd;
  }
}

TEST(Mdtw, ConfigValidation) {
  EXPECT_THROW(mdtw(kA, kP, {0.0, 0.0}), InvalidConfig);
  EXPECT_THROW(mdtw(kA, kP, {-1.0, 1.0}), InvalidConfig);
  EXPECT_NO_THROW(mdtw(kA, kP, {0.0, 1.0}));
}

TEST(Mdtw, StepDirections) {
  const auto d = step_directions(grid_points(make_sequence({1, 3, 3, 9})));
  EXPECT_EQ(d[0].x, 0);
  EXPECT_EQ(d[0].y, 0);
  EXPECT_EQ(d[1].x, 1);
  EXPECT_EQ(d[1].y, 0);
  EXPECT_EQ(d[2].x, 0);
  EXPECT_EQ(d[2].y, 0);
  EXPECT_EQ(d[3].y, 1);
}
