#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "headgest/net.hpp"
#include "headgest/optim.hpp"
#include "oracles.hpp"

using namespace headgest;

namespace {

GruDirection random_direction(std::mt19937_64& rng, int in, int H, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  GruDirection d{Eigen::MatrixXd(3 * H, in), Eigen::MatrixXd(3 * H, H), Eigen::VectorXd(3 * H)};
  for (Eigen::Index k = 0; k < d.W.size(); ++k) d.W.data()[k] = u(rng);
  for (Eigen::Index k = 0; k < d.U.size(); ++k) d.U.data()[k] = u(rng);
  for (Eigen::Index k = 0; k < d.b.size(); ++k) d.b[k] = u(rng);
  return d;
}

}  // namespace

TEST(Gru, ZeroInputZeroWeightsIsFixedPoint) {
  GruDirection d{Eigen::MatrixXd::Zero(12, 5), Eigen::MatrixXd::Zero(12, 4), Eigen::VectorXd::Zero(12)};
  const auto h = gru_cell(Eigen::VectorXd::Zero(5), Eigen::VectorXd::Zero(4), d);
  EXPECT_TRUE(h.isZero());
}

TEST(Gru, StateStaysInUnitBox) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 100; ++i) {
    const auto d = random_direction(rng, 6, 5, 3.0);
    Eigen::VectorXd h = Eigen::VectorXd::NullaryExpr(5, [&] { return u(rng); });
    for (int t = 0; t < 10; ++t) {
      h = gru_cell(Eigen::VectorXd::NullaryExpr(6, [&] { return 10 * u(rng); }), h, d);
      EXPECT_LE(h.cwiseAbs().maxCoeff(), 1.0);
    }
  }
}

TEST(Gru, MatchesElementwiseReference) {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 50; ++i) {
    const auto d = random_direction(rng, 7, 4);
    const Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(7, [&] { return u(rng); });
    const Eigen::VectorXd h = Eigen::VectorXd::NullaryExpr(4, [&] { return u(rng); });
    EXPECT_TRUE(gru_cell(x, h, d).isApprox(oracle::gru_step_reference(x, h, d), 1e-12));
  }
}

TEST(Gru, ShapeMismatch) {
  std::mt19937_64 rng(33);
  const auto d = random_direction(rng, 7, 4);
  EXPECT_THROW(gru_cell(Eigen::VectorXd::Zero(6), Eigen::VectorXd::Zero(4), d), ShapeMismatch);
  EXPECT_THROW(gru_cell(Eigen::VectorXd::Zero(7), Eigen::VectorXd::Zero(3), d), ShapeMismatch);
}

TEST(Net, ConfigPresets) {
  EXPECT_EQ(NetConfig::full().num_layers, 20);
  EXPECT_EQ(NetConfig::full().hidden, 512);
  EXPECT_EQ(NetConfig::desk().num_layers, 2);
  EXPECT_EQ(NetConfig::desk().hidden, 64);
  NetConfig bad;
  bad.classes = 9;
  EXPECT_THROW(bad.validate(), InvalidConfig);
  bad = NetConfig{};
  bad.hidden = 0;
  EXPECT_THROW(ModelParams::init(bad, 1), InvalidConfig);
}

TEST(Net, ParameterCount) {
  const auto p = ModelParams::init(NetConfig::desk(), 1);
  const std::size_t H = 64;
  const std::size_t per_dir_l0 = 3 * H * 198 + 3 * H * H + 3 * H;
  const std::size_t per_dir_l1 = 3 * H * H + 3 * H * H + 3 * H;
  EXPECT_EQ(parameter_count(p), 2 * per_dir_l0 + 2 * per_dir_l1 + 2 * H + 10 * H + 10);
}

TEST(Net, InitIsSeededAndBounded) {
  const auto a = ModelParams::init(NetConfig::desk(), 7), b = ModelParams::init(NetConfig::desk(), 7);
  const auto c = ModelParams::init(NetConfig::desk(), 8);
  EXPECT_EQ(a.layers[0].fwd.W, b.layers[0].fwd.W);
  EXPECT_NE(a.layers[0].fwd.W, c.layers[0].fwd.W);
  EXPECT_LE(a.layers[1].bwd.U.cwiseAbs().maxCoeff(), 1.0 / 8.0);
  EXPECT_TRUE(a.layers[0].fwd.b.isZero());
  EXPECT_TRUE(a.bn.gain.isOnes());
}

TEST(Net, ForwardShapesAndNormalisation) {
  std::mt19937_64 rng(34);
  const auto p = ModelParams::init(NetConfig::desk(), 3);
  const std::vector<Eigen::MatrixXd> inputs{oracle::random_embedding(rng, 7), oracle::random_embedding(rng, 4)};
  for (bool training : {true, false}) {
    const auto fr = forward(p, inputs, training);
    ASSERT_EQ(fr.logprobs.size(), 2u);
    EXPECT_EQ(fr.logprobs[0].rows(), 7);
    EXPECT_EQ(fr.logprobs[1].rows(), 4);
    for (const auto& lp : fr.logprobs) {
      EXPECT_EQ(lp.cols(), 10);
      for (Eigen::Index t = 0; t < lp.rows(); ++t) EXPECT_NEAR(lp.row(t).array().exp().sum(), 1.0, 1e-12);
    }
  }
  EXPECT_THROW(forward(p, {Eigen::MatrixXd::Zero(3, 100)}, false), ShapeMismatch);
}

// With both directions sharing weights, reversing time reverses the output.
TEST(Net, TimeReversalWithTiedDirections) {
  std::mt19937_64 rng(35);
  auto p = oracle::small_net(2, 6, 9);
  for (auto& l : p.layers) l.bwd = l.fwd;
  const Eigen::MatrixXd x = oracle::random_embedding(rng, 6);
  const Eigen::MatrixXd xr = x.colwise().reverse();
  const auto a = infer(p, x), b = infer(p, xr);
  EXPECT_TRUE(a.isApprox(b.colwise().reverse(), 1e-12));
}

TEST(Net, EvalModeSamplesAreIndependent) {
  std::mt19937_64 rng(36);
  const auto p = oracle::small_net(2, 8, 4);
  const std::vector<Eigen::MatrixXd> inputs{oracle::random_embedding(rng, 5), oracle::random_embedding(rng, 9),
                                            oracle::random_embedding(rng, 2)};
  const auto batched = forward(p, inputs, false, 2);
  for (std::size_t i = 0; i < inputs.size(); ++i) EXPECT_TRUE(batched.logprobs[i].isApprox(infer(p, inputs[i]), 1e-13));
}

TEST(Net, TrainingBatchNormStatistics) {
  std::mt19937_64 rng(37);
  const auto p = oracle::small_net(1, 5, 2);
  const std::vector<Eigen::MatrixXd> inputs{oracle::random_embedding(rng, 6), oracle::random_embedding(rng, 4)};
  const auto fr = forward(p, inputs, true);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(5), sq = Eigen::VectorXd::Zero(5);
  for (const auto& s : fr.cache.samples) {
    sum += s.normalized.rowwise().sum();
    sq += s.normalized.array().square().rowwise().sum().matrix();
  }
  EXPECT_EQ(fr.cache.frames, 10);
  EXPECT_LT((sum / 10).cwiseAbs().maxCoeff(), 1e-12);
  for (Eigen::Index k = 0; k < 5; ++k) {
    const double var = fr.cache.var[k];
    EXPECT_NEAR(sq[k] / 10, var / (var + BatchNormParams::eps), 1e-9);
  }
}

TEST(Net, RunningStatsUseMomentumAndUnbiasedVariance) {
  std::mt19937_64 rng(38);
  auto p = oracle::small_net(1, 3, 5);
  const std::vector<Eigen::MatrixXd> inputs{oracle::random_embedding(rng, 4)};
  const auto fr = forward(p, inputs, true);
  update_running_stats(p, fr.cache);
  EXPECT_TRUE(p.bn.running_mean.isApprox(0.1 * fr.cache.mean, 1e-12));
  const Eigen::VectorXd expect = 0.9 * Eigen::VectorXd::Ones(3) + 0.1 * fr.cache.var * (4.0 / 3.0);
  EXPECT_TRUE(p.bn.running_var.isApprox(expect, 1e-12));
  const auto before = p.bn.running_mean;
  update_running_stats(p, forward(p, inputs, false).cache);
  EXPECT_EQ(p.bn.running_mean, before);
}

TEST(Net, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(39);
  const auto p = oracle::small_net(1, 4, 11);
  const std::vector<Eigen::MatrixXd> inputs{oracle::random_embedding(rng, 3), oracle::random_embedding(rng, 3)};
  const std::vector<ClusterSequence> targets{make_sequence({5, 3}), make_sequence({2})};
  const auto checks = oracle::gradient_check(p, inputs, targets);
  ASSERT_EQ(checks.size(), 10u);
  for (const auto& c : checks) EXPECT_LT(c.rel_error, 1e-4) << c.name;
}

TEST(Net, BackwardTwoLayersMatchesFiniteDifferences) {
  std::mt19937_64 rng(40);
  const auto p = oracle::small_net(2, 3, 12);
  const std::vector<Eigen::MatrixXd> inputs{oracle::random_embedding(rng, 4), oracle::random_embedding(rng, 2),
                                            oracle::random_embedding(rng, 3)};
  const std::vector<ClusterSequence> targets{make_sequence({1, 1}), make_sequence({9}), make_sequence({4, 7})};
  for (const auto& c : oracle::gradient_check(p, inputs, targets)) EXPECT_LT(c.rel_error, 1e-4) << c.name;
}

TEST(Net, ThreadedBackwardEqualsSerial) {
  std::mt19937_64 rng(41);
  const auto p = oracle::small_net(2, 6, 13);
  std::vector<Eigen::MatrixXd> inputs, dl;
  for (int i = 0; i < 5; ++i) {
    inputs.push_back(oracle::random_embedding(rng, 3 + i));
    dl.push_back(oracle::random_logprobs(rng, 3 + i, 10));
  }
  const auto fr = forward(p, inputs, true, 1);
  const auto g1 = backward(p, fr.cache, dl, 1);
  const auto g3 = backward(p, forward(p, inputs, true, 3).cache, dl, 3);
  zip_trainable([](const std::string& name, const auto& a, const auto& b) { EXPECT_TRUE(a.isApprox(b, 1e-12)) << name; },
                g1, g3);
}

TEST(Net, ZeroUpstreamGivesZeroGradients) {
  std::mt19937_64 rng(42);
  const auto p = oracle::small_net(2, 4, 14);
  const std::vector<Eigen::MatrixXd> inputs{oracle::random_embedding(rng, 5)};
  const auto fr = forward(p, inputs, true);
  const auto g = backward(p, fr.cache, {Eigen::MatrixXd::Zero(5, 10)});
  EXPECT_EQ(global_norm(g), 0.0);
  EXPECT_THROW(backward(p, fr.cache, {}), ShapeMismatch);
  EXPECT_THROW(backward(p, fr.cache, {Eigen::MatrixXd::Zero(4, 10)}), ShapeMismatch);
}

TEST(Net, Subsample) {
  const Eigen::MatrixXd m = Eigen::VectorXd::LinSpaced(25, 0, 24);
  const auto s = subsample(m, 10);
  ASSERT_EQ(s.rows(), 3);
  EXPECT_EQ(s(0, 0), 0);
  EXPECT_EQ(s(1, 0), 10);
  EXPECT_EQ(s(2, 0), 20);
  EXPECT_EQ(subsample(m, 1), m);
  EXPECT_EQ(subsample(m.topRows(10), 10).rows(), 1);
  EXPECT_THROW(subsample(m, 0), InvalidConfig);
}
