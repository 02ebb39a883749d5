#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "bdci/nn.hpp"
#include "bdci/random.hpp"
#include "test_util.hpp"

using namespace bdci;
using namespace bdci::nn;

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

MLP random_net(int in, std::uint64_t seed) {
  MLP m = MLP::standard(in);
  Rng rng(seed);
  init_parameters(m, rng);
  // Non-trivial head so both outputs carry gradient.
  m.bias(m.num_layers() - 1)(0) = 0.2;
  m.bias(m.num_layers() - 1)(1) = -0.5;
  return m;
}

std::vector<double> random_input(int in, Rng& rng) {
  std::vector<double> x(in);
  for (double& v : x) v = rng.uniform();
  return x;
}

double sample_loss(const MLP& m, std::span<const double> x, double t) {
  const Output o = forward(m, x);
  return nll_loss(o.mu, o.log_sigma, t);
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::Io;
}

}  // namespace

TEST(Mlp, ParameterCounts) {
  // in*128+128 + 5*(128*128+128) + 128*2+2
  EXPECT_EQ(MLP::standard(8).parameter_count(), 83970u);
  EXPECT_EQ(MLP::standard(9).parameter_count(), 84098u);
  EXPECT_EQ(MLP::standard(8).layer_dims(), (std::vector<int>{8, 128, 128, 128, 128, 128, 128, 2}));
}

TEST(Forward, ZeroNetworkAndBiasPassthrough) {
  MLP m = MLP::standard(8);
  const std::vector<double> x(8, 0.7);
  Output o = forward(m, x);
  EXPECT_EQ(o.mu, 0.0);
  EXPECT_EQ(o.log_sigma, 0.0);
  EXPECT_EQ(sigma_from(o.log_sigma), 1.0);
  m.bias(m.num_layers() - 1) << 0.3, -1.0;
  o = forward(m, x);
  EXPECT_EQ(o.mu, 0.3);
  EXPECT_EQ(o.log_sigma, -1.0);
  EXPECT_EQ(code_of([&] { forward(m, std::vector<double>(9, 0.0)); }), ErrorCode::DimensionMismatch);
}

TEST(Forward, DeadUnit) {
  MLP m({1, 1, 2});
  m.weights(0)(0, 0) = 1.0;
  m.bias(0)(0) = -5.0;  // pre-activation -5 + x for x in [0, 1]
  m.weights(1)(0, 0) = 3.0;
  m.weights(1)(1, 0) = 4.0;
  m.bias(1) << 0.25, -0.75;
  const double x[1] = {1.0};
  const Output o = forward(m, x);
  EXPECT_EQ(o.mu, 0.25);
  EXPECT_EQ(o.log_sigma, -0.75);
}

TEST(Forward, LogSigmaClamp) {
  EXPECT_EQ(sigma_from(-50.0), std::exp(-10.0));
  EXPECT_EQ(sigma_from(50.0), std::exp(5.0));
  EXPECT_EQ(sigma_from(-50.0, {-20.0, 1.0}), std::exp(-20.0));
}

TEST(Nll, Values) {
  EXPECT_NEAR(nll_loss(0, 0, 0), 0.918939, 1e-6);
  EXPECT_NEAR(nll_loss(0, 0, 1), 1.418939, 1e-6);
  EXPECT_NEAR(nll_loss(2, std::log(2.0), 2), 1.612086, 1e-6);
  EXPECT_NEAR(nll_loss(0, 0, 0), kHalfLog2Pi, 1e-15);
}

TEST(Nll, IsANormalizedDensity) {
  for (auto [mu, ls] : {std::pair{0.0, 0.0}, {1.5, -1.2}, {-3.0, 0.8}}) {
    const double s = std::exp(ls);
    const double mass = bdci::testing::composite_simpson(
        [&](double t) { return std::exp(-nll_loss(mu, ls, t)); }, mu - 12 * s, mu + 12 * s, 20000);
    EXPECT_NEAR(mass, 1.0, 1e-6);
  }
}

TEST(Backward, ZeroNetworkAtOrigin) {
  const MLP m = MLP::standard(8);
  const std::vector<double> x(8, 0.5);
  const auto g = backward(m, x, 0.0);
  const std::size_t head = m.bias_offset(m.num_layers() - 1);
  EXPECT_EQ(g[head], 0.0);
  EXPECT_EQ(g[head + 1], 1.0);
}

class GradientCheck : public ::testing::TestWithParam<int> {};

TEST_P(GradientCheck, MatchesCentralDifferences) {
  const int in = GetParam();
  MLP m = random_net(in, 100 + in);
  Rng rng(7 + in);
  const auto x = random_input(in, rng);
  const double target = 0.37;
  const auto g = backward(m, x, target);
  const double h = 1e-4;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    const std::size_t begin = m.weight_offset(l);
    const std::size_t end = m.bias_offset(l) + static_cast<std::size_t>(m.layer_dims()[l + 1]);
    for (int k = 0; k < 50; ++k) {
      const std::size_t i = begin + rng.index(end - begin);
      double& p = m.parameters()[i];
      const double keep = p;
      p = keep + h;
      const double up = sample_loss(m, x, target);
      p = keep - h;
      const double down = sample_loss(m, x, target);
      p = keep;
      const double fd = (up - down) / (2 * h);
      EXPECT_LE(std::abs(fd - g[i]), std::max(1e-6, 1e-4 * std::max(std::abs(fd), std::abs(g[i]))))
          << "layer " << l << " param " << i;
    }
  }
}

INSTANTIATE_TEST_SUITE_P(BothInputWidths, GradientCheck, ::testing::Values(8, 9));

TEST(Backward, BatchGradientIsMeanOfSamples) {
  const MLP m = random_net(9, 3);
  Rng rng(4);
  const auto x1 = random_input(9, rng), x2 = random_input(9, rng);
  const auto g1 = backward(m, x1, 0.1), g2 = backward(m, x2, 0.9);
  Workspace ws;
  ws.act.resize(1);
  ws.act[0].resize(9, 2);
  for (int i = 0; i < 9; ++i) {
    ws.act[0](i, 0) = x1[i];
    ws.act[0](i, 1) = x2[i];
  }
  std::vector<double> g(m.parameter_count());
  const double t[2] = {0.1, 0.9};
  loss_and_gradient(m, ws, t, g);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(g[i], 0.5 * (g1[i] + g2[i]), 1e-12);
}

TEST(Backward, ClampedLogSigmaHasNoGradient) {
  MLP m = MLP::standard(8);
  m.bias(m.num_layers() - 1)(1) = -12.0;
  const std::vector<double> x(8, 0.5);
  const auto g = backward(m, x, 0.0, kDefaultClamp);
  EXPECT_EQ(g[m.bias_offset(m.num_layers() - 1) + 1], 0.0);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  MLP m = random_net(8, 9);
  const MLP before = m;
  AdamState st(m.parameter_count());
  const std::vector<double> g(m.parameter_count(), 0.0);
  adam_step(m, g, st, 1e-3);
  EXPECT_TRUE(m == before);
}

TEST(Adam, FirstStepIsLearningRateTimesSign) {
  MLP m({1, 2});  // four parameters
  AdamState st(m.parameter_count());
  const std::vector<double> g = {0.3, -2.0, 1e-3, -7.5};
  adam_step(m, g, st, 0.01);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_NEAR(m.parameters()[i], -0.01 * (g[i] > 0 ? 1 : -1), 1e-7);
}

TEST(Adam, DuplicatedSamplesMatchSingleSampleSteps) {
  const MLP start = random_net(8, 10);
  Rng rng(11);
  const auto x = random_input(8, rng);
  auto run = [&](int copies) {
    MLP m = start;
    AdamState st(m.parameter_count());
    Workspace ws;
    std::vector<double> g(m.parameter_count());
    for (int step = 0; step < 2; ++step) {
      ws.act.assign(1, Eigen::MatrixXd(8, copies));
      for (int c = 0; c < copies; ++c)
        for (int i = 0; i < 8; ++i) ws.act[0](i, c) = x[i];
      const std::vector<double> t(copies, 0.42);
      loss_and_gradient(m, ws, t, g);
      adam_step(m, g, st, 1e-3);
    }
    return m;
  };
  const MLP a = run(1), b = run(2);
  for (std::size_t i = 0; i < a.parameter_count(); ++i) EXPECT_NEAR(a.parameters()[i], b.parameters()[i], 1e-12);
}

TEST(Train, RejectsSmallSetsAndNonFiniteLoss) {
  TrainingSet small(8);
  for (int i = 0; i < 999; ++i) small.add(std::vector<double>(8, 0.1 * (i % 10)), 0.0);
  EXPECT_EQ(code_of([&] { train_category(small, {}); }), ErrorCode::TooFewSamples);

  TrainingSet bad(8);
  for (int i = 0; i < 1000; ++i) bad.add(std::vector<double>(8, 0.001 * i), i == 500 ? NAN : 0.5);
  TrainConfig cfg;
  cfg.max_epochs = 2;
  EXPECT_EQ(code_of([&] { train_category(bad, cfg); }), ErrorCode::DivergedLoss);

  TrainConfig wrong;
  wrong.validation_fraction = 0.6;
  EXPECT_EQ(code_of([&] { wrong.validate(); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([&] { small.add(std::vector<double>(9, 0.0), 0.0); }), ErrorCode::DimensionMismatch);
}

TEST(Train, LearnsNoisyLinearTarget) {
  Rng rng(2024);
  TrainingSet data(8);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::mt19937_64 gen(99);
  // 84k parameters overfit a few thousand samples; 40k are enough.
  for (int i = 0; i < 40000; ++i) {
    const auto x = random_input(8, rng);
    data.add(x, 0.5 * (x[0] + x[1]) + noise(gen));
  }
  TrainConfig cfg;
  cfg.max_epochs = 100;
  cfg.patience = 25;
  const TrainResult r = train_category(data, cfg);
  const double generator_nll = kHalfLog2Pi + std::log(0.01) + 0.5;
  EXPECT_LE(r.report.val_nll, generator_nll + 0.1) << "epochs " << r.report.epochs_run;
}

TEST(Train, ConstantTargetsCollapseSigma) {
  Rng rng(5);
  TrainingSet data(9);
  for (int i = 0; i < 1000; ++i) data.add(random_input(9, rng), 0.25);
  TrainConfig cfg;
  cfg.max_epochs = 40;
  cfg.batch_size = 32;
  const TrainResult r = train_category(data, cfg);
  ASSERT_GE(r.report.val_history.size(), 3u);
  EXPECT_LT(r.report.val_history[1], r.report.val_history[0]);
  EXPECT_LT(r.report.val_history[2], r.report.val_history[1]);
  const Output o = forward(r.model, data.input(0));
  EXPECT_LT(sigma_from(o.log_sigma), 1e-3);
  EXPECT_LT(r.report.val_nll, r.report.val_history[0]);
}

TEST(Train, Deterministic) {
  Rng rng(8);
  TrainingSet data(8);
  for (int i = 0; i < 1200; ++i) {
    const auto x = random_input(8, rng);
    data.add(x, x[3] * x[3]);
  }
  TrainConfig cfg;
  cfg.max_epochs = 3;
  cfg.seed = 77;
  const TrainResult a = train_category(data, cfg);
  const TrainResult b = train_category(data, cfg);
  EXPECT_TRUE(a.model == b.model);
  EXPECT_EQ(a.report.val_history, b.report.val_history);
  cfg.seed = 78;
  EXPECT_FALSE(train_category(data, cfg).model == a.model);
}
