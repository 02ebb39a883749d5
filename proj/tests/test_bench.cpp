#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "bdci/bench.hpp"

using namespace bdci;
using namespace bdci::bench;
using synth::BDCase;

namespace {

const std::vector<BDCase>& cases() {
  static const std::vector<BDCase> c = [] {
    synth::CorpusConfig cfg;
    cfg.num_curves = 0;
    cfg.num_pairs = 40;
    cfg.seed = 77;
    cfg.split = synth::Split::Test;
    return synth::build_corpus(cfg).cases;
  }();
  return c;
}

const std::vector<Mode> kModes(synth::kAllModes.begin(), synth::kAllModes.end());
const std::vector<int> kN = {4, 5, 6, 7, 8};

}  // namespace

TEST(Bench, OracleHasZeroError) {
  const BiasReport r = eval_bias(cases(), {Method::Oracle}, kModes, kN, nullptr);
  for (Mode m : kModes) {
    const CellStats& s = r.overall.at({Method::Oracle, m});
    EXPECT_GT(s.count, 150u);
    EXPECT_EQ(s.failures, 0u);
    EXPECT_EQ(s.mse, 0.0);
  }
}

TEST(Bench, IdenticalCurvesGiveZeroError) {
  std::vector<BDCase> same;
  for (const BDCase& c : cases()) {
    if (c.n != 4) continue;
    BDCase d = c;
    d.target = d.anchor;
    d.anchor_points = synth::sample_points(d.anchor, 6, synth::SamplingPolicy::UniformLogX, 0).points();
    d.target_points = d.anchor_points;
    for (Mode m : kModes)
      d.truth[synth::mode_index(m)] =
          synth::detail::truth_for(d.anchor, d.anchor_samples(), d.target, d.target_samples(), m);
    same.push_back(std::move(d));
  }
  const BiasReport r = eval_bias(same, {Method::Cubic, Method::Pchip, Method::Csi}, kModes, {4}, nullptr);
  for (const auto& [key, s] : r.overall) {
    EXPECT_EQ(s.count, same.size());
    EXPECT_LE(s.mse, 1e-18);
  }
}

TEST(Bench, AkimaNeedsFivePoints) {
  const BiasReport r = eval_bias(cases(), {Method::Akima}, {Mode::BDQuality}, kN, nullptr);
  EXPECT_EQ(r.per_n.at({Method::Akima, Mode::BDQuality, 4}).count, 0u);
  EXPECT_GT(r.per_n.at({Method::Akima, Mode::BDQuality, 4}).not_applicable, 0u);
  EXPECT_GT(r.per_n.at({Method::Akima, Mode::BDQuality, 5}).count, 0u);
}

TEST(Bench, DenserTargetsAreMoreAccurate) {
  const BiasReport r = eval_bias(cases(), {Method::Pchip}, kModes, kN, nullptr);
  for (Mode m : kModes) {
    EXPECT_LE(r.per_n.at({Method::Pchip, m, 8}).mse, r.per_n.at({Method::Pchip, m, 4}).mse) << to_string(m);
  }
}

TEST(Bench, ReportIndependentOfThreadCount) {
  const std::vector<Method> est = {Method::Cubic, Method::Pchip, Method::Oracle};
  const BiasReport a = eval_bias(cases(), est, kModes, kN, nullptr, 1);
  const BiasReport b = eval_bias(cases(), est, kModes, kN, nullptr, 4);
  EXPECT_EQ(a.to_json().dump(), b.to_json().dump());
}

TEST(Bench, PairwiseSumMatchesLongDouble) {
  std::mt19937_64 g(4);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> v(100001);
  long double ref = 0;
  for (double& x : v) {
    x = u(g) * 1e-3;
    ref += x;
  }
  EXPECT_NEAR(pairwise_sum(v), static_cast<double>(ref), 1e-15 * static_cast<double>(ref));
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
}

TEST(Bench, ExactGaussianCoverage) {
  // A predictor whose errors are exactly N(0, sigma) misses +-3 sigma
  // about 0.27% of the time.
  std::mt19937_64 g(11);
  std::normal_distribution<double> z(0, 1);
  const int trials = 1000000;
  int outside = 0;
  for (int i = 0; i < trials; ++i) {
    const double sigma = 0.5 + (i % 7);
    outside += outside_interval(3.0 + sigma * z(g), 3.0, sigma) ? 1 : 0;
  }
  EXPECT_NEAR(static_cast<double>(outside) / trials, 2.0 * 0.5 * std::erfc(3.0 / std::sqrt(2.0)), 3e-4);
}

TEST(Bench, ReportedUnits) {
  EXPECT_NEAR(reported(std::log(0.8), Mode::BDRate), -0.2, 1e-15);
  EXPECT_EQ(reported(0.5, Mode::BDQuality), 0.5);
}
