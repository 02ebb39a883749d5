#pragma once

// Evaluation harness: estimation bias (MSE against analytic ground truth),
// 3-sigma coverage and interval width of the BDCI, and single-call runtime.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bdci/bd_classic.hpp"
#include "bdci/bdci.hpp"
#include "bdci/corpus.hpp"
#include "bdci/parallel.hpp"

namespace bdci::bench {

using synth::BDCase;
using synth::mode_index;

/// Pairwise summation; result does not depend on how cases were scheduled.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t h = v.size() / 2;
  return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// BD in reporting units: BD-BR as a rate fraction (e^d - 1), BD-quality as is.
inline double reported(double delta, Mode mode) {
  return mode == Mode::BDRate ? std::expm1(delta) : delta;
}

inline bool outside_interval(double truth, double mean, double sigma,
                             double k = kIntervalSigmas) {
  return truth < mean - k * sigma || truth > mean + k * sigma;
}

// ----------------------------------------------------------------------- bias

struct CellStats {
  std::size_t count = 0;
  std::size_t failures = 0;
  std::size_t not_applicable = 0;
  double mse = 0.0;

  nlohmann::json to_json() const {
    return {{"count", count}, {"failures", failures}, {"not_applicable", not_applicable}, {"mse", mse}};
  }
};

struct BiasReport {
  std::vector<Method> estimators;
  std::vector<Mode> modes;
  std::vector<int> n_values;
  std::map<std::pair<Method, Mode>, CellStats> overall;
  std::map<std::tuple<Method, Mode, int>, CellStats> per_n;
  std::size_t cases_skipped = 0;  // no valid ground truth for the mode

  const CellStats& cell(Method m, Mode mode) const { return overall.at({m, mode}); }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["n_values"] = n_values;
    j["cases_without_truth"] = cases_skipped;
    for (const auto& [key, s] : overall) {
      const std::string name =
          std::string(to_string(key.first)) + "/" + std::string(to_string(key.second));
      j["overall"][name] = s.to_json();
    }
    for (const auto& [key, s] : per_n) {
      const auto& [m, mode, n] = key;
      const std::string name = std::string(to_string(m)) + "/" + std::string(to_string(mode));
      j["per_n"][name][std::to_string(n)] = s.to_json();
    }
    return j;
  }

  std::string to_table() const {
    std::string out = "estimation bias (MSE; BD-BR as rate fraction, BD-quality in metric units)\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-10s %-8s %14s %8s %8s %6s\n", "estimator", "mode", "mse",
                  "count", "failed", "n/a");
    out += buf;
    for (Method m : estimators) {
      for (Mode mode : modes) {
        const CellStats& s = overall.at({m, mode});
        std::snprintf(buf, sizeof buf, "%-10s %-8s %14.6e %8zu %8zu %6zu\n",
                      std::string(to_string(m)).c_str(), std::string(to_string(mode)).c_str(),
                      s.mse, s.count, s.failures, s.not_applicable);
        out += buf;
      }
    }
    return out;
  }
};

enum class Outcome { Ok, Failed, NotApplicable };

struct Estimate {
  Outcome outcome = Outcome::Failed;
  double delta = 0.0;
};

inline Estimate estimate_case(const BDCase& c, Method method, Mode mode, const ModelBundle* bundle,
                              std::size_t dense_threshold = kDefaultDenseThreshold) {
  if (method == Method::Akima && c.n < 5) return {Outcome::NotApplicable, 0.0};
  try {
    const RDCurveSamples anchor = c.anchor_samples();
    const RDCurveSamples target = c.target_samples();
    switch (method) {
      case Method::Oracle: {
        const synth::ModeTruth t = synth::detail::truth_for(c.anchor, anchor, c.target, target, mode);
        return t.valid ? Estimate{Outcome::Ok, t.delta} : Estimate{};
      }
      case Method::BdciMean:
        if (!bundle) fail(ErrorCode::InvalidArgument, "bdci-mean needs a model bundle");
        return {Outcome::Ok, compute_bdci(anchor, target, mode, *bundle, dense_threshold).mean_delta};
      default:
        // Dense anchors are integrated exactly (as bdci does); sparse ones go
        // through the estimator like the target.
        if (anchor.size() >= dense_threshold)
          return {Outcome::Ok, compute_bd_dense_anchor(anchor, target, mode, method, dense_threshold).delta};
        return {Outcome::Ok, compute_bd(anchor, target, mode, method).delta};
    }
  } catch (const Error&) {
    return {};
  }
}

inline BiasReport eval_bias(const std::vector<BDCase>& cases, const std::vector<Method>& estimators,
                            const std::vector<Mode>& modes, const std::vector<int>& n_values,
                            const ModelBundle* bundle, unsigned jobs = 1) {
  BiasReport report{estimators, modes, n_values, {}, {}, 0};
  std::vector<const BDCase*> selected;
  for (const BDCase& c : cases) {
    if (std::find(n_values.begin(), n_values.end(), c.n) != n_values.end()) selected.push_back(&c);
  }
  // estimates[case][estimator][mode]
  std::vector<std::vector<std::array<Estimate, 2>>> est(selected.size());
  parallel_for(selected.size(), jobs, [&](std::size_t i) {
    est[i].resize(estimators.size());
    for (std::size_t e = 0; e < estimators.size(); ++e)
      for (Mode mode : modes)
        if (selected[i]->truth[mode_index(mode)].valid)
          est[i][e][mode_index(mode)] = estimate_case(*selected[i], estimators[e], mode, bundle);
  });

  for (Mode mode : modes) {
    for (const BDCase* c : selected) report.cases_skipped += c->truth[mode_index(mode)].valid ? 0 : 1;
  }
  for (std::size_t e = 0; e < estimators.size(); ++e) {
    for (Mode mode : modes) {
      auto accumulate = [&](std::optional<int> only_n) {
        CellStats s;
        std::vector<double> sq;
        for (std::size_t i = 0; i < selected.size(); ++i) {
          const BDCase& c = *selected[i];
          if (only_n && c.n != *only_n) continue;
          const synth::ModeTruth& t = c.truth[mode_index(mode)];
          if (!t.valid) continue;
          const Estimate& x = est[i][e][mode_index(mode)];
          if (x.outcome == Outcome::NotApplicable) {
            ++s.not_applicable;
          } else if (x.outcome == Outcome::Failed) {
            ++s.failures;
          } else {
            const double err = reported(x.delta, mode) - reported(t.delta, mode);
            sq.push_back(err * err);
          }
        }
        s.count = sq.size();
        s.mse = sq.empty() ? 0.0 : pairwise_sum(sq) / static_cast<double>(sq.size());
        return s;
      };
      report.overall[{estimators[e], mode}] = accumulate(std::nullopt);
      for (int n : n_values) report.per_n[{estimators[e], mode, n}] = accumulate(n);
    }
  }
  return report;
}

// ---------------------------------------------------------------- calibration

struct WidthStats {
  std::size_t count = 0;
  std::size_t outside = 0;
  double mean_width = 0.0;
  double median_width = 0.0;
};

struct CalibrationReport {
  std::vector<int> n_values;
  std::size_t evaluated = 0;
  std::size_t outside = 0;
  std::size_t failures = 0;
  std::size_t degenerate = 0;
  std::array<std::size_t, 2> evaluated_per_mode{};
  std::array<std::size_t, 2> outside_per_mode{};
  std::map<std::pair<Mode, int>, WidthStats> widths;  // interval width in delta units

  double outside_fraction() const {
    return evaluated ? static_cast<double>(outside) / static_cast<double>(evaluated) : 0.0;
  }
  double outside_fraction(Mode m) const {
    const auto i = mode_index(m);
    return evaluated_per_mode[i] ? static_cast<double>(outside_per_mode[i]) /
                                       static_cast<double>(evaluated_per_mode[i])
                                 : 0.0;
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"evaluated", evaluated},
                     {"outside", outside},
                     {"outside_fraction", outside_fraction()},
                     {"failures", failures},
                     {"degenerate_fallbacks", degenerate},
                     {"n_values", n_values}};
    for (Mode m : synth::kAllModes) {
      const std::string name(to_string(m));
      j["per_mode"][name] = {{"evaluated", evaluated_per_mode[mode_index(m)]},
                             {"outside", outside_per_mode[mode_index(m)]},
                             {"outside_fraction", outside_fraction(m)}};
    }
    for (const auto& [key, w] : widths) {
      j["widths"][std::string(to_string(key.first))][std::to_string(key.second)] = {
          {"count", w.count},
          {"outside", w.outside},
          {"mean_width", w.mean_width},
          {"median_width", w.median_width}};
    }
    return j;
  }

  std::string to_table() const {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "calibration: %zu/%zu outside 3-sigma (%.4f%%), %zu failures, %zu degenerate\n",
                  outside, evaluated, 100.0 * outside_fraction(), failures, degenerate);
    out += buf;
    std::snprintf(buf, sizeof buf, "%-8s %4s %8s %8s %14s %14s\n", "mode", "n", "count", "outside",
                  "mean_width", "median_width");
    out += buf;
    for (const auto& [key, w] : widths) {
      std::snprintf(buf, sizeof buf, "%-8s %4d %8zu %8zu %14.6e %14.6e\n",
                    std::string(to_string(key.first)).c_str(), key.second, w.count, w.outside,
                    w.mean_width, w.median_width);
      out += buf;
    }
    return out;
  }

  /// Fig-5 style plot data: mode, n, mean width.
  std::string width_plot_csv() const {
    std::string out = "mode,n,mean_width,median_width\n";
    char buf[128];
    for (const auto& [key, w] : widths) {
      std::snprintf(buf, sizeof buf, "%s,%d,%.17g,%.17g\n", std::string(to_string(key.first)).c_str(),
                    key.second, w.mean_width, w.median_width);
      out += buf;
    }
    return out;
  }
};

inline CalibrationReport eval_calibration(const std::vector<BDCase>& cases, const ModelBundle& bundle,
                                          const std::vector<int>& n_values, unsigned jobs = 1,
                                          std::size_t dense_threshold = kDefaultDenseThreshold) {
  struct One {
    bool ok = false;
    bool outside = false;
    bool degenerate = false;
    double width = 0.0;
  };
  std::vector<const BDCase*> selected;
  for (const BDCase& c : cases) {
    if (std::find(n_values.begin(), n_values.end(), c.n) != n_values.end()) selected.push_back(&c);
  }
  std::vector<std::array<std::optional<One>, 2>> res(selected.size());
  parallel_for(selected.size(), jobs, [&](std::size_t i) {
    const BDCase& c = *selected[i];
    for (Mode mode : synth::kAllModes) {
      const synth::ModeTruth& t = c.truth[mode_index(mode)];
      if (!t.valid) continue;
      One o;
      try {
        const BDCIResult r =
            compute_bdci(c.anchor_samples(), c.target_samples(), mode, bundle, dense_threshold);
        o.ok = true;
        o.outside = outside_interval(t.delta, r.mean_delta, r.sigma_delta);
        o.degenerate = r.degenerate_fallback;
        o.width = r.interval_delta[1] - r.interval_delta[0];
      } catch (const Error&) {
      }
      res[i][mode_index(mode)] = o;
    }
  });

  CalibrationReport rep;
  rep.n_values = n_values;
  std::map<std::pair<Mode, int>, std::vector<double>> w;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    for (Mode mode : synth::kAllModes) {
      const auto& o = res[i][mode_index(mode)];
      if (!o) continue;
      if (!o->ok) {
        ++rep.failures;
        continue;
      }
      ++rep.evaluated;
      ++rep.evaluated_per_mode[mode_index(mode)];
      rep.degenerate += o->degenerate ? 1 : 0;
      auto& cell = rep.widths[{mode, selected[i]->n}];
      if (o->outside) {
        ++rep.outside;
        ++rep.outside_per_mode[mode_index(mode)];
        ++cell.outside;
      }
      w[{mode, selected[i]->n}].push_back(o->width);
    }
  }
  for (auto& [key, v] : w) {
    auto& cell = rep.widths[key];
    cell.count = v.size();
    cell.mean_width = pairwise_sum(v) / static_cast<double>(v.size());
    cell.median_width = median(v);
  }
  return rep;
}

// -------------------------------------------------------------------- runtime

struct RuntimeRow {
  int n = 0;
  std::size_t repetitions = 0;
  double median_ms = 0.0;
  double mean_ms = 0.0;
};

/// Fixed sparse anchor/target pair with n samples each, so both curves go
/// through the networks.
inline std::pair<RDCurveSamples, RDCurveSamples> runtime_pair(int n) {
  const synth::AnalyticCurve anchor = synth::gen_curve(synth::Family::LogRD, 11, synth::MetricKind::PsnrLike);
  const synth::AnalyticCurve target = synth::gen_curve(synth::Family::PowerRD, 12, synth::MetricKind::PsnrLike);
  const synth::AnalyticCurve shifted(synth::Family::PowerRD, synth::MetricKind::PsnrLike,
                                     anchor.x_lo(), anchor.x_hi(), target.a(), target.b(), target.c(), target.p());
  return {synth::sample_points(anchor, n, synth::SamplingPolicy::UniformLogX, 0, "anchor"),
          synth::sample_points(shifted, n, synth::SamplingPolicy::UniformLogX, 0, "target")};
}

inline std::vector<RuntimeRow> eval_runtime(const ModelBundle& bundle, const std::vector<int>& n_values,
                                            std::size_t repetitions, Mode mode = Mode::BDRate) {
  std::vector<RuntimeRow> rows;
  for (int n : n_values) {
    auto [anchor, target] = runtime_pair(n);
    volatile double sink = 0.0;
    for (int w = 0; w < 10; ++w) sink = sink + compute_bdci(anchor, target, mode, bundle).mean_delta;
    std::vector<double> ms(repetitions);
    for (std::size_t r = 0; r < repetitions; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      sink = sink + compute_bdci(anchor, target, mode, bundle).mean_delta;
      ms[r] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    rows.push_back({n, repetitions, median(ms), pairwise_sum(ms) / static_cast<double>(repetitions)});
  }
  return rows;
}

inline std::string runtime_table(const std::vector<RuntimeRow>& rows) {
  std::string out = "runtime (single-threaded, one full BDCI computation)\n     n   reps   median_ms     mean_ms\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%6d %6zu %11.4f %11.4f\n", r.n, r.repetitions, r.median_ms, r.mean_ms);
    out += buf;
  }
  return out;
}

}  // namespace bdci::bench
