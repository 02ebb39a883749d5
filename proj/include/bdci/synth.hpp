#pragma once

// Synthetic R-D curves with known integrals.  Curves are quality = f(rate)
// on a positive rate domain, strictly monotone, drawn from four families
// whose knee sharpness spans several orders of magnitude.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bdci/error.hpp"
#include "bdci/interp.hpp"
#include "bdci/random.hpp"
#include "bdci/rd_core.hpp"

namespace bdci::synth {

enum class Family { LogRD, PowerRD, RationalRD, SplineRD };

inline constexpr std::array<Family, 4> kAllFamilies = {Family::LogRD, Family::PowerRD,
                                                       Family::RationalRD, Family::SplineRD};

constexpr std::string_view to_string(Family f) {
  switch (f) {
    case Family::LogRD: return "log_rd";
    case Family::PowerRD: return "power_rd";
    case Family::RationalRD: return "rational_rd";
    case Family::SplineRD: return "spline_rd";
  }
  return "?";
}

inline Family parse_family(std::string_view s) {
  for (Family f : kAllFamilies)
    if (to_string(f) == s) return f;
  fail(ErrorCode::ParseError, "unknown curve family '" + std::string(s) + "'");
}

/// Value ranges imitating three common quality metrics.
enum class MetricKind { PsnrLike, MsssimLike, LpipsLike };

inline constexpr std::array<MetricKind, 3> kAllMetricKinds = {
    MetricKind::PsnrLike, MetricKind::MsssimLike, MetricKind::LpipsLike};

constexpr std::string_view to_string(MetricKind m) {
  switch (m) {
    case MetricKind::PsnrLike: return "psnr-like";
    case MetricKind::MsssimLike: return "msssim-like";
    case MetricKind::LpipsLike: return "lpips-like";
  }
  return "?";
}

inline MetricKind parse_metric_kind(std::string_view s) {
  for (MetricKind m : kAllMetricKinds)
    if (to_string(m) == s) return m;
  fail(ErrorCode::ParseError, "unknown metric kind '" + std::string(s) + "'");
}

/// Generic adaptive Simpson with Richardson correction.
template <class F>
double adaptive_simpson(F&& f, double a, double b, double tol = 1e-10, int max_depth = 50) {
  struct Rec {
    F& f;
    int max_depth;
    double run(double a, double b, double fa, double fm, double fb, double whole, double tol,
               int depth) {
      const double m = 0.5 * (a + b);
      const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
      const double flm = f(lm), frm = f(rm);
      const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
      const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
      const double diff = left + right - whole;
      const double floor = 1e-15 * (std::abs(left) + std::abs(right));
      if (std::abs(diff) <= 15.0 * std::max(tol, floor)) return left + right + diff / 15.0;
      if (depth >= max_depth) {
        fail(ErrorCode::ToleranceNotMet, "adaptive Simpson exceeded its bisection depth");
      }
      return run(a, m, fa, flm, fm, left, tol / 2.0, depth + 1) +
             run(m, b, fm, frm, fb, right, tol / 2.0, depth + 1);
    }
  };
  if (a == b) return 0.0;
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  Rec rec{f, max_depth};
  return rec.run(a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 0);
}

class AnalyticCurve {
 public:
  /// Closed-form families: a, b, c, p as in the family formulas.
  AnalyticCurve(Family family, MetricKind metric, double x_lo, double x_hi, double a, double b,
                double c, double p = 1.0)
      : family_(family), metric_(metric), x_lo_(x_lo), x_hi_(x_hi), a_(a), b_(b), c_(c), p_(p) {
    if (family == Family::SplineRD) fail(ErrorCode::InvalidArgument, "use the spline constructor");
    check();
  }

  /// Monotone PCHIP through control points (rates ascending).
  AnalyticCurve(MetricKind metric, std::vector<double> control_x, std::vector<double> control_y)
      : family_(Family::SplineRD),
        metric_(metric),
        x_lo_(control_x.front()),
        x_hi_(control_x.back()),
        control_x_(std::move(control_x)),
        control_y_(std::move(control_y)) {
    spline_ = fit_pchip(XYSeries(control_x_, control_y_, Mode::BDQuality));
    check();
  }

  Family family() const noexcept { return family_; }
  MetricKind metric() const noexcept { return metric_; }
  double x_lo() const noexcept { return x_lo_; }
  double x_hi() const noexcept { return x_hi_; }
  double a() const noexcept { return a_; }
  double b() const noexcept { return b_; }
  double c() const noexcept { return c_; }
  double p() const noexcept { return p_; }
  bool has_closed_form() const noexcept { return family_ != Family::SplineRD; }
  bool increasing() const { return value(x_hi_) > value(x_lo_); }

  double value(double x) const {
    if (x < x_lo_ || x > x_hi_) {
      const double tol = 1e-12 * std::max(1.0, std::abs(x_hi_));
      if (x < x_lo_ - tol || x > x_hi_ + tol) {
        fail(ErrorCode::OutOfDomain, "x=" + std::to_string(x) + " outside the curve domain");
      }
      x = std::clamp(x, x_lo_, x_hi_);
    }
    return raw_value(x);
  }

  /// Rate at which the curve attains quality y (clamped to the domain).
  double inverse(double y) const {
    double x = 0.0;
    switch (family_) {
      case Family::LogRD: x = std::exp((y - b_) / a_) - c_; break;
      case Family::PowerRD: x = std::pow((a_ - y) / b_, -1.0 / p_) - c_; break;
      case Family::RationalRD: x = b_ / (a_ - y) - c_; break;
      case Family::SplineRD: {
        const bool inc = increasing();
        double lo = x_lo_, hi = x_hi_;
        for (int it = 0; it < 200 && hi - lo > 1e-16 * hi; ++it) {
          const double mid = 0.5 * (lo + hi);
          ((raw_value(mid) < y) == inc ? lo : hi) = mid;
        }
        x = 0.5 * (lo + hi);
        break;
      }
    }
    if (!std::isfinite(x)) x = (y - value(x_lo_)) * (value(x_hi_) - value(x_lo_)) > 0 ? x_hi_ : x_lo_;
    return std::clamp(x, x_lo_, x_hi_);
  }

  /// Integral of quality over rate on [lo, hi].
  double antiderivative(double x) const {
    const double u = x + c_;
    switch (family_) {
      case Family::LogRD: return a_ * (u > 0.0 ? u * std::log(u) - u : 0.0) + b_ * x;
      case Family::PowerRD:
        if (std::abs(p_ - 1.0) < 1e-14) return a_ * x - b_ * std::log(u);
        return a_ * x - b_ * std::pow(u, 1.0 - p_) / (1.0 - p_);
      case Family::RationalRD: return a_ * x - b_ * std::log(u);
      case Family::SplineRD: break;
    }
    fail(ErrorCode::InvalidArgument, "spline curves have no closed-form antiderivative here");
  }

  const std::vector<double>& control_x() const noexcept { return control_x_; }
  const std::vector<double>& control_y() const noexcept { return control_y_; }

  nlohmann::json to_json() const {
    nlohmann::json j{{"family", std::string(to_string(family_))},
                     {"metric", std::string(to_string(metric_))},
                     {"x_lo", x_lo_},
                     {"x_hi", x_hi_}};
    if (family_ == Family::SplineRD) {
      j["control_x"] = control_x_;
      j["control_y"] = control_y_;
    } else {
      j["a"] = a_;
      j["b"] = b_;
      j["c"] = c_;
      j["p"] = p_;
    }
    return j;
  }

  static AnalyticCurve from_json(const nlohmann::json& j) {
    const Family f = parse_family(j.at("family").get<std::string>());
    const MetricKind m = parse_metric_kind(j.at("metric").get<std::string>());
    if (f == Family::SplineRD) {
      return AnalyticCurve(m, j.at("control_x").get<std::vector<double>>(),
                           j.at("control_y").get<std::vector<double>>());
    }
    return AnalyticCurve(f, m, j.at("x_lo").get<double>(), j.at("x_hi").get<double>(),
                         j.at("a").get<double>(), j.at("b").get<double>(),
                         j.at("c").get<double>(), j.at("p").get<double>());
  }

 private:
  double raw_value(double x) const {
    switch (family_) {
      case Family::LogRD: return a_ * std::log(x + c_) + b_;
      case Family::PowerRD: return a_ - b_ * std::pow(x + c_, -p_);
      case Family::RationalRD: return a_ - b_ / (x + c_);
      case Family::SplineRD: return evaluate(*spline_, x);
    }
    return 0.0;
  }

  void check() const {
    if (!(x_lo_ < x_hi_) || !std::isfinite(x_lo_) || !std::isfinite(x_hi_)) {
      fail(ErrorCode::InvalidArgument, "curve domain must be a finite, non-empty interval");
    }
    if (!std::isfinite(raw_value(x_lo_)) || !std::isfinite(raw_value(x_hi_))) {
      fail(ErrorCode::InvalidArgument, "curve is not finite on its domain");
    }
  }

  Family family_;
  MetricKind metric_;
  double x_lo_, x_hi_;
  double a_ = 0.0, b_ = 0.0, c_ = 0.0, p_ = 1.0;
  std::vector<double> control_x_, control_y_;
  std::optional<PiecewiseCubic> spline_;
};

/// Closed form where the family has one, adaptive Simpson otherwise.
inline double oracle_integral(const AnalyticCurve& curve, double a, double b) {
  const double tol = 1e-12 * std::max(1.0, std::abs(curve.x_hi()));
  if (a < curve.x_lo() - tol || b > curve.x_hi() + tol || a > b) {
    fail(ErrorCode::OutOfDomain, "integration range outside the curve domain");
  }
  a = std::max(a, curve.x_lo());
  b = std::min(b, curve.x_hi());
  if (curve.has_closed_form()) return curve.antiderivative(b) - curve.antiderivative(a);
  return adaptive_simpson([&](double x) { return curve.value(x); }, a, b, 1e-11);
}

/// The curve in the BD plane for `mode`: BD-quality (X = ln rate,
/// Y = quality) or BD-BR (X = quality, Y = ln rate).
inline double projected_value(const AnalyticCurve& curve, Mode mode, double X) {
  if (mode == Mode::BDQuality) return curve.value(std::exp(X));
  return std::log(curve.inverse(X));
}

inline std::pair<double, double> projected_domain(const AnalyticCurve& curve, Mode mode) {
  if (mode == Mode::BDQuality) return {std::log(curve.x_lo()), std::log(curve.x_hi())};
  const double q0 = curve.value(curve.x_lo()), q1 = curve.value(curve.x_hi());
  return {std::min(q0, q1), std::max(q0, q1)};
}

/// BD-quality integrates quality over ln rate directly.  BD-BR integrates the
/// inverse, ln r(q), through the inverse-function identity
///   int_a^b ln r(q) dq = b ln r(b) - a ln r(a) - int_{ln r(a)}^{ln r(b)} Q(u) du
/// so quadrature never sees the bisection-based inverse of spline curves.
inline double projected_integral(const AnalyticCurve& curve, Mode mode, double a, double b) {
  auto quality_at = [&](double u) { return curve.value(std::exp(u)); };
  if (mode == Mode::BDQuality) return adaptive_simpson(quality_at, a, b, 1e-11);
  const double ua = std::log(curve.inverse(a)), ub = std::log(curve.inverse(b));
  return b * ub - a * ua - adaptive_simpson(quality_at, ua, ub, 1e-11);
}

// ---------------------------------------------------------------- generation

struct QualityRange {
  double at_lo;  // quality at the lowest rate
  double at_hi;  // quality at the highest rate
};

inline QualityRange draw_quality_range(MetricKind metric, Rng& rng) {
  switch (metric) {
    case MetricKind::PsnrLike: {
      const double lo = rng.uniform(24.0, 32.0);
      return {lo, lo + rng.uniform(6.0, 16.0)};
    }
    case MetricKind::MsssimLike: return {rng.uniform(0.80, 0.93), rng.uniform(0.975, 0.998)};
    case MetricKind::LpipsLike: return {rng.uniform(0.30, 0.70), rng.uniform(0.01, 0.08)};
  }
  return {0.0, 1.0};
}

/// Draws only the shape (knee position, exponent, control points); the
/// domain and end qualities are fixed by the caller.
inline AnalyticCurve make_curve(Family family, MetricKind metric, double x_lo, double x_hi,
                                QualityRange q, Rng& rng) {
  if (family == Family::SplineRD) {
    const int k = 4 + static_cast<int>(rng.index(4));
    std::vector<double> cx(k), cy(k);
    const double l0 = std::log(x_lo), l1 = std::log(x_hi);
    for (int i = 0; i < k; ++i) {
      double t = static_cast<double>(i) / (k - 1);
      if (i > 0 && i + 1 < k) t += rng.uniform(-0.3, 0.3) / (k - 1);
      cx[i] = std::exp(l0 + (l1 - l0) * t);
    }
    cx.front() = x_lo;
    cx.back() = x_hi;
    // Positive increments with a random decay give concave-ish or near-linear shapes.
    const double decay = rng.uniform(0.5, 1.0);
    std::vector<double> inc(k - 1);
    double total = 0.0;
    for (int i = 0; i < k - 1; ++i) {
      inc[i] = rng.uniform(0.3, 1.0) * std::pow(decay, i);
      total += inc[i];
    }
    cy[0] = q.at_lo;
    for (int i = 1; i < k; ++i) cy[i] = cy[i - 1] + (q.at_hi - q.at_lo) * inc[i - 1] / total;
    cy.back() = q.at_hi;
    return AnalyticCurve(metric, std::move(cx), std::move(cy));
  }

  // y = alpha * h(x) + beta through both end qualities.
  const double c = x_lo * rng.log_uniform(0.01, 30.0);
  const double p = family == Family::PowerRD ? rng.uniform(0.3, 2.5) : 1.0;
  auto h = [&](double x) {
    switch (family) {
      case Family::LogRD: return std::log(x + c);
      case Family::PowerRD: return -std::pow(x + c, -p);
      default: return -1.0 / (x + c);
    }
  };
  const double alpha = (q.at_hi - q.at_lo) / (h(x_hi) - h(x_lo));
  const double beta = q.at_lo - alpha * h(x_lo);
  if (family == Family::LogRD) return AnalyticCurve(family, metric, x_lo, x_hi, alpha, beta, c);
  // a - b * g(x) with g = (x + c)^-p:  a = beta, b = alpha.
  return AnalyticCurve(family, metric, x_lo, x_hi, beta, alpha, c, p);
}

inline bool strictly_monotone_on_grid(const AnalyticCurve& curve, int grid = 1000) {
  const bool inc = curve.increasing();
  double prev = curve.value(curve.x_lo());
  for (int i = 1; i <= grid; ++i) {
    const double x = curve.x_lo() + (curve.x_hi() - curve.x_lo()) * i / grid;
    const double y = curve.value(std::min(x, curve.x_hi()));
    if (inc ? !(y > prev) : !(y < prev)) return false;
    prev = y;
  }
  return true;
}

inline AnalyticCurve gen_curve(Family family, std::uint64_t seed, MetricKind metric) {
  Rng rng(seed);
  for (;;) {
    const double x_lo = rng.log_uniform(0.03, 0.3);
    const double x_hi = x_lo * rng.log_uniform(6.0, 40.0);
    AnalyticCurve c = make_curve(family, metric, x_lo, x_hi, draw_quality_range(metric, rng), rng);
    if (strictly_monotone_on_grid(c)) return c;
  }
}

inline AnalyticCurve gen_curve(Family family, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0, 0x6d6574));
  return gen_curve(family, seed, kAllMetricKinds[rng.index(kAllMetricKinds.size())]);
}

// ------------------------------------------------------------------ sampling

enum class SamplingPolicy { UniformX, UniformY, Jittered, UniformLogX, JitteredLogX };

constexpr std::string_view to_string(SamplingPolicy p) {
  switch (p) {
    case SamplingPolicy::UniformX: return "uniform-x";
    case SamplingPolicy::UniformY: return "uniform-y";
    case SamplingPolicy::Jittered: return "jittered";
    case SamplingPolicy::UniformLogX: return "uniform-log-x";
    case SamplingPolicy::JitteredLogX: return "jittered-log-x";
  }
  return "?";
}

/// Sample rates; the domain endpoints are always included.
inline std::vector<double> sample_xs(const AnalyticCurve& curve, int n, SamplingPolicy policy,
                                     std::uint64_t seed) {
  if (n < 2) fail(ErrorCode::TooFewPoints, "need at least 2 samples");
  Rng rng(seed);
  const bool log_axis = policy == SamplingPolicy::UniformLogX || policy == SamplingPolicy::JitteredLogX;
  const bool jitter = policy == SamplingPolicy::Jittered || policy == SamplingPolicy::JitteredLogX;
  std::vector<double> xs(n);
  if (policy == SamplingPolicy::UniformY) {
    const double y0 = curve.value(curve.x_lo()), y1 = curve.value(curve.x_hi());
    for (int i = 0; i < n; ++i) xs[i] = curve.inverse(y0 + (y1 - y0) * i / (n - 1));
  } else {
    const double lo = log_axis ? std::log(curve.x_lo()) : curve.x_lo();
    const double hi = log_axis ? std::log(curve.x_hi()) : curve.x_hi();
    const double step = (hi - lo) / (n - 1);
    for (int i = 0; i < n; ++i) {
      double t = lo + step * i;
      if (jitter && i > 0 && i + 1 < n) t += rng.uniform(-0.25, 0.25) * step;
      xs[i] = log_axis ? std::exp(t) : t;
    }
  }
  xs.front() = curve.x_lo();
  xs.back() = curve.x_hi();
  return xs;
}

inline RDCurveSamples sample_points(const AnalyticCurve& curve, int n, SamplingPolicy policy,
                                    std::uint64_t seed, std::string source_label = "synthetic") {
  std::vector<RDPoint> pts;
  for (double x : sample_xs(curve, n, policy, seed)) pts.push_back({x, curve.value(x)});
  return validate_samples(pts, std::string(to_string(curve.metric())), std::move(source_label));
}

}  // namespace bdci::synth
