#pragma once

// Neural segment-integral estimator and the BD confidence interval built on
// it.  Each curve's integral over the shared interval is a sum of
// independent Gaussian segment integrals predicted in normalised
// coordinates; the anchor/target difference gives the BD mean and sigma, and
// the confidence interval is mean +/- 3 sigma.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "bdci/bd_classic.hpp"
#include "bdci/bundle.hpp"
#include "bdci/interp.hpp"
#include "bdci/nn.hpp"
#include "bdci/rd_core.hpp"
#include "bdci/segments.hpp"

namespace bdci {

inline constexpr double kIntervalSigmas = 3.0;
inline constexpr std::size_t kDefaultDenseThreshold = 20;

struct GaussianEstimate {
  double mu = 0.0;
  double sigma = 0.0;
};

struct SegmentPrediction {
  SegmentInstance segment;
  double mu_norm = 0.0;
  double sigma_norm = 0.0;
};

enum class IntegralSource { Network, DenseExact, Flat };

struct CurveIntegral {
  GaussianEstimate estimate;
  IntegralSource source = IntegralSource::Network;
  NormParams norm;
  std::vector<SegmentPrediction> segments;
  bool degenerate_fallback = false;
};

struct BDCIResult {
  Mode mode;
  IntegrationInterval interval;
  double mean_delta = 0.0;
  double sigma_delta = 0.0;
  std::array<double, 2> interval_delta{};
  std::optional<double> mean_percent;
  std::optional<std::array<double, 2>> interval_percent;
  CurveIntegral anchor;
  CurveIntegral target;
  bool degenerate_fallback = false;

  BDValue point_estimate() const {
    BDValue v{mean_delta, mean_percent, interval, mode, Method::BdciMean};
    return v;
  }
};

namespace detail {

/// `net_series` is the canonically oriented series the networks see; the
/// returned mean is for the original orientation.
inline SegmentPrediction run_segment(const SegmentInstance& seg, const XYSeries& net_series,
                                     bool flipped, const ModelBundle& bundle) {
  const nn::MLP& net = bundle.model(seg.category);
  const std::vector<double> in = build_input(seg, net_series);
  const nn::Output out = nn::forward(net, in);
  const double mu = flipped ? (seg.b - seg.a) - out.mu : out.mu;
  return {seg, mu, nn::sigma_from(out.log_sigma, bundle.clamp())};
}

/// Both bounds inside one knot interval: PCHIP supplies the mean, the
/// InteriorFull model's sigma for that knot interval, scaled by the covered
/// fraction of it, supplies the spread.
inline SegmentPrediction degenerate_segment(const XYSeries& norm_series, const XYSeries& net_series,
                                            double lo, double hi, const ModelBundle& bundle) {
  const auto& xs = norm_series.xs();
  auto it = std::upper_bound(xs.begin(), xs.end(), lo);
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(it - xs.begin()) - 1,
                                              xs.size() - 2);
  SegmentInstance seg;
  seg.category = SegmentCategory::InteriorFull;
  seg.knot = k;
  seg.support = support_for(k, xs.size());
  seg.a = lo;
  seg.b = hi;
  const nn::MLP& net = bundle.model(SegmentCategory::InteriorFull);
  const nn::Output out = nn::forward(net, build_input(seg, net_series));
  const double frac = (hi - lo) / (xs[k + 1] - xs[k]);
  const double mu = integrate_fit(fit_pchip(norm_series), IntegrationInterval(lo, hi));
  return {seg, mu, nn::sigma_from(out.log_sigma, bundle.clamp()) * frac};
}

}  // namespace detail

inline CurveIntegral predict_curve_integral(const XYSeries& series,
                                            const IntegrationInterval& interval,
                                            const ModelBundle& bundle) {
  CurveIntegral result;
  result.norm = norm_params(series);
  if (series.size() < kMinBdPoints) {
    fail(ErrorCode::TooFewPoints, "neural estimator needs at least 4 samples");
  }
  if (interval.lo < series.x_min() || interval.hi > series.x_max()) {
    fail(ErrorCode::ExtrapolationRequired, "interval leaves the sampled range");
  }
  if (!(result.norm.y_span() > 0.0)) {
    result.source = IntegralSource::Flat;
    result.estimate = {series.ys().front() * interval.width(), 0.0};
    return result;
  }

  const auto [norm_series, p] = normalize_series(series);
  const auto [net_series, flipped] = canonical_orientation(norm_series);
  const double lo = p.to_x(interval.lo);
  const double hi = p.to_x(interval.hi);

  double mu_norm = 0.0, var_norm = 0.0;
  try {
    for (const SegmentInstance& seg : segment_interval(norm_series.xs(), lo, hi)) {
      result.segments.push_back(detail::run_segment(seg, net_series, flipped, bundle));
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::DegenerateSpan) throw;
    result.segments.clear();
    result.segments.push_back(detail::degenerate_segment(norm_series, net_series, lo, hi, bundle));
    result.degenerate_fallback = true;
  }
  for (const SegmentPrediction& s : result.segments) {
    mu_norm += s.mu_norm;
    var_norm += s.sigma_norm * s.sigma_norm;
  }
  result.estimate.mu = p.denormalize_integral(mu_norm, interval.lo, interval.hi);
  result.estimate.sigma = p.denormalize_sigma(std::sqrt(var_norm));
  return result;
}

/// Dense curves are integrated exactly through PCHIP with zero spread.
inline CurveIntegral dense_curve_integral(const XYSeries& series,
                                          const IntegrationInterval& interval) {
  CurveIntegral result;
  result.source = IntegralSource::DenseExact;
  result.norm = norm_params(series);
  result.estimate = {integrate_fit(fit_pchip(series), interval), 0.0};
  return result;
}

inline BDCIResult compute_bdci(const RDCurveSamples& anchor, const RDCurveSamples& target,
                               Mode mode, const ModelBundle& bundle,
                               std::size_t dense_threshold = kDefaultDenseThreshold) {
  detail::require_same_metric(anchor, target);
  detail::require_points(anchor, kMinBdPoints, "anchor");
  detail::require_points(target, kMinBdPoints, "target");

  const XYSeries a = project_axes(to_log_rate(anchor), mode);
  const XYSeries t = project_axes(to_log_rate(target), mode);
  const IntegrationInterval iv = intersect_intervals(a, t);

  auto integral = [&](const XYSeries& s) {
    return s.size() >= dense_threshold ? dense_curve_integral(s, iv)
                                       : predict_curve_integral(s, iv, bundle);
  };
  BDCIResult r{.mode = mode, .interval = iv, .mean_percent = {}, .interval_percent = {}, .anchor = {}, .target = {}};
  r.anchor = integral(a);
  r.target = integral(t);
  r.degenerate_fallback = r.anchor.degenerate_fallback || r.target.degenerate_fallback;

  const double w = iv.width();
  r.mean_delta = (r.target.estimate.mu - r.anchor.estimate.mu) / w;
  r.sigma_delta = std::hypot(r.anchor.estimate.sigma, r.target.estimate.sigma) / w;
  r.interval_delta = {r.mean_delta - kIntervalSigmas * r.sigma_delta,
                      r.mean_delta + kIntervalSigmas * r.sigma_delta};
  if (mode == Mode::BDRate) {
    r.mean_percent = std::expm1(r.mean_delta) * 100.0;
    r.interval_percent = std::array<double, 2>{std::expm1(r.interval_delta[0]) * 100.0,
                                               std::expm1(r.interval_delta[1]) * 100.0};
  }
  return r;
}

}  // namespace bdci
