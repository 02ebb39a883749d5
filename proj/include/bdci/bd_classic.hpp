#pragma once

// Classical BD pipeline: log-rate, project, fit both curves over their own
// ranges, intersect, integrate the fits in closed form, take the difference.

#include <string>

#include "bdci/interp.hpp"
#include "bdci/rd_core.hpp"

namespace bdci {

inline constexpr std::size_t kMinBdPoints = 4;
inline constexpr std::size_t kMinDenseAnchorPoints = 20;

inline std::size_t min_points_for(Method method) {
  return method == Method::Akima ? 5 : kMinBdPoints;
}

namespace detail {

inline void require_points(const RDCurveSamples& s, std::size_t need, const char* role) {
  if (s.size() < need) {
    fail(ErrorCode::TooFewPoints, std::string(role) + " curve has " + std::to_string(s.size()) +
                                      " points, need " + std::to_string(need));
  }
}

inline void require_same_metric(const RDCurveSamples& a, const RDCurveSamples& b) {
  if (a.metric_name() != b.metric_name()) {
    fail(ErrorCode::MetricMismatch,
         "anchor metric '" + a.metric_name() + "' vs target '" + b.metric_name() + "'");
  }
}

inline BDValue bd_from_fits(const XYSeries& anchor, const Fit& anchor_fit, const XYSeries& target,
                            const Fit& target_fit, Mode mode, Method method) {
  const IntegrationInterval iv = intersect_intervals(anchor, target);
  return delta_from_integrals(integrate_fit(target_fit, iv), integrate_fit(anchor_fit, iv), iv,
                              mode, method);
}

}  // namespace detail

inline BDValue compute_bd(const RDCurveSamples& anchor, const RDCurveSamples& target, Mode mode,
                          Method method) {
  detail::require_same_metric(anchor, target);
  const std::size_t need = min_points_for(method);
  detail::require_points(anchor, need, "anchor");
  detail::require_points(target, need, "target");

  const XYSeries a = project_axes(to_log_rate(anchor), mode);
  const XYSeries t = project_axes(to_log_rate(target), mode);
  return detail::bd_from_fits(a, fit_series(a, method), t, fit_series(t, method), mode, method);
}

/// The anchor is densely sampled and always fitted with PCHIP; `method` only
/// applies to the sparse target.
inline BDValue compute_bd_dense_anchor(const RDCurveSamples& anchor_dense,
                                       const RDCurveSamples& target, Mode mode, Method method,
                                       std::size_t min_anchor_points = kMinDenseAnchorPoints) {
  detail::require_same_metric(anchor_dense, target);
  detail::require_points(anchor_dense, min_anchor_points, "dense anchor");
  detail::require_points(target, min_points_for(method), "target");

  const XYSeries a = project_axes(to_log_rate(anchor_dense), mode);
  const XYSeries t = project_axes(to_log_rate(target), mode);
  return detail::bd_from_fits(a, fit_pchip(a), t, fit_series(t, method), mode, method);
}

}  // namespace bdci
