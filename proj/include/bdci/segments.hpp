#pragma once

// Normalisation of a sample series to the unit square and decomposition of
// an integration interval into per-knot-interval segments, each assigned to
// one of seven categories by position (first / interior / last) and by
// which integration bound, if any, falls strictly inside it.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bdci/error.hpp"
#include "bdci/rd_core.hpp"

namespace bdci {

enum class SegmentCategory : int {
  FirstFull = 0,
  InteriorFull = 1,
  LastFull = 2,
  FirstWithXmin = 3,
  InteriorWithXmin = 4,
  InteriorWithXmax = 5,
  LastWithXmax = 6,
};

inline constexpr std::size_t kNumCategories = 7;

inline constexpr std::array<SegmentCategory, kNumCategories> kAllCategories = {
    SegmentCategory::FirstFull,        SegmentCategory::InteriorFull,
    SegmentCategory::LastFull,         SegmentCategory::FirstWithXmin,
    SegmentCategory::InteriorWithXmin, SegmentCategory::InteriorWithXmax,
    SegmentCategory::LastWithXmax,
};

constexpr std::string_view to_string(SegmentCategory c) {
  switch (c) {
    case SegmentCategory::FirstFull: return "FirstFull";
    case SegmentCategory::InteriorFull: return "InteriorFull";
    case SegmentCategory::LastFull: return "LastFull";
    case SegmentCategory::FirstWithXmin: return "FirstWithXmin";
    case SegmentCategory::InteriorWithXmin: return "InteriorWithXmin";
    case SegmentCategory::InteriorWithXmax: return "InteriorWithXmax";
    case SegmentCategory::LastWithXmax: return "LastWithXmax";
  }
  return "?";
}

constexpr std::size_t index_of(SegmentCategory c) { return static_cast<std::size_t>(c); }

constexpr bool has_boundary(SegmentCategory c) { return index_of(c) >= 3; }

constexpr int input_width(SegmentCategory c) { return has_boundary(c) ? 9 : 8; }

inline SegmentCategory category_from_index(std::size_t i) {
  if (i >= kNumCategories) fail(ErrorCode::InvalidArgument, "bad category index");
  return kAllCategories[i];
}

inline constexpr double kKnotSnapTolerance = 1e-9;

struct NormParams {
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;

  double x_span() const noexcept { return x_max - x_min; }
  double y_span() const noexcept { return y_max - y_min; }
  double to_x(double x) const { return (x - x_min) / x_span(); }
  double to_y(double y) const { return (y - y_min) / y_span(); }

  /// Original-unit integral over [lo, hi] given the normalised-space integral.
  double denormalize_integral(double norm_integral, double lo, double hi) const {
    return y_min * (hi - lo) + x_span() * y_span() * norm_integral;
  }
  double denormalize_sigma(double norm_sigma) const { return x_span() * y_span() * norm_sigma; }
};

inline NormParams norm_params(const XYSeries& series) {
  const auto& ys = series.ys();
  auto [lo, hi] = std::minmax_element(ys.begin(), ys.end());
  return {series.x_min(), series.x_max(), *lo, *hi};
}

inline std::pair<XYSeries, NormParams> normalize_series(const XYSeries& series) {
  const NormParams p = norm_params(series);
  if (!(p.y_span() > 0.0)) fail(ErrorCode::FlatY, "series has constant Y");
  std::vector<double> xs(series.size()), ys(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) {
    xs[i] = p.to_x(series.xs()[i]);
    ys[i] = p.to_y(series.ys()[i]);
  }
  xs.front() = 0.0;
  xs.back() = 1.0;
  return {XYSeries(std::move(xs), std::move(ys), series.mode()), p};
}

/// Decreasing normalised series are mirrored to y' = 1 - y before they reach
/// a network, so one model serves both orientations.  A segment integral over
/// [a, b] maps back as (b - a) - I'.
inline std::pair<XYSeries, bool> canonical_orientation(const XYSeries& norm) {
  if (norm.ys().front() <= norm.ys().back()) return {norm, false};
  std::vector<double> ys(norm.ys());
  for (double& y : ys) y = 1.0 - y;
  return {XYSeries(norm.xs(), std::move(ys), norm.mode()), true};
}

struct SegmentInstance {
  SegmentCategory category;
  std::size_t knot = 0;                 // segment covers knot interval [x_knot, x_knot+1]
  std::array<std::size_t, 4> support{};  // the four nearest samples, ascending
  double a = 0.0;                       // clipped sub-interval (normalised X)
  double b = 0.0;
  std::optional<double> boundary;       // X'_min or X'_max for *With* categories
};

inline std::array<std::size_t, 4> support_for(std::size_t knot, std::size_t n) {
  std::size_t first = 0;
  if (knot == 0) {
    first = 0;
  } else if (knot + 2 >= n) {
    first = n - 4;
  } else {
    first = knot - 1;
  }
  return {first, first + 1, first + 2, first + 3};
}

/// One instance per knot interval overlapping (x_lo, x_hi).  Bounds within
/// kKnotSnapTolerance of a knot snap onto it.
inline std::vector<SegmentInstance> segment_interval(std::span<const double> xs, double x_lo,
                                                     double x_hi) {
  const std::size_t n = xs.size();
  if (n < 4) fail(ErrorCode::TooFewPoints, "segmenting needs at least 4 samples");
  if (!(x_lo < x_hi)) fail(ErrorCode::DegenerateInterval, "x_lo must be below x_hi");
  if (x_lo < xs.front() - kKnotSnapTolerance || x_hi > xs.back() + kKnotSnapTolerance) {
    fail(ErrorCode::ExtrapolationRequired, "integration bounds leave the sampled range");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(x_lo - xs[i]) <= kKnotSnapTolerance) x_lo = xs[i];
    if (std::abs(x_hi - xs[i]) <= kKnotSnapTolerance) x_hi = xs[i];
  }
  if (!(x_lo < x_hi)) fail(ErrorCode::DegenerateInterval, "bounds snap onto the same knot");

  std::vector<SegmentInstance> out;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (!(xs[k] < x_hi && xs[k + 1] > x_lo)) continue;
    const bool lo_inside = x_lo > xs[k];
    const bool hi_inside = x_hi < xs[k + 1];
    if (lo_inside && hi_inside) {
      fail(ErrorCode::DegenerateSpan, "both bounds fall inside knot interval " + std::to_string(k));
    }
    const bool first = k == 0;
    const bool last = k + 2 == n;
    SegmentInstance seg;
    seg.knot = k;
    seg.support = support_for(k, n);
    seg.a = std::max(x_lo, xs[k]);
    seg.b = std::min(x_hi, xs[k + 1]);
    if (lo_inside) {
      // x_hi lies beyond this interval, so this cannot be the last one.
      if (last) fail(ErrorCode::DegenerateSpan, "x_lo inside the last knot interval");
      seg.category = first ? SegmentCategory::FirstWithXmin : SegmentCategory::InteriorWithXmin;
      seg.boundary = x_lo;
    } else if (hi_inside) {
      if (first) fail(ErrorCode::DegenerateSpan, "x_hi inside the first knot interval");
      seg.category = last ? SegmentCategory::LastWithXmax : SegmentCategory::InteriorWithXmax;
      seg.boundary = x_hi;
    } else {
      seg.category = first  ? SegmentCategory::FirstFull
                     : last ? SegmentCategory::LastFull
                            : SegmentCategory::InteriorFull;
    }
    out.push_back(seg);
  }
  return out;
}

/// (x'1, y'1, ..., x'4, y'4[, boundary])
inline std::vector<double> build_input(const SegmentInstance& seg, const XYSeries& series_norm) {
  std::vector<double> in;
  in.reserve(9);
  for (std::size_t i : seg.support) {
    in.push_back(series_norm.xs()[i]);
    in.push_back(series_norm.ys()[i]);
  }
  if (has_boundary(seg.category)) in.push_back(*seg.boundary);
  return in;
}

}  // namespace bdci
