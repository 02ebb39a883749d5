#pragma once

// Rate-distortion sample handling: validation, the log-rate transform, axis
// projection for the two BD flavours, interval intersection, and turning a
// pair of integrals into a BD number.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bdci/error.hpp"

namespace bdci {

inline constexpr double kRelativeTieTolerance = 1e-12;

enum class Mode { BDRate, BDQuality };

enum class Method { Cubic, Csi, Pchip, Akima, BdciMean, Oracle };

enum class Direction { Increasing, Decreasing };

constexpr std::string_view to_string(Mode mode) {
  return mode == Mode::BDRate ? "br" : "quality";
}

constexpr std::string_view to_string(Method method) {
  switch (method) {
    case Method::Cubic: return "cubic";
    case Method::Csi: return "csi";
    case Method::Pchip: return "pchip";
    case Method::Akima: return "akima";
    case Method::BdciMean: return "bdci-mean";
    case Method::Oracle: return "oracle";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  if (s == "br" || s == "bd-br" || s == "rate") return Mode::BDRate;
  if (s == "quality" || s == "bd-quality") return Mode::BDQuality;
  fail(ErrorCode::InvalidArgument, "unknown mode '" + std::string(s) + "'");
}

inline Method parse_method(std::string_view s) {
  for (Method m : {Method::Cubic, Method::Csi, Method::Pchip, Method::Akima,
                   Method::BdciMean, Method::Oracle}) {
    if (to_string(m) == s) return m;
  }
  fail(ErrorCode::InvalidArgument, "unknown method '" + std::string(s) + "'");
}

struct RDPoint {
  double rate = 0.0;
  double quality = 0.0;

  friend bool operator==(const RDPoint&, const RDPoint&) = default;
};

class RDCurveSamples;
RDCurveSamples validate_samples(std::span<const RDPoint> raw, std::string metric_name,
                                std::string source_label);
RDCurveSamples to_log_rate(const RDCurveSamples& samples);

/// Sorted, validated (rate, quality) samples of one codec on one item.
/// Only constructible through validate_samples / to_log_rate.
class RDCurveSamples {
 public:
  const std::vector<RDPoint>& points() const noexcept { return points_; }
  std::size_t size() const noexcept { return points_.size(); }
  const std::string& metric_name() const noexcept { return metric_name_; }
  const std::string& source_label() const noexcept { return source_label_; }
  Direction direction() const noexcept { return direction_; }
  /// True once rates hold natural-log values rather than bitrates.
  bool log_scaled() const noexcept { return log_scaled_; }

 private:
  RDCurveSamples() = default;

  std::vector<RDPoint> points_;
  std::string metric_name_;
  std::string source_label_;
  Direction direction_ = Direction::Increasing;
  bool log_scaled_ = false;

  friend RDCurveSamples validate_samples(std::span<const RDPoint>, std::string, std::string);
  friend RDCurveSamples to_log_rate(const RDCurveSamples&);
};

/// Axis-projected points ready for integration, xs strictly increasing.
class XYSeries {
 public:
  XYSeries(std::vector<double> xs, std::vector<double> ys, Mode mode)
      : xs_(std::move(xs)), ys_(std::move(ys)), mode_(mode) {
    if (xs_.size() != ys_.size()) {
      fail(ErrorCode::DimensionMismatch, "xs and ys differ in length");
    }
    if (xs_.size() < 2) fail(ErrorCode::TooFewPoints, "series needs at least 2 points");
    for (std::size_t i = 0; i < xs_.size(); ++i) {
      if (!std::isfinite(xs_[i]) || !std::isfinite(ys_[i])) {
        fail(ErrorCode::NonFiniteQuality, "non-finite coordinate in series");
      }
    }
    const double span = xs_.back() - xs_.front();
    for (std::size_t i = 1; i < xs_.size(); ++i) {
      if (!(xs_[i] - xs_[i - 1] > kRelativeTieTolerance * std::abs(span))) {
        fail(ErrorCode::DuplicateX, "xs must be strictly increasing (index " +
                                        std::to_string(i) + ")");
      }
    }
  }

  const std::vector<double>& xs() const noexcept { return xs_; }
  const std::vector<double>& ys() const noexcept { return ys_; }
  std::size_t size() const noexcept { return xs_.size(); }
  Mode mode() const noexcept { return mode_; }
  double x_min() const noexcept { return xs_.front(); }
  double x_max() const noexcept { return xs_.back(); }

 private:
  std::vector<double> xs_;
  std::vector<double> ys_;
  Mode mode_;
};

inline bool is_degenerate_width(double lo, double hi) {
  return hi - lo <= 1e-12 * std::max({std::abs(lo), std::abs(hi), 1.0});
}

struct IntegrationInterval {
  double lo;
  double hi;

  IntegrationInterval(double lo_, double hi_) : lo(lo_), hi(hi_) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi) || is_degenerate_width(lo, hi)) {
      fail(ErrorCode::DegenerateInterval,
           "interval [" + std::to_string(lo) + ", " + std::to_string(hi) + "] has no width");
    }
  }

  double width() const noexcept { return hi - lo; }

  friend bool operator==(const IntegrationInterval&, const IntegrationInterval&) = default;
};

struct BDValue {
  double delta = 0.0;                   // delta log-rate (BD-BR) or delta quality
  std::optional<double> delta_percent;  // BD-BR only: (e^delta - 1) * 100
  IntegrationInterval interval;
  Mode mode;
  Method method;
};

inline RDCurveSamples validate_samples(std::span<const RDPoint> raw, std::string metric_name,
                                       std::string source_label) {
  if (raw.empty()) fail(ErrorCode::TooFewPoints, "no sample points");
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const RDPoint& p = raw[i];
    if (std::isnan(p.rate) || p.rate <= 0.0) {
      fail(ErrorCode::NonPositiveRate, "rate must be > 0 (point " + std::to_string(i) + ")");
    }
    if (!std::isfinite(p.rate)) {
      fail(ErrorCode::NonFiniteRate, "rate must be finite (point " + std::to_string(i) + ")");
    }
    if (!std::isfinite(p.quality)) {
      fail(ErrorCode::NonFiniteQuality, "quality must be finite (point " + std::to_string(i) + ")");
    }
  }
  if (raw.size() < 2) fail(ErrorCode::TooFewPoints, "need at least 2 points, got 1");

  std::vector<RDPoint> pts(raw.begin(), raw.end());
  std::stable_sort(pts.begin(), pts.end(),
                   [](const RDPoint& a, const RDPoint& b) { return a.rate < b.rate; });

  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double a = pts[i - 1].rate, b = pts[i].rate;
    if (b - a <= kRelativeTieTolerance * std::max(a, b)) {
      fail(ErrorCode::DuplicateRate, "rates " + std::to_string(a) + " and " + std::to_string(b) +
                                         " coincide");
    }
  }

  auto [qmin, qmax] = std::minmax_element(pts.begin(), pts.end(), [](auto& a, auto& b) {
    return a.quality < b.quality;
  });
  const double qspan = qmax->quality - qmin->quality;
  const double tie = kRelativeTieTolerance * std::max(qspan, std::abs(qmax->quality));
  const bool increasing = pts.back().quality > pts.front().quality;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double step = pts[i].quality - pts[i - 1].quality;
    const bool ok = increasing ? step > tie : step < -tie;
    if (!ok) {
      fail(ErrorCode::NonMonotoneQuality,
           "quality is not strictly monotone at rate " + std::to_string(pts[i].rate));
    }
  }

  RDCurveSamples out;
  out.points_ = std::move(pts);
  out.metric_name_ = std::move(metric_name);
  out.source_label_ = std::move(source_label);
  out.direction_ = increasing ? Direction::Increasing : Direction::Decreasing;
  return out;
}

inline RDCurveSamples to_log_rate(const RDCurveSamples& samples) {
  if (samples.log_scaled()) return samples;
  RDCurveSamples out = samples;
  for (RDPoint& p : out.points_) p.rate = std::log(p.rate);
  out.log_scaled_ = true;
  return out;
}

/// BD-BR: X = quality, Y = log-rate.  BD-quality: X = log-rate, Y = quality.
inline XYSeries project_axes(const RDCurveSamples& log_samples, Mode mode) {
  if (!log_samples.log_scaled()) {
    fail(ErrorCode::InvalidArgument, "project_axes expects log-rate samples");
  }
  const auto& pts = log_samples.points();
  std::vector<double> xs, ys;
  xs.reserve(pts.size());
  ys.reserve(pts.size());
  for (const RDPoint& p : pts) {
    if (mode == Mode::BDRate) {
      xs.push_back(p.quality);
      ys.push_back(p.rate);
    } else {
      xs.push_back(p.rate);
      ys.push_back(p.quality);
    }
  }
  if (mode == Mode::BDRate && log_samples.direction() == Direction::Decreasing) {
    std::reverse(xs.begin(), xs.end());
    std::reverse(ys.begin(), ys.end());
  }
  return XYSeries(std::move(xs), std::move(ys), mode);
}

inline IntegrationInterval intersect_intervals(const XYSeries& a, const XYSeries& b) {
  const double lo = std::max(a.x_min(), b.x_min());
  const double hi = std::min(a.x_max(), b.x_max());
  if (!(lo < hi) || is_degenerate_width(lo, hi)) {
    fail(ErrorCode::EmptyIntersection, "curve ranges [" + std::to_string(a.x_min()) + ", " +
                                           std::to_string(a.x_max()) + "] and [" +
                                           std::to_string(b.x_min()) + ", " +
                                           std::to_string(b.x_max()) + "] do not overlap");
  }
  return IntegrationInterval(lo, hi);
}

inline BDValue delta_from_integrals(double integral_target, double integral_anchor,
                                    const IntegrationInterval& interval, Mode mode,
                                    Method method = Method::Oracle) {
  const double delta = (integral_target - integral_anchor) / interval.width();
  BDValue v{delta, std::nullopt, interval, mode, method};
  if (mode == Mode::BDRate) v.delta_percent = std::expm1(delta) * 100.0;
  return v;
}

}  // namespace bdci
