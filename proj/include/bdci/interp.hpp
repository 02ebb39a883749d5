#pragma once

// Classical R-D interpolants: least-squares cubic, not-a-knot cubic spline,
// Fritsch-Carlson PCHIP and Akima.  Every fit is an exact piecewise (or
// single) cubic so definite integrals are closed form.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "bdci/error.hpp"
#include "bdci/rd_core.hpp"

namespace bdci {

/// a0 + a1 x + a2 x^2 + a3 x^3
struct Polynomial3 {
  std::array<double, 4> a{};
};

/// On [t_k, t_{k+1}]: c0 + c1 u + c2 u^2 + c3 u^3 with u = x - t_k.
class PiecewiseCubic {
 public:
  using Coeffs = std::array<double, 4>;

  PiecewiseCubic(std::vector<double> breakpoints, std::vector<Coeffs> coeffs)
      : t_(std::move(breakpoints)), c_(std::move(coeffs)) {
    if (t_.size() < 2) fail(ErrorCode::TooFewPoints, "piecewise cubic needs 2 breakpoints");
    if (c_.size() + 1 != t_.size()) {
      fail(ErrorCode::DimensionMismatch, "need one coefficient set per interval");
    }
    for (std::size_t k = 1; k < t_.size(); ++k) {
      if (!(t_[k] > t_[k - 1])) fail(ErrorCode::DuplicateX, "breakpoints must increase");
    }
  }

  const std::vector<double>& breakpoints() const noexcept { return t_; }
  const std::vector<Coeffs>& coeffs() const noexcept { return c_; }
  std::size_t intervals() const noexcept { return c_.size(); }
  double lo() const noexcept { return t_.front(); }
  double hi() const noexcept { return t_.back(); }

  /// Index of the interval owning x (right-closed on the last interval).
  std::size_t locate(double x) const {
    if (!(x >= t_.front() && x <= t_.back())) {
      fail(ErrorCode::OutOfDomain, "x=" + std::to_string(x) + " outside [" +
                                       std::to_string(t_.front()) + ", " +
                                       std::to_string(t_.back()) + "]");
    }
    auto it = std::upper_bound(t_.begin(), t_.end(), x);
    std::size_t k = static_cast<std::size_t>(it - t_.begin());
    return k == 0 ? 0 : std::min(k - 1, c_.size() - 1);
  }

 private:
  std::vector<double> t_;
  std::vector<Coeffs> c_;
};

using Fit = std::variant<Polynomial3, PiecewiseCubic>;

namespace detail {

inline double horner(const std::array<double, 4>& c, double u) {
  return c[0] + u * (c[1] + u * (c[2] + u * c[3]));
}

inline double antiderivative(const std::array<double, 4>& c, double u) {
  return u * (c[0] + u * (c[1] / 2.0 + u * (c[2] / 3.0 + u * (c[3] / 4.0))));
}

inline std::vector<double> secants(const XYSeries& s) {
  const auto& x = s.xs();
  const auto& y = s.ys();
  std::vector<double> m(x.size() - 1);
  for (std::size_t k = 0; k + 1 < x.size(); ++k) m[k] = (y[k + 1] - y[k]) / (x[k + 1] - x[k]);
  return m;
}

/// Cubic Hermite segments from knot values and knot slopes.
inline PiecewiseCubic hermite(const XYSeries& s, const std::vector<double>& slope) {
  const auto& x = s.xs();
  const auto& y = s.ys();
  std::vector<PiecewiseCubic::Coeffs> c(x.size() - 1);
  for (std::size_t k = 0; k + 1 < x.size(); ++k) {
    const double h = x[k + 1] - x[k];
    const double m = (y[k + 1] - y[k]) / h;
    c[k] = {y[k], slope[k], (3.0 * m - 2.0 * slope[k] - slope[k + 1]) / h,
            (slope[k] + slope[k + 1] - 2.0 * m) / (h * h)};
  }
  return PiecewiseCubic(x, std::move(c));
}

inline int sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace detail

inline Polynomial3 fit_cubic_ls(const XYSeries& series) {
  const auto& xs = series.xs();
  const auto& ys = series.ys();
  const std::size_t n = xs.size();
  if (n < 4) fail(ErrorCode::TooFewPoints, "cubic fit needs at least 4 points");

  const double shift = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(n);
  Eigen::MatrixXd v(n, 4);
  Eigen::VectorXd rhs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = xs[i] - shift;
    v(i, 0) = 1.0;
    v(i, 1) = u;
    v(i, 2) = u * u;
    v(i, 3) = u * u * u;
    rhs(i) = ys[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(v);
  qr.setThreshold(1e-13);
  if (qr.rank() < 4) fail(ErrorCode::SingularSystem, "Vandermonde system is rank deficient");
  const Eigen::Vector4d b = qr.solve(rhs);

  // Expand q(x - shift) back into the monomial basis.
  const double s = shift;
  Polynomial3 p;
  p.a[0] = b(0) - b(1) * s + b(2) * s * s - b(3) * s * s * s;
  p.a[1] = b(1) - 2.0 * b(2) * s + 3.0 * b(3) * s * s;
  p.a[2] = b(2) - 3.0 * b(3) * s;
  p.a[3] = b(3);
  for (double c : p.a) {
    if (!std::isfinite(c)) fail(ErrorCode::SingularSystem, "non-finite cubic coefficient");
  }
  return p;
}

/// C2 cubic spline with not-a-knot end conditions.
inline PiecewiseCubic fit_csi(const XYSeries& series) {
  const auto& x = series.xs();
  const std::size_t n = x.size();
  if (n < 4) fail(ErrorCode::TooFewPoints, "not-a-knot spline needs at least 4 points");

  const std::vector<double> m = detail::secants(series);
  std::vector<double> h(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) h[k] = x[k + 1] - x[k];

  // Unknowns are the knot slopes.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd r(n);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    a(i, i - 1) = h[i];
    a(i, i) = 2.0 * (h[i - 1] + h[i]);
    a(i, i + 1) = h[i - 1];
    r(i) = 3.0 * (h[i] * m[i - 1] + h[i - 1] * m[i]);
  }
  // Third derivative continuous across the second and penultimate knots.
  a(0, 0) = h[1];
  a(0, 1) = h[0] + h[1];
  r(0) = ((h[0] + 2.0 * (h[0] + h[1])) * h[1] * m[0] + h[0] * h[0] * m[1]) / (h[0] + h[1]);
  const std::size_t L = n - 1;
  a(L, L - 1) = h[L - 1] + h[L - 2];
  a(L, L) = h[L - 2];
  r(L) = (h[L - 1] * h[L - 1] * m[L - 2] + (2.0 * (h[L - 2] + h[L - 1]) + h[L - 1]) * h[L - 2] * m[L - 1]) /
         (h[L - 2] + h[L - 1]);

  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  const Eigen::VectorXd s = lu.solve(r);
  std::vector<double> slope(s.data(), s.data() + n);
  for (double v : slope) {
    if (!std::isfinite(v)) fail(ErrorCode::SingularSystem, "spline system is singular");
  }
  return detail::hermite(series, slope);
}

/// Fritsch-Carlson monotone cubic Hermite interpolant.
inline PiecewiseCubic fit_pchip(const XYSeries& series) {
  const auto& x = series.xs();
  const std::size_t n = x.size();
  const std::vector<double> m = detail::secants(series);
  std::vector<double> d(n, 0.0);
  if (n == 2) {
    d[0] = d[1] = m[0];
    return detail::hermite(series, d);
  }
  std::vector<double> h(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) h[k] = x[k + 1] - x[k];

  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (detail::sign(m[k - 1]) * detail::sign(m[k]) <= 0) {
      d[k] = 0.0;
    } else {
      const double w1 = 2.0 * h[k] + h[k - 1];
      const double w2 = h[k] + 2.0 * h[k - 1];
      d[k] = (w1 + w2) / (w1 / m[k - 1] + w2 / m[k]);
    }
  }

  // One-sided three-point estimate, clamped to keep the end intervals monotone.
  auto edge = [](double h0, double h1, double m0, double m1) {
    double e = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if (detail::sign(e) != detail::sign(m0)) {
      e = 0.0;
    } else if (detail::sign(m0) != detail::sign(m1) && std::abs(e) > 3.0 * std::abs(m0)) {
      e = 3.0 * m0;
    }
    return e;
  };
  d[0] = edge(h[0], h[1], m[0], m[1]);
  d[n - 1] = edge(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
  return detail::hermite(series, d);
}

/// Akima (1970) spline.  Needs two extrapolated secants on each side.
inline PiecewiseCubic fit_akima(const XYSeries& series) {
  const std::size_t n = series.size();
  if (n < 5) fail(ErrorCode::TooFewPoints, "Akima spline needs at least 5 points");
  const std::vector<double> sec = detail::secants(series);

  // ext[j + 2] == secant j; two quadratic-extrapolated secants per side.
  std::vector<double> ext(n + 3);
  std::copy(sec.begin(), sec.end(), ext.begin() + 2);
  ext[1] = 2.0 * ext[2] - ext[3];
  ext[0] = 2.0 * ext[1] - ext[2];
  ext[n + 1] = 2.0 * ext[n] - ext[n - 1];
  ext[n + 2] = 2.0 * ext[n + 1] - ext[n];

  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Secants m_{i-2}, m_{i-1}, m_i, m_{i+1}.
    const double m1 = ext[i], m2 = ext[i + 1], m3 = ext[i + 2], m4 = ext[i + 3];
    const double w1 = std::abs(m4 - m3);
    const double w2 = std::abs(m2 - m1);
    d[i] = (w1 + w2 == 0.0) ? 0.5 * (m2 + m3) : (w1 * m2 + w2 * m3) / (w1 + w2);
  }
  return detail::hermite(series, d);
}

inline Fit fit_series(const XYSeries& series, Method method) {
  switch (method) {
    case Method::Cubic: return fit_cubic_ls(series);
    case Method::Csi: return fit_csi(series);
    case Method::Pchip: return fit_pchip(series);
    case Method::Akima: return fit_akima(series);
    default: fail(ErrorCode::InvalidArgument, "not an interpolation method");
  }
}

inline double evaluate(const Polynomial3& p, double x) { return detail::horner(p.a, x); }

inline double evaluate(const PiecewiseCubic& f, double x) {
  const std::size_t k = f.locate(x);
  return detail::horner(f.coeffs()[k], x - f.breakpoints()[k]);
}

inline double evaluate(const Fit& fit, double x) {
  return std::visit([x](const auto& f) { return evaluate(f, x); }, fit);
}

/// First derivative; only used by diagnostics and tests.
inline double derivative(const PiecewiseCubic& f, double x) {
  const std::size_t k = f.locate(x);
  const auto& c = f.coeffs()[k];
  const double u = x - f.breakpoints()[k];
  return c[1] + u * (2.0 * c[2] + u * 3.0 * c[3]);
}

inline double integrate_fit(const Polynomial3& p, const IntegrationInterval& iv) {
  // Shift to the interval midpoint so large |x| does not cancel catastrophically.
  const double mid = 0.5 * (iv.lo + iv.hi);
  const auto& a = p.a;
  const std::array<double, 4> c = {
      a[0] + mid * (a[1] + mid * (a[2] + mid * a[3])),
      a[1] + mid * (2.0 * a[2] + 3.0 * a[3] * mid),
      a[2] + 3.0 * a[3] * mid,
      a[3],
  };
  return detail::antiderivative(c, iv.hi - mid) - detail::antiderivative(c, iv.lo - mid);
}

inline double integrate_fit(const PiecewiseCubic& f, const IntegrationInterval& iv) {
  const auto& t = f.breakpoints();
  if (iv.lo < t.front() || iv.hi > t.back()) {
    fail(ErrorCode::OutOfDomain, "integration interval exceeds the fit's domain");
  }
  const std::size_t first = f.locate(iv.lo);
  const std::size_t last = f.locate(iv.hi);
  double total = 0.0;
  for (std::size_t k = first; k <= last; ++k) {
    const double a = std::max(iv.lo, t[k]);
    const double b = std::min(iv.hi, t[k + 1]);
    if (b <= a) continue;
    const auto& c = f.coeffs()[k];
    total += detail::antiderivative(c, b - t[k]) - detail::antiderivative(c, a - t[k]);
  }
  return total;
}

inline double integrate_fit(const Fit& fit, const IntegrationInterval& iv) {
  return std::visit([&iv](const auto& f) { return integrate_fit(f, iv); }, fit);
}

}  // namespace bdci
