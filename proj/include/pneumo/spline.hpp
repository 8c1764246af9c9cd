#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace pneumo {

/// Cubic interpolating spline with prescribed end slopes (clamped ends).
/// Outside the knot span it holds the end values.
class CubicSpline {
 public:
  CubicSpline() = default;

  CubicSpline(std::vector<double> t, std::vector<double> y, double slope0 = 0.0, double slope1 = 0.0)
      : t_(std::move(t)), y_(std::move(y)) {
    const std::size_t n = t_.size();
    if (n < 2 || y_.size() != n) throw std::invalid_argument("spline needs >= 2 knots with matching values");
    for (std::size_t i = 1; i < n; ++i)
      if (!(t_[i] > t_[i - 1])) throw std::invalid_argument("spline knot times must be strictly increasing");

    // Second derivatives m_i from the clamped-end tridiagonal system.
    std::vector<double> a(n), b(n), c(n), d(n);
    const auto h = [&](std::size_t i) { return t_[i + 1] - t_[i]; };
    b[0] = 2 * h(0);
    c[0] = h(0);
    d[0] = 6 * ((y_[1] - y_[0]) / h(0) - slope0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      a[i] = h(i - 1);
      b[i] = 2 * (h(i - 1) + h(i));
      c[i] = h(i);
      d[i] = 6 * ((y_[i + 1] - y_[i]) / h(i) - (y_[i] - y_[i - 1]) / h(i - 1));
    }
    a[n - 1] = h(n - 2);
    b[n - 1] = 2 * h(n - 2);
    d[n - 1] = 6 * (slope1 - (y_[n - 1] - y_[n - 2]) / h(n - 2));
    for (std::size_t i = 1; i < n; ++i) {
      const double w = a[i] / b[i - 1];
      b[i] -= w * c[i - 1];
      d[i] -= w * d[i - 1];
    }
    m_.assign(n, 0.0);
    m_[n - 1] = d[n - 1] / b[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) m_[i] = (d[i] - c[i] * m_[i + 1]) / b[i];
  }

  double operator()(double x) const { return eval(x, false); }
  double derivative(double x) const { return eval(x, true); }

  const std::vector<double>& knots_t() const { return t_; }
  const std::vector<double>& knots_y() const { return y_; }

 private:
  double eval(double x, bool deriv) const {
    if (t_.empty()) throw std::logic_error("empty spline");
    if (x <= t_.front()) return deriv ? 0.0 : y_.front();
    if (x >= t_.back()) return deriv ? 0.0 : y_.back();
    const auto it = std::upper_bound(t_.begin(), t_.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - t_.begin()) - 1;
    const double h = t_[i + 1] - t_[i];
    const double A = (t_[i + 1] - x) / h, B = (x - t_[i]) / h;
    if (!deriv)
      return A * y_[i] + B * y_[i + 1] + ((A * A * A - A) * m_[i] + (B * B * B - B) * m_[i + 1]) * h * h / 6.0;
    return (y_[i + 1] - y_[i]) / h - (3 * A * A - 1) / 6.0 * h * m_[i] + (3 * B * B - 1) / 6.0 * h * m_[i + 1];
  }

  std::vector<double> t_, y_, m_;
};

}  // namespace pneumo
