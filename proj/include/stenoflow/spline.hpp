#ifndef STENOFLOW_SPLINE_HPP
#define STENOFLOW_SPLINE_HPP

#include <cstddef>
#include <vector>

#include "stenoflow/errors.hpp"

namespace stenoflow {

/// Solve a tridiagonal system in place (Thomas algorithm).
/// lower[0] and upper[n-1] are unused. rhs is overwritten with the solution.
inline void solve_tridiagonal(std::vector<double>& lower, std::vector<double>& diag,
                              std::vector<double>& upper, std::vector<double>& rhs) {
  const std::size_t n = diag.size();
  for (std::size_t i = 1; i < n; ++i) {
    const double m = lower[i] / diag[i - 1];
    diag[i] -= m * upper[i - 1];
    rhs[i] -= m * rhs[i - 1];
  }
  rhs[n - 1] /= diag[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
}

/*! @brief Natural cubic spline through (x_i, y_i) with C2 continuity.
 *
 * Evaluation clamps to the end segments; value/deriv/second_deriv share
 * the per-segment cubic so the three are mutually consistent.
 */
class CubicSpline {
 public:
  CubicSpline() = default;

  CubicSpline(std::vector<double> x, std::vector<double> y)
      : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 3 || y_.size() != n)
      throw InvalidParameterError("CubicSpline: need >= 3 matching knots");
    for (std::size_t i = 0; i + 1 < n; ++i)
      if (!(x_[i + 1] > x_[i]))
        throw InvalidParameterError("CubicSpline: knots must be strictly increasing");

    // Second derivatives m_i from the natural conditions m_0 = m_{n-1} = 0.
    m_.assign(n, 0.0);
    std::vector<double> lower(n - 2), diag(n - 2), upper(n - 2), rhs(n - 2);
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const double h0 = x_[i] - x_[i - 1];
      const double h1 = x_[i + 1] - x_[i];
      lower[i - 1] = h0;
      diag[i - 1] = 2.0 * (h0 + h1);
      upper[i - 1] = h1;
      rhs[i - 1] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
    }
    solve_tridiagonal(lower, diag, upper, rhs);
    for (std::size_t i = 1; i + 1 < n; ++i) m_[i] = rhs[i - 1];
  }

  double x_min() const { return x_.front(); }
  double x_max() const { return x_.back(); }

  double value(double x) const {
    const auto [i, h] = locate(x);
    const double a = (x_[i + 1] - x) / h;
    const double b = (x - x_[i]) / h;
    return a * y_[i] + b * y_[i + 1] +
           ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
  }

  double deriv(double x) const {
    const auto [i, h] = locate(x);
    const double a = (x_[i + 1] - x) / h;
    const double b = (x - x_[i]) / h;
    return (y_[i + 1] - y_[i]) / h +
           ((3.0 * b * b - 1.0) * m_[i + 1] - (3.0 * a * a - 1.0) * m_[i]) * h / 6.0;
  }

  double second_deriv(double x) const {
    const auto [i, h] = locate(x);
    const double a = (x_[i + 1] - x) / h;
    const double b = (x - x_[i]) / h;
    return a * m_[i] + b * m_[i + 1];
  }

 private:
  struct Segment {
    std::size_t i;
    double h;
  };

  Segment locate(double x) const {
    std::size_t lo = 0, hi = x_.size() - 1;
    if (x <= x_.front()) {
      hi = 1;
    } else if (x >= x_.back()) {
      lo = x_.size() - 2;
    } else {
      while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        (x_[mid] <= x ? lo : hi) = mid;
      }
    }
    return {lo, x_[lo + 1] - x_[lo]};
  }

  std::vector<double> x_, y_, m_;
};

}  // namespace stenoflow

#endif
