#ifndef STENOFLOW_GAUSS_HPP
#define STENOFLOW_GAUSS_HPP

#include <cmath>
#include <cstddef>
#include <vector>

#include "stenoflow/errors.hpp"

namespace stenoflow {

/// Legendre polynomial P_n(x) and derivative, by the three-term recurrence.
inline void legendre_eval(int n, double x, double* value, double* deriv) {
  double p0 = 1.0, p1 = x;
  double d0 = 0.0, d1 = 1.0;
  if (n == 0) {
    *value = p0;
    *deriv = d0;
    return;
  }
  for (int m = 1; m < n; ++m) {
    const double p2 = ((2 * m + 1) * x * p1 - m * p0) / (m + 1);
    const double d2 = d0 + (2 * m + 1) * p1;
    p0 = p1;
    p1 = p2;
    d0 = d1;
    d1 = d2;
  }
  *value = p1;
  *deriv = d1;
}

/// Basis value phi_m(x) = sqrt(m + 1/2) * P_m(x): orthonormal on [-1,1].
inline double legendre_orthonormal(int m, double x) {
  double p, d;
  legendre_eval(m, x, &p, &d);
  return std::sqrt(m + 0.5) * p;
}

/// d/dx of the orthonormal basis function.
inline double legendre_orthonormal_deriv(int m, double x) {
  double p, d;
  legendre_eval(m, x, &p, &d);
  return std::sqrt(m + 0.5) * d;
}

/// Gauss-Legendre rule on [-1,1]. Nodes by Newton iteration from the
/// Chebyshev initial guess; exact for polynomials of degree 2n-1.
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  explicit GaussRule(int n) {
    if (n < 1) throw InvalidParameterError("GaussRule: need at least one point");
    nodes.resize(n);
    weights.resize(n);
    for (int i = 0; i < n; ++i) {
      double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
      double p, d;
      for (int it = 0; it < 100; ++it) {
        legendre_eval(n, x, &p, &d);
        const double dx = p / d;
        x -= dx;
        if (std::abs(dx) < 1e-15) break;
      }
      legendre_eval(n, x, &p, &d);
      nodes[i] = x;
      weights[i] = 2.0 / ((1.0 - x * x) * d * d);
    }
    // Newton's guess ordering gives descending nodes; flip to ascending.
    for (int i = 0; i < n / 2; ++i) {
      std::swap(nodes[i], nodes[n - 1 - i]);
      std::swap(weights[i], weights[n - 1 - i]);
    }
  }

  int size() const { return static_cast<int>(nodes.size()); }

  /// Integrate f over [a,b].
  template <class F>
  double integrate(F&& f, double a, double b) const {
    const double half = 0.5 * (b - a);
    const double mid = 0.5 * (a + b);
    double sum = 0.0;
    for (int q = 0; q < size(); ++q) sum += weights[q] * f(mid + half * nodes[q]);
    return half * sum;
  }
};

}  // namespace stenoflow

#endif
