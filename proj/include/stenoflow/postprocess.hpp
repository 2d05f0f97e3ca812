#ifndef STENOFLOW_POSTPROCESS_HPP
#define STENOFLOW_POSTPROCESS_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "stenoflow/errors.hpp"
#include "stenoflow/geometry.hpp"
#include "stenoflow/model.hpp"
#include "stenoflow/spline.hpp"

namespace stenoflow {

/// Closed-form axial profile u_z(r) = U (gamma+2)/gamma (1 - (r/R)^gamma).
/// Its cross-sectional mean with weight 2 r / R^2 is exactly U, and its
/// momentum-flux coefficient is the alpha paired with gamma = (2-a)/(a-1).
inline double axial_velocity_profile(double mean_velocity, double r, double wall_radius,
                                     double gamma) {
  if (!(wall_radius > 0.0))
    throw InvalidParameterError("axial_velocity_profile: wall radius must be positive");
  if (!(gamma > 0.0))
    throw InvalidParameterError("axial_velocity_profile: gamma must be positive");
  if (r < 0.0 || r > wall_radius)
    throw std::domain_error("axial_velocity_profile: r = " + std::to_string(r) +
                            " outside [0, " + std::to_string(wall_radius) + "]");
  return mean_velocity * (gamma + 2.0) / gamma * (1.0 - std::pow(r / wall_radius, gamma));
}

/// One axial station of a recorded solution, the input to the radial solver.
struct SliceData {
  double z = 0.0;      ///< axial position [cm]
  double a = 0.0;      ///< squared lumen radius [cm^2]
  double q = 0.0;      ///< reduced flow rate [cm^3/s]
  double da_dt = 0.0;  ///< time derivative of a [cm^2/s]; exactly 0 when steady
  GeometrySample geo;  ///< reference geometry and derivatives at z

  double wall_radius() const { return std::sqrt(a); }
  double mean_velocity() const { return q / a; }
  /// Wall velocity dR/dt = (dA/dt) / (2 sqrt(A)).
  double wall_velocity() const { return da_dt / (2.0 * std::sqrt(a)); }

  void validate() const {
    if (!(a > 0.0))
      throw InvalidParameterError("slice: a must be positive at z = " + std::to_string(z));
  }
};

/// Reference scales of the radial reconstruction. The radial length scale is
/// the local reference radius, so the derived quantities take it per slice.
struct CharacteristicScales {
  double u_z_scale;      ///< axial velocity scale [cm/s]
  double length_scale;   ///< axial length scale [cm]
  double rho;            ///< fluid density [g/cm^3]
  double mu;             ///< dynamic viscosity [g/(cm s)]

  CharacteristicScales(double u_z, double length, const PhysicalParams& p)
      : u_z_scale(u_z), length_scale(length), rho(p.rho), mu(p.mu) {
    if (!(u_z > 0.0) || !(length > 0.0) || !(rho > 0.0) || !(mu > 0.0))
      throw InvalidParameterError("scales: u_z, L, rho, mu must all be positive");
  }

  /// Radial velocity scale U_r = U_z r0 / L.
  double u_r_scale(double r0) const { return u_z_scale * r0 / length_scale; }
  /// Reduced Reynolds number rho U_z r0^2 / (mu L).
  double reynolds(double r0) const { return rho * u_z_scale * r0 * r0 / (mu * length_scale); }
};

/// Radial velocity samples on a graded grid r_0 = 0 < ... < r_n = R.
struct RadialProfile {
  std::vector<double> r;
  std::vector<double> u;

  /// Piecewise-linear sample. On [0, r_1] this is the odd-regularity segment
  /// u = c r automatically, since u(0) = 0.
  double sample(double rr) const {
    if (rr <= r.front()) return u.front();
    if (rr >= r.back()) return u.back();
    const auto it = std::upper_bound(r.begin(), r.end(), rr);
    const std::size_t i = static_cast<std::size_t>(it - r.begin());
    const double w = (rr - r[i - 1]) / (r[i] - r[i - 1]);
    return u[i - 1] + w * (u[i] - u[i - 1]);
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : u) m = std::max(m, std::abs(v));
    return m;
  }
};

namespace detail {

/// 3-point first/second derivative weights at x1 for the nonuniform
/// triple (x0, x1, x2).
inline void fd3_weights(double x0, double x1, double x2, double w1[3], double w2[3]) {
  const double hl = x1 - x0, hr = x2 - x1;
  w1[0] = -hr / (hl * (hl + hr));
  w1[1] = (hr - hl) / (hl * hr);
  w1[2] = hl / (hr * (hl + hr));
  w2[0] = 2.0 / (hl * (hl + hr));
  w2[1] = -2.0 / (hl * hr);
  w2[2] = 2.0 / (hr * (hl + hr));
}

}  // namespace detail

/*! @brief Solve the radial-velocity two-point BVP on one slice.
 *
 * r u'' + (R0 - u r Re/U_r) u'
 *   + (4 U_z r/R - 2 u r Re U_z / (R0 U_r) (1 - r^2/R^2)) dR0/dz
 *   + R0 u / r = 0,        u(0) = 0,  u(R) = dR/dt.
 *
 * Damped-Newton collocation with second-order differences on the graded grid
 * r_j = R (j/n)^p, p = 1 + ln4/ln n (so r_1 = R/(4n)). The equation is
 * collocated at interior nodes only; on [0, r_1] the solution is represented
 * by the odd-regularity segment u = c r (the R0 u / r term forces u(0) = 0
 * with finite slope). Newton damping: up to 20 step halvings per iteration,
 * at most 50 iterations per stage.
 *
 * The quadratic coupling terms (those carrying the Reynolds number) admit
 * spurious secondary roots of the discrete system where the wall slope is
 * steep; plain Newton from a rest guess can stall between basins or land on
 * the wrong root. The solve therefore ramps the coupling strength from 0 to
 * 1 in stages of at most 1/8, halving a stage that fails (and diagnosing
 * failure below stage width 1/1024). The stage at 0 is affine and solves in
 * one step from the boundary-value ramp; each later stage warm-starts from
 * the previous one, so the result follows the solution branch continuously
 * connected to the uncoupled problem.
 */
inline RadialProfile radial_velocity_solve(const SliceData& slice,
                                           const CharacteristicScales& scales,
                                           int n_points = 64) {
  slice.validate();
  if (n_points < 16) throw InvalidParameterError("radial solve: need n_points >= 16");
  const double wall_r = slice.wall_radius();
  const double dr_dt = slice.wall_velocity();
  const double r0 = slice.geo.r0;
  const double dr0 = slice.geo.dr0_dz;
  const int n = n_points;

  RadialProfile prof;
  prof.r.resize(n + 1);
  prof.u.assign(n + 1, 0.0);
  const double grade = 1.0 + std::log(4.0) / std::log(static_cast<double>(n));
  for (int j = 0; j <= n; ++j)
    prof.r[j] = wall_r * std::pow(static_cast<double>(j) / n, grade);
  prof.r[n] = wall_r;
  prof.u[n] = dr_dt;

  // u = 0 solves the ODE and both boundary conditions when the vessel is
  // locally straight and the wall is at rest. Forcing many orders below the
  // relative precision of the slice data itself (slopes underflow gradually
  // in the far tails) counts as zero: it only admits solutions so small that
  // the quadratic terms of the discrete system underflow, leaving the Newton
  // iteration nothing but roundoff to converge on.
  const double tiny = 1e-30;
  if (std::abs(dr0) < tiny && std::abs(dr_dt) < tiny * scales.u_z_scale) {
    prof.u[n] = 0.0;
    return prof;
  }

  const double re = scales.reynolds(r0);
  const double ur = scales.u_r_scale(r0);
  const double uz = scales.u_z_scale;
  const double cu_full = re / ur;                    // u u' coupling
  const double cw_full = 2.0 * re * uz / (r0 * ur);  // nonlinear geometric term

  for (int j = 1; j < n; ++j) prof.u[j] = dr_dt * prof.r[j] / wall_r;

  const int m = n - 1;
  std::vector<double> lower(m), diag(m), upper(m), rhs(m), trial(prof.u);
  std::string history;  // |F| trail of the most recent Newton attempt

  // Damped Newton on the system with the couplings scaled by weight; updates
  // u in place. True on convergence (or once the residual bottoms out far
  // below the discretization-level tolerance), false otherwise.
  auto newton = [&](std::vector<double>& u, double weight) -> bool {
    const double cu = weight * cu_full;
    const double cw = weight * cw_full;
    // Residual F_j and max |term| scale; optionally the tridiagonal Jacobian.
    auto eval = [&](const std::vector<double>& v, std::vector<double>* out,
                    bool with_jacobian, double* term_scale) {
      double fnorm = 0.0, tscale = 0.0;
      for (int j = 1; j < n; ++j) {
        double w1[3], w2[3];
        detail::fd3_weights(prof.r[j - 1], prof.r[j], prof.r[j + 1], w1, w2);
        const double d1 = w1[0] * v[j - 1] + w1[1] * v[j] + w1[2] * v[j + 1];
        const double d2 = w2[0] * v[j - 1] + w2[1] * v[j] + w2[2] * v[j + 1];
        const double rj = prof.r[j];
        const double s = rj / wall_r;
        const double conv = r0 - v[j] * rj * cu;
        const double geom = (4.0 * uz * s - cw * v[j] * rj * (1.0 - s * s)) * dr0;
        const double axis = r0 * v[j] / rj;
        const double f = rj * d2 + conv * d1 + geom + axis;
        if (out) (*out)[j - 1] = f;
        fnorm = std::max(fnorm, std::abs(f));
        tscale = std::max({tscale, std::abs(rj * d2), std::abs(conv * d1), std::abs(geom),
                           std::abs(axis)});
        if (with_jacobian) {
          lower[j - 1] = rj * w2[0] + conv * w1[0];
          diag[j - 1] = rj * w2[1] + conv * w1[1] - rj * cu * d1 -
                        cw * rj * (1.0 - s * s) * dr0 + r0 / rj;
          upper[j - 1] = rj * w2[2] + conv * w1[2];
        }
      }
      if (term_scale) *term_scale = tscale;
      return fnorm;
    };

    history.clear();
    double tscale = 0.0;
    double fnorm = eval(u, &rhs, true, &tscale);
    for (int it = 0; it < 50; ++it) {
      if (fnorm <= 1e-11 * std::max(tscale, 1e-8)) return true;
      for (int j = 0; j < m; ++j) rhs[j] = -rhs[j];
      solve_tridiagonal(lower, diag, upper, rhs);  // rhs := Newton step
      double step = 1.0;
      bool improved = false;
      for (int h = 0; h < 20; ++h, step *= 0.5) {
        for (int j = 1; j < n; ++j) trial[j] = u[j] + step * rhs[j - 1];
        const double fn = eval(trial, nullptr, false, nullptr);
        if (fn < fnorm) {
          std::copy(trial.begin() + 1, trial.begin() + n, u.begin() + 1);
          improved = true;
          break;
        }
      }
      history += (history.empty() ? "" : ", ") + std::to_string(fnorm);
      if (!improved) return fnorm <= 1e-7 * std::max(tscale, 1e-8);
      fnorm = eval(u, &rhs, true, &tscale);
    }
    return false;
  };

  if (!newton(prof.u, 0.0))
    throw ConvergenceError("radial solve: affine stage failed at z = " +
                           std::to_string(slice.z) + " (|F| history: " + history + ")");
  double coupling = 0.0, stage = 0.125;
  std::vector<double> attempt(prof.u);
  while (coupling < 1.0) {
    const double target = std::min(1.0, coupling + stage);
    attempt = prof.u;
    if (newton(attempt, target)) {
      prof.u.swap(attempt);
      coupling = target;
      stage = std::min(2.0 * stage, 0.125);
    } else {
      stage *= 0.5;
      if (stage < 1.0 / 1024.0)
        throw ConvergenceError(
            "radial solve: continuation stalled at z = " + std::to_string(slice.z) +
            " (coupling " + std::to_string(coupling) + " -> " + std::to_string(target) +
            ", |F| history: " + history + ")");
    }
  }
  return prof;
}

/// Tensor-product (r/R, z) reconstruction of the pointwise fields.
struct Field2d {
  std::vector<double> z;                  ///< axial stations [cm]
  std::vector<double> r_over_wall;        ///< normalized radii in [0, 1]
  std::vector<double> wall_radius;        ///< R(z) = sqrt(a) per station
  std::vector<double> wall_displacement;  ///< sqrt(a) - r0 per station
  std::vector<double> mean_velocity;      ///< q/a per station
  std::vector<double> u_z, u_r, pressure;  ///< row-major [iz * nr + ir]

  int nr() const { return static_cast<int>(r_over_wall.size()); }
  int nz() const { return static_cast<int>(z.size()); }
  double at_uz(int iz, int ir) const { return u_z[iz * nr() + ir]; }
  double at_ur(int iz, int ir) const { return u_r[iz * nr() + ir]; }
  double at_p(int iz, int ir) const { return pressure[iz * nr() + ir]; }
};

/// Reconstruct (u_r, u_z, p) on an (r/R) x z grid from solution slices.
/// u_z follows the closed-form profile, u_r solves the per-slice BVP, and the
/// pressure is the section pressure of the model (constant across r).
inline Field2d reconstruct_2d_field(const std::vector<SliceData>& slices,
                                    const CharacteristicScales& scales,
                                    const PhysicalParams& params, ModelVariant variant,
                                    int n_radial, int n_bvp_points = 64) {
  if (slices.empty()) throw InvalidParameterError("field: need at least one slice");
  if (n_radial < 2) throw InvalidParameterError("field: need at least two radial points");
  Field2d f;
  f.r_over_wall.resize(n_radial);
  for (int i = 0; i < n_radial; ++i)
    f.r_over_wall[i] = static_cast<double>(i) / (n_radial - 1);
  f.u_z.reserve(slices.size() * n_radial);
  f.u_r.reserve(slices.size() * n_radial);
  f.pressure.reserve(slices.size() * n_radial);
  for (const SliceData& s : slices) {
    s.validate();
    const double wall_r = s.wall_radius();
    f.z.push_back(s.z);
    f.wall_radius.push_back(wall_r);
    f.wall_displacement.push_back(wall_r - s.geo.r0);
    f.mean_velocity.push_back(s.mean_velocity());
    const RadialProfile prof = radial_velocity_solve(s, scales, n_bvp_points);
    const double pr = total_pressure({s.a, s.q}, s.geo, params, variant);
    for (int i = 0; i < n_radial; ++i) {
      const double rr = std::min(f.r_over_wall[i] * wall_r, wall_r);
      f.u_z.push_back(axial_velocity_profile(s.mean_velocity(), rr, wall_r, params.gamma()));
      f.u_r.push_back(prof.sample(rr));
      f.pressure.push_back(pr);
    }
  }
  return f;
}

}  // namespace stenoflow

#endif  // STENOFLOW_POSTPROCESS_HPP
