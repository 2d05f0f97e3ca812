#ifndef STENOFLOW_MODEL_HPP
#define STENOFLOW_MODEL_HPP

#include <cmath>
#include <string>

#include "stenoflow/errors.hpp"
#include "stenoflow/geometry.hpp"

namespace stenoflow {

/// Which terms of the slope-corrected momentum balance are active.
///  - kClassical:  standard flux, no slope terms, elastic pressure only.
///  - kExtended:   slope correction alpha_c inside the flux + viscous pressure
///                 transport + d(alpha_c)/dz source.
///  - kAppendixB:  classical flux; the whole slope correction is carried as a
///                 source term (4/35)(dR0/dz)^2 (1/R0) d/dz(Q^2/sqrt(A)),
///                 viscous pressure transport kept.
enum class ModelVariant { kClassical, kExtended, kAppendixB };

/// Radius used in the wall-stiffness denominator: the local R0(z) or a fixed
/// reference radius (which makes the elastic flux term well-balanced by itself).
enum class StiffnessRadius { kLocal, kFixed };

/*! @brief Fluid and wall constants, CGS units (cm, s, g, dyn).
 *
 * The axial velocity profile is u_z(r) = U (gamma+2)/gamma (1 - (r/R)^gamma)
 * with gamma = (2 - alpha)/(alpha - 1); alpha is the momentum-flux
 * (Coriolis) coefficient of that profile.
 */
struct PhysicalParams {
  double rho = 1.055;                ///< fluid density [g/cm^3]
  double mu = 0.04;                  ///< dynamic viscosity [g/(cm s)]
  double wall_thickness = 0.06;      ///< membrane thickness [cm]
  double youngs_modulus = 5.02e6;    ///< wall Young's modulus [dyn/cm^2]
  double poisson = 0.5;              ///< wall Poisson ratio
  double external_pressure = 0.0;    ///< reference exterior pressure [dyn/cm^2]
  double alpha = 1.1;                ///< momentum-flux coefficient, in (1, 2]
  StiffnessRadius stiffness = StiffnessRadius::kFixed;
  double fixed_radius = 0.18;        ///< stiffness reference radius R0* [cm] (kFixed only)

  double nu() const { return mu / rho; }                        ///< kinematic viscosity
  double gamma() const { return (2.0 - alpha) / (alpha - 1.0); }  ///< profile exponent

  friend bool operator==(const PhysicalParams&, const PhysicalParams&) = default;

  void validate() const {
    if (!(rho > 0.0)) throw InvalidParameterError("params: rho must be positive");
    if (!(mu >= 0.0)) throw InvalidParameterError("params: mu must be non-negative");
    if (!(wall_thickness > 0.0))
      throw InvalidParameterError("params: wall_thickness must be positive");
    if (!(youngs_modulus > 0.0))
      throw InvalidParameterError("params: youngs_modulus must be positive");
    if (!(poisson > -1.0 && poisson < 1.0))
      throw InvalidParameterError("params: poisson must lie in (-1, 1)");
    if (!(alpha > 1.0 && alpha <= 2.0))
      throw InvalidParameterError("params: alpha must lie in (1, 2]");
    if (stiffness == StiffnessRadius::kFixed && !(fixed_radius > 0.0))
      throw InvalidParameterError("params: fixed_radius must be positive");
  }
};

/// Conserved pair. a is the squared lumen radius R^2 [cm^2] (physical area / pi)
/// and q = a * u the reduced flow rate [cm^3/s] (physical flow / pi).
struct FlowState {
  double a = 0.0;
  double q = 0.0;

  double velocity() const { return q / a; }
  double radius() const { return std::sqrt(a); }
};

inline void require_valid_state(const FlowState& s) {
  if (!(s.a > 0.0) || !std::isfinite(s.a) || !std::isfinite(s.q))
    throw StateError("state: a = " + std::to_string(s.a) + ", q = " + std::to_string(s.q) +
                     " is outside the admissible set");
}

/// Radius in the stiffness denominator for this variant.
inline double stiffness_radius(const PhysicalParams& p, const GeometrySample& g) {
  return p.stiffness == StiffnessRadius::kFixed ? p.fixed_radius : g.r0;
}

/// Wall stiffness C0 = h E / (D^2 (1 - sigma^2)) [dyn/cm^3].
inline double wall_stiffness(const PhysicalParams& p, const GeometrySample& g) {
  const double d = stiffness_radius(p, g);
  return p.wall_thickness * p.youngs_modulus / (d * d * (1.0 - p.poisson * p.poisson));
}

/// Elastic (membrane) pressure p_ext + C0 (sqrt(A) - R0).
inline double elastic_pressure(const FlowState& s, const GeometrySample& g,
                               const PhysicalParams& p) {
  require_valid_state(s);
  return p.external_pressure + wall_stiffness(p, g) * (std::sqrt(s.a) - g.r0);
}

/// Viscous pressure contribution (gamma+2) mu (Q/A) d(ln R0)/dz; zero wherever
/// the vessel is straight.
inline double viscous_pressure(const FlowState& s, const GeometrySample& g,
                               const PhysicalParams& p) {
  require_valid_state(s);
  return (p.gamma() + 2.0) * p.mu * s.velocity() * g.dlnr0_dz;
}

/// Pressure recorded with solutions: elastic part plus, for the slope-aware
/// variants, the viscous contribution.
inline double total_pressure(const FlowState& s, const GeometrySample& g,
                             const PhysicalParams& p, ModelVariant variant) {
  double pr = elastic_pressure(s, g, p);
  if (variant != ModelVariant::kClassical) pr += viscous_pressure(s, g, p);
  return pr;
}

/// Effective momentum-flux coefficient inside the flux.
inline double effective_alpha(const PhysicalParams& p, const GeometrySample& g,
                              ModelVariant variant) {
  return variant == ModelVariant::kExtended ? p.alpha + g.alpha_c : p.alpha;
}

struct Flux {
  double mass = 0.0;      ///< A-equation flux = Q
  double momentum = 0.0;  ///< Q-equation flux
};

/// Conservative flux F(U). The elastic term is
/// h E A^{3/2} / (3 rho (1-sigma^2) D^2) with D per the stiffness variant.
inline Flux flux(const FlowState& s, const GeometrySample& g, const PhysicalParams& p,
                 ModelVariant variant) {
  require_valid_state(s);
  const double d = stiffness_radius(p, g);
  const double k = p.wall_thickness * p.youngs_modulus /
                   (3.0 * p.rho * (1.0 - p.poisson * p.poisson) * d * d);
  Flux f;
  f.mass = s.q;
  f.momentum = effective_alpha(p, g, variant) * s.q * s.q / s.a + k * s.a * std::sqrt(s.a);
  return f;
}

/*! @brief Momentum-equation source S_q(U, dU/dz, z).
 *
 * Pieces (the A equation has no source):
 *  - wall friction            -2 (gamma+2) nu Q / A                  (all variants)
 *  - elastic geometry         flux-gradient compensation from dR0/dz (all variants;
 *                             form depends on the stiffness variant; cancels the
 *                             flux gradient exactly at rest states A = R0^2, Q = 0)
 *  - viscous-pressure push    -(gamma+2) nu [ (dQ/dz - (Q/A) dA/dz) dlnR0/dz
 *                                             + Q d2lnR0/dz2 ]       (kExtended, kAppendixB)
 *  - slope-coefficient drift  (Q^2/A) d(alpha_c)/dz                  (kExtended)
 *  - slope source form        (4/35)(dR0/dz)^2 (1/R0) d/dz(Q^2/sqrt(A)) (kAppendixB)
 */
inline double momentum_source(const FlowState& s, double da_dz, double dq_dz,
                              const GeometrySample& g, const PhysicalParams& p,
                              ModelVariant variant) {
  require_valid_state(s);
  const double gamma2 = p.gamma() + 2.0;
  const double u = s.velocity();
  double src = -2.0 * gamma2 * p.nu() * u;

  const double ew = p.wall_thickness * p.youngs_modulus / (p.rho * (1.0 - p.poisson * p.poisson));
  if (p.stiffness == StiffnessRadius::kLocal) {
    const double r0 = g.r0;
    src += ew * g.dr0_dz *
           ((4.0 / 3.0) * s.a * std::sqrt(s.a) / (r0 * r0 * r0) - s.a / (r0 * r0));
  } else {
    const double d = p.fixed_radius;
    src += ew * g.dr0_dz * s.a / (d * d);
  }

  if (variant != ModelVariant::kClassical) {
    // -(A/rho) d(p2)/dz expanded in (A, Q) and geometry derivatives.
    src -= gamma2 * p.nu() * ((dq_dz - u * da_dz) * g.dlnr0_dz + s.q * g.d2lnr0_dz2);
  }
  if (variant == ModelVariant::kExtended) {
    src += u * s.q * g.dalpha_c_dz;
  } else if (variant == ModelVariant::kAppendixB) {
    const double sqrt_a = std::sqrt(s.a);
    const double ddz_q2_over_sqrta = 2.0 * s.q * dq_dz / sqrt_a -
                                     0.5 * s.q * s.q * da_dz / (s.a * sqrt_a);
    src += (4.0 / 35.0) * g.dr0_dz * g.dr0_dz / g.r0 * ddz_q2_over_sqrta;
  }
  return src;
}

struct WaveSpeeds {
  double lower = 0.0;  ///< lambda_1 (backward-running family)
  double upper = 0.0;  ///< lambda_2 (forward-running family)
};

/// Characteristic speeds of the quasilinear system,
/// lambda_{1,2} = ahat U -+ sqrt((ahat U)^2 - ahat U^2 + h E sqrt(A) / (2 rho (1-sigma^2) D^2)).
inline WaveSpeeds wave_speeds(const FlowState& s, const GeometrySample& g,
                              const PhysicalParams& p, ModelVariant variant) {
  require_valid_state(s);
  const double ahat = effective_alpha(p, g, variant);
  const double u = s.velocity();
  const double d = stiffness_radius(p, g);
  const double elastic = p.wall_thickness * p.youngs_modulus * std::sqrt(s.a) /
                         (2.0 * p.rho * (1.0 - p.poisson * p.poisson) * d * d);
  const double m = ahat * u;
  const double disc = m * m - ahat * u * u + elastic;
  if (!(disc >= 0.0))
    throw HyperbolicityError("wave_speeds: negative discriminant " + std::to_string(disc) +
                             " at a = " + std::to_string(s.a) + ", q = " + std::to_string(s.q));
  const double root = std::sqrt(disc);
  return {m - root, m + root};
}

inline double max_abs_wave_speed(const FlowState& s, const GeometrySample& g,
                                 const PhysicalParams& p, ModelVariant variant) {
  const WaveSpeeds w = wave_speeds(s, g, p, variant);
  return std::max(std::abs(w.lower), std::abs(w.upper));
}

/// Rest-state elastic wave speed sqrt(beta) a^{1/4} with
/// beta = h E / (2 rho (1-sigma^2) D^2); also the alpha = 1 characteristic celerity.
inline double celerity(double a, const GeometrySample& g, const PhysicalParams& p) {
  const double d = stiffness_radius(p, g);
  const double beta = p.wall_thickness * p.youngs_modulus /
                      (2.0 * p.rho * (1.0 - p.poisson * p.poisson) * d * d);
  return std::sqrt(beta) * std::pow(a, 0.25);
}

/// Characteristic invariants of the alpha = 1 reduction used for boundary
/// closure: w1 = -(U + 4c) rides the forward family (lambda = U + c),
/// w2 = -U + 4c rides the backward family (lambda = U - c). Always w1 < w2.
struct Invariants {
  double w1 = 0.0;
  double w2 = 0.0;
};

inline Invariants riemann_invariants(const FlowState& s, const GeometrySample& g,
                                     const PhysicalParams& p) {
  require_valid_state(s);
  const double u = s.velocity();
  const double c = celerity(s.a, g, p);
  return {-u - 4.0 * c, -u + 4.0 * c};
}

/// Invert (w1, w2) back to a state: A = ((w2 - w1) / (8 sqrt(beta)))^4,
/// U = -(w1 + w2)/2.
inline FlowState state_from_invariants(double w1, double w2, const GeometrySample& g,
                                       const PhysicalParams& p) {
  if (!(w2 > w1))
    throw StateError("state_from_invariants: need w2 > w1, got w1 = " + std::to_string(w1) +
                     ", w2 = " + std::to_string(w2));
  const double d = stiffness_radius(p, g);
  const double beta = p.wall_thickness * p.youngs_modulus /
                      (2.0 * p.rho * (1.0 - p.poisson * p.poisson) * d * d);
  const double root = (w2 - w1) / (8.0 * std::sqrt(beta));
  const double a = root * root * root * root;
  const double u = -0.5 * (w1 + w2);
  return {a, a * u};
}

}  // namespace stenoflow

#endif
