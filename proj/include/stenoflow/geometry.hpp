#ifndef STENOFLOW_GEOMETRY_HPP
#define STENOFLOW_GEOMETRY_HPP

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "stenoflow/errors.hpp"
#include "stenoflow/spline.hpp"

namespace stenoflow {

/// Reference radius and the derived quantities the solver needs at one z.
/// Units: cm and powers of cm; alpha_c is dimensionless.
struct GeometrySample {
  double r0 = 0.0;           ///< reference (unstressed) radius R0(z)
  double dr0_dz = 0.0;       ///< dR0/dz
  double dlnr0_dz = 0.0;     ///< d(ln R0)/dz
  double d2lnr0_dz2 = 0.0;   ///< d^2(ln R0)/dz^2
  double alpha_c = 0.0;      ///< slope-induced momentum-flux correction -(2/35)(dR0/dz)^2
  double dalpha_c_dz = 0.0;  ///< d(alpha_c)/dz
};

enum class ProfileKind { kStraight, kStenosis, kTabulated };

/*! @brief Axisymmetric vessel described by its reference radius R0(z) on [0, L].
 *
 * Three profile families:
 *  - straight: constant radius, all derivatives exactly zero,
 *  - stenosis: the smooth benchmark constriction
 *      R0(z) = r_max - depth * exp(-50 g(z)^4),
 *      g(z)  = z - 3.4 + 0.95 exp(-0.5 (z-2.5)^2)  on [0, 6],
 *    with analytic derivatives (g is strictly increasing, so the throat sits
 *    at the unique zero of g and min R0 = r_max - depth exactly),
 *  - tabulated: natural cubic spline through a (z, r0) table.
 */
class VesselGeometry {
 public:
  /// Constant-radius vessel.
  static VesselGeometry straight(double radius, double length) {
    if (!(radius > 0.0)) throw InvalidParameterError("geometry: radius must be positive");
    if (!(length > 0.0)) throw InvalidParameterError("geometry: length must be positive");
    VesselGeometry g;
    g.kind_ = ProfileKind::kStraight;
    g.length_ = length;
    g.r_max_ = radius;
    g.depth_ = 0.0;
    return g;
  }

  /// Benchmark constriction of the given depth on the fixed [0, 6] cm domain.
  static VesselGeometry stenosis(double depth, double r_max) {
    if (!(r_max > 0.0)) throw InvalidParameterError("geometry: r_max must be positive");
    if (!(depth >= 0.0 && depth < r_max))
      throw InvalidParameterError("geometry: stenosis depth must lie in [0, r_max)");
    VesselGeometry g;
    g.kind_ = ProfileKind::kStenosis;
    g.length_ = 6.0;
    g.r_max_ = r_max;
    g.depth_ = depth;
    return g;
  }

  /// Benchmark severities: 23% uses depth r_max - r_min, 40%/50% use fractional depth.
  static VesselGeometry benchmark_stenosis(int severity_percent, double r_max = 0.18,
                                           double r_min = 0.1394) {
    switch (severity_percent) {
      case 23:
        return stenosis(r_max - r_min, r_max);
      case 40:
        return stenosis(0.4 * r_max, r_max);
      case 50:
        return stenosis(0.5 * r_max, r_max);
      default:
        throw InvalidParameterError("geometry: benchmark severity must be 23, 40 or 50");
    }
  }

  /// Spline profile through a strictly increasing (z, r0) table starting at z = 0.
  static VesselGeometry tabulated(std::vector<double> z, std::vector<double> r0) {
    if (z.size() != r0.size() || z.size() < 3)
      throw InvalidParameterError("geometry: tabulated profile needs >= 3 (z, r0) rows");
    if (std::abs(z.front()) > 1e-12)
      throw InvalidParameterError("geometry: tabulated profile must start at z = 0");
    for (double r : r0)
      if (!(r > 0.0)) throw InvalidParameterError("geometry: tabulated radius must be positive");
    VesselGeometry g;
    g.kind_ = ProfileKind::kTabulated;
    g.length_ = z.back();
    g.spline_ = CubicSpline(std::move(z), std::move(r0));
    // The spline may undershoot between knots; reject non-physical tables.
    double rmax = 0.0;
    for (int i = 0; i <= 4096; ++i) {
      const double r = g.spline_.value(g.length_ * i / 4096.0);
      if (!(r > 0.0))
        throw InvalidParameterError("geometry: tabulated spline dips to non-positive radius");
      rmax = std::max(rmax, r);
    }
    g.r_max_ = rmax;
    return g;
  }

  /// Load a tabulated profile from CSV with header "z,r0".
  static VesselGeometry from_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("geometry: cannot open profile table '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw ConfigError("geometry: empty profile table '" + path + "'");
    if (strip(line) != "z,r0")
      throw ConfigError("geometry: profile table '" + path + "' must start with header 'z,r0'");
    std::vector<double> z, r;
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string s = strip(line);
      if (s.empty()) continue;
      const auto comma = s.find(',');
      if (comma == std::string::npos)
        throw ConfigError("geometry: '" + path + "' line " + std::to_string(lineno) +
                          ": expected 'z,r0' pair");
      try {
        std::size_t used = 0;
        z.push_back(std::stod(s.substr(0, comma), &used));
        r.push_back(std::stod(s.substr(comma + 1), &used));
      } catch (const std::exception&) {
        throw ConfigError("geometry: '" + path + "' line " + std::to_string(lineno) +
                          ": malformed number");
      }
    }
    return tabulated(std::move(z), std::move(r));
  }

  ProfileKind kind() const { return kind_; }
  double length() const { return length_; }
  double r_max() const { return r_max_; }

  /// R0 at z; z must lie in [0, L] up to roundoff slack.
  double radius(double z) const { return sample(z).r0; }

  GeometrySample sample(double z) const {
    z = check_domain(z);
    GeometrySample s;
    switch (kind_) {
      case ProfileKind::kStraight: {
        s.r0 = r_max_;
        break;
      }
      case ProfileKind::kStenosis: {
        const double u = z - 2.5;
        const double e = std::exp(-0.5 * u * u);
        const double g = z - 3.4 + 0.95 * e;
        const double gp = 1.0 - 0.95 * u * e;
        const double gpp = -0.95 * e * (1.0 - u * u);
        const double bump = std::exp(-50.0 * g * g * g * g);  // exp(-50 g^4)
        const double h = -200.0 * g * g * g * gp;             // d(ln bump)/dz
        const double hp = -200.0 * (3.0 * g * g * gp * gp + g * g * g * gpp);
        const double r0 = r_max_ - depth_ * bump;
        const double dr0 = -depth_ * bump * h;
        const double d2r0 = -depth_ * bump * (h * h + hp);
        fill_derived(s, r0, dr0, d2r0);
        break;
      }
      case ProfileKind::kTabulated: {
        fill_derived(s, spline_.value(z), spline_.deriv(z), spline_.second_deriv(z));
        break;
      }
    }
    return s;
  }

  /// Location and value of the minimum radius (coarse scan + golden-section refine).
  std::pair<double, double> throat() const {
    const int n = 4096;
    int best = 0;
    double rbest = radius(0.0);
    for (int i = 1; i <= n; ++i) {
      const double r = radius(length_ * i / n);
      if (r < rbest) {
        rbest = r;
        best = i;
      }
    }
    double a = length_ * std::max(0, best - 1) / n;
    double b = length_ * std::min(n, best + 1) / n;
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    double f1 = radius(x1), f2 = radius(x2);
    for (int it = 0; it < 200 && (b - a) > 1e-13; ++it) {
      if (f1 < f2) {
        b = x2;
        x2 = x1;
        f2 = f1;
        x1 = b - gr * (b - a);
        f1 = radius(x1);
      } else {
        a = x1;
        x1 = x2;
        f1 = f2;
        x2 = a + gr * (b - a);
        f2 = radius(x2);
      }
    }
    const double zmin = 0.5 * (a + b);
    return {zmin, radius(zmin)};
  }

 private:
  VesselGeometry() = default;

  static void fill_derived(GeometrySample& s, double r0, double dr0, double d2r0) {
    s.r0 = r0;
    s.dr0_dz = dr0;
    s.dlnr0_dz = dr0 / r0;
    s.d2lnr0_dz2 = d2r0 / r0 - (dr0 / r0) * (dr0 / r0);
    s.alpha_c = -(2.0 / 35.0) * dr0 * dr0;
    s.dalpha_c_dz = -(4.0 / 35.0) * dr0 * d2r0;
  }

  double check_domain(double z) const {
    const double slack = 1e-12 * length_;
    if (z < -slack || z > length_ + slack)
      throw std::domain_error("geometry: z = " + std::to_string(z) + " outside [0, " +
                              std::to_string(length_) + "]");
    return std::min(std::max(z, 0.0), length_);
  }

  static std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  ProfileKind kind_ = ProfileKind::kStraight;
  double length_ = 1.0;
  double r_max_ = 1.0;
  double depth_ = 0.0;
  CubicSpline spline_;
};

}  // namespace stenoflow

#endif
