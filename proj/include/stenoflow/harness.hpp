#ifndef STENOFLOW_HARNESS_HPP
#define STENOFLOW_HARNESS_HPP

/// Run orchestration: INI configuration with strict key checking, solution
/// sampling and CSV/JSON output, model comparison, convergence studies, and
/// the cross-section reconstruction driver. Everything here is deterministic
/// for a fixed configuration, so emitted CSV files are byte-reproducible.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <fstream>
#include <future>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stenoflow/dg.hpp"
#include "stenoflow/errors.hpp"
#include "stenoflow/geometry.hpp"
#include "stenoflow/model.hpp"
#include "stenoflow/postprocess.hpp"

namespace stenoflow {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Formatting helpers
// ---------------------------------------------------------------------------

/// Shortest decimal representation that round-trips to the same double.
inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string strip_ws(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Enum <-> text maps shared by the config file and the CLI
// ---------------------------------------------------------------------------

inline std::string variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::kClassical: return "classical";
    case ModelVariant::kExtended: return "extended";
    case ModelVariant::kAppendixB: return "appendix-b";
  }
  throw InvalidParameterError("variant: unknown enumerator");
}

inline ModelVariant variant_from_name(const std::string& name) {
  const std::string n = detail::lower(detail::strip_ws(name));
  if (n == "classical") return ModelVariant::kClassical;
  if (n == "extended") return ModelVariant::kExtended;
  if (n == "appendix-b" || n == "appendix_b" || n == "appendixb") return ModelVariant::kAppendixB;
  throw ConfigError("config: unknown model variant '" + name +
                    "' (expected classical, extended or appendix-b)");
}

inline std::string stiffness_name(StiffnessRadius s) {
  return s == StiffnessRadius::kFixed ? "fixed" : "local";
}

inline StiffnessRadius stiffness_from_name(const std::string& name) {
  const std::string n = detail::lower(detail::strip_ws(name));
  if (n == "fixed") return StiffnessRadius::kFixed;
  if (n == "local") return StiffnessRadius::kLocal;
  throw ConfigError("config: unknown stiffness radius '" + name + "' (expected fixed or local)");
}

inline std::string outlet_name(OutletModel m) {
  return m == OutletModel::kNonReflecting ? "non-reflecting" : "fixed-pressure";
}

inline OutletModel outlet_from_name(const std::string& name) {
  const std::string n = detail::lower(detail::strip_ws(name));
  if (n == "non-reflecting" || n == "nonreflecting" || n == "non_reflecting")
    return OutletModel::kNonReflecting;
  if (n == "fixed-pressure" || n == "fixedpressure" || n == "fixed_pressure")
    return OutletModel::kFixedPressure;
  throw ConfigError("config: unknown outlet model '" + name +
                    "' (expected non-reflecting or fixed-pressure)");
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct GeometryConfig {
  std::string kind = "stenosis";  ///< stenosis | straight | table
  int severity = 50;              ///< 23 | 40 | 50 (stenosis kind only)
  double r_max = 0.18;            ///< unconstricted radius [cm]
  double r_min = 0.1394;          ///< 23%-severity throat radius [cm]
  double length = 6.0;            ///< vessel length [cm] (straight kind only)
  std::string table;              ///< CSV profile path (table kind only)

  friend bool operator==(const GeometryConfig&, const GeometryConfig&) = default;
};

struct SolverConfig {
  int elements = 200;
  int degree = 2;
  double cfl = 0.3;
  double t_end = 1.0;   ///< [s]
  bool limiter = false;
  double tvb_m = 0.0;

  friend bool operator==(const SolverConfig&, const SolverConfig&) = default;
};

struct BoundaryConfig {
  double inlet_velocity = 22.5;  ///< steady inflow target [cm/s]
  double ramp_time = 0.05;       ///< cosine ramp length [s]
  OutletModel outlet = OutletModel::kNonReflecting;
  double outlet_pressure = 0.0;  ///< [dyn/cm^2] (fixed-pressure outlet only)

  friend bool operator==(const BoundaryConfig&, const BoundaryConfig&) = default;
};

struct SteadyConfig {
  bool detect = true;
  double tolerance = 1e-6;  ///< on ||dU|| / (dt ||U||)
  int window = 100;         ///< consecutive quiet steps required

  friend bool operator==(const SteadyConfig&, const SteadyConfig&) = default;
};

struct OutputConfig {
  std::string directory;         ///< empty: keep results in memory only
  double record_interval = 0.0;  ///< [s]; <= 0 records initial and final state
  int samples = 512;             ///< uniform z-samples per record
  int radial_samples = 33;       ///< radial stations of the reconstructed field
  int bvp_points = 64;           ///< collocation points of the radial solve

  friend bool operator==(const OutputConfig&, const OutputConfig&) = default;
};

struct RunConfig {
  GeometryConfig geometry;
  PhysicalParams params;
  ModelVariant variant = ModelVariant::kExtended;
  SolverConfig solver;
  BoundaryConfig boundary;
  SteadyConfig steady;
  OutputConfig output;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;

  VesselGeometry make_geometry() const {
    const std::string kind = detail::lower(detail::strip_ws(geometry.kind));
    if (kind == "straight") return VesselGeometry::straight(geometry.r_max, geometry.length);
    if (kind == "stenosis")
      return VesselGeometry::benchmark_stenosis(geometry.severity, geometry.r_max,
                                                geometry.r_min);
    if (kind == "table") {
      if (geometry.table.empty())
        throw ConfigError("config: geometry kind 'table' needs a 'table' file path");
      return VesselGeometry::from_csv(geometry.table);
    }
    throw ConfigError("config: unknown geometry kind '" + geometry.kind +
                      "' (expected stenosis, straight or table)");
  }

  BoundarySpec make_boundary() const {
    BoundarySpec bc;
    bc.inflow = {boundary.inlet_velocity, boundary.ramp_time};
    bc.outlet = boundary.outlet;
    bc.outlet_pressure = boundary.outlet_pressure;
    return bc;
  }

  SolveOptions make_solve_options() const {
    SolveOptions opt;
    opt.t_end = solver.t_end;
    opt.cfl = solver.cfl;
    opt.detect_steady = steady.detect;
    opt.steady_tol = steady.tolerance;
    opt.steady_window = steady.window;
    opt.record_interval = output.record_interval;
    return opt;
  }

  /// Full validation; throws naming the offending key.
  void validate() const {
    params.validate();
    make_geometry();  // validates kind, severity, radii and table existence
    Mesh1D probe(solver.elements, 1.0, solver.degree);  // validates elements/degree
    (void)probe;
    if (!(solver.cfl > 0.0)) throw InvalidParameterError("config: cfl must be positive");
    if (!(solver.t_end >= 0.0)) throw InvalidParameterError("config: t_end must be >= 0");
    if (!(solver.tvb_m >= 0.0)) throw InvalidParameterError("config: tvb_m must be >= 0");
    if (!(boundary.ramp_time >= 0.0))
      throw InvalidParameterError("config: ramp_time must be >= 0");
    if (!std::isfinite(boundary.inlet_velocity))
      throw InvalidParameterError("config: inlet_velocity must be finite");
    if (!(steady.tolerance > 0.0))
      throw InvalidParameterError("config: steady tolerance must be positive");
    if (steady.window < 1) throw InvalidParameterError("config: steady window must be >= 1");
    if (!(output.record_interval >= 0.0))
      throw InvalidParameterError("config: record_interval must be >= 0");
    if (output.samples < 2) throw InvalidParameterError("config: samples must be >= 2");
    if (output.radial_samples < 2)
      throw InvalidParameterError("config: radial_samples must be >= 2");
    if (output.bvp_points < 16)
      throw InvalidParameterError("config: bvp_points must be >= 16");
  }
};

// ---------------------------------------------------------------------------
// Strict INI parsing
// ---------------------------------------------------------------------------

namespace detail {

struct IniEntry {
  std::string section, key, value;
  int line = 0;
};

/// Section each known key belongs to; keys are unique across sections so a
/// bare `key = value` line (no section header) is unambiguous.
inline const std::map<std::string, std::string>& config_key_sections() {
  static const std::map<std::string, std::string> m = {
      {"kind", "geometry"},          {"severity", "geometry"},
      {"r_max", "geometry"},         {"r_min", "geometry"},
      {"length", "geometry"},        {"table", "geometry"},
      {"rho", "fluid"},              {"mu", "fluid"},
      {"thickness", "wall"},         {"youngs_modulus", "wall"},
      {"poisson", "wall"},           {"external_pressure", "wall"},
      {"stiffness_radius", "wall"},  {"fixed_radius", "wall"},
      {"variant", "model"},          {"alpha", "model"},
      {"elements", "solver"},        {"degree", "solver"},
      {"cfl", "solver"},             {"t_end", "solver"},
      {"limiter", "solver"},         {"tvb_m", "solver"},
      {"inlet_velocity", "boundary"}, {"ramp_time", "boundary"},
      {"outlet", "boundary"},        {"outlet_pressure", "boundary"},
      {"detect", "steady"},          {"tolerance", "steady"},
      {"window", "steady"},          {"directory", "output"},
      {"record_interval", "output"}, {"samples", "output"},
      {"radial_samples", "output"},  {"bvp_points", "output"},
  };
  return m;
}

/// Parse INI text into entries. Comments start at '#' or ';' anywhere in a
/// line; keys before any [section] header are resolved by unique key name.
inline std::vector<IniEntry> parse_ini(const std::string& text, const std::string& source) {
  std::vector<IniEntry> entries;
  std::string section;
  std::istringstream in(text);
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto cut = raw.find_first_of("#;");
    std::string line = strip_ws(cut == std::string::npos ? raw : raw.substr(0, cut));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3)
        throw ConfigError(source + ":" + std::to_string(lineno) +
                          ": malformed section header '" + line + "'");
      section = lower(strip_ws(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value', got '" +
                        line + "'");
    IniEntry e;
    e.section = section;
    e.key = lower(strip_ws(line.substr(0, eq)));
    e.value = strip_ws(line.substr(eq + 1));
    e.line = lineno;
    if (e.key.empty())
      throw ConfigError(source + ":" + std::to_string(lineno) + ": empty key");
    entries.push_back(std::move(e));
  }
  return entries;
}

/// Resolves sections, rejects unknown and duplicate keys, hands out values.
class ConfigReader {
 public:
  ConfigReader(std::vector<IniEntry> entries, std::string source) : source_(std::move(source)) {
    const auto& schema = config_key_sections();
    std::string problems;
    for (IniEntry& e : entries) {
      const auto it = schema.find(e.key);
      const bool known =
          it != schema.end() && (e.section.empty() || e.section == it->second);
      if (!known) {
        problems += "\n  " + source_ + ":" + std::to_string(e.line) + ": unknown key '" +
                    (e.section.empty() ? e.key : e.section + "." + e.key) + "'";
        continue;
      }
      const auto [slot, fresh] = slots_.try_emplace(it->second + "." + e.key, e);
      if (!fresh)
        problems += "\n  " + source_ + ":" + std::to_string(e.line) + ": duplicate key '" +
                    e.key + "' (first set at line " + std::to_string(slot->second.line) + ")";
    }
    if (!problems.empty()) throw ConfigError("config: rejected input:" + problems);
  }

  std::optional<IniEntry> take(const std::string& section, const std::string& key) {
    const auto it = slots_.find(section + "." + key);
    if (it == slots_.end()) return std::nullopt;
    IniEntry e = it->second;
    slots_.erase(it);
    return e;
  }

  const std::string& source() const { return source_; }

 private:
  std::string source_;
  std::map<std::string, IniEntry> slots_;
};

inline double entry_double(const IniEntry& e, const std::string& source) {
  const std::string& s = e.value;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError(source + ":" + std::to_string(e.line) + ": key '" + e.key +
                      "': cannot parse '" + s + "' as a number");
  return v;
}

inline int entry_int(const IniEntry& e, const std::string& source) {
  const std::string& s = e.value;
  int v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError(source + ":" + std::to_string(e.line) + ": key '" + e.key +
                      "': cannot parse '" + s + "' as an integer");
  return v;
}

inline bool entry_bool(const IniEntry& e, const std::string& source) {
  const std::string v = lower(e.value);
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  throw ConfigError(source + ":" + std::to_string(e.line) + ": key '" + e.key +
                    "': cannot parse '" + e.value + "' as a boolean");
}

}  // namespace detail

/// Parse configuration text; unknown keys, duplicates and malformed values
/// are rejected with line diagnostics. Missing keys keep their defaults.
inline RunConfig parse_config(const std::string& text, const std::string& source = "<config>") {
  detail::ConfigReader reader(detail::parse_ini(text, source), source);
  const std::string& src = reader.source();
  RunConfig cfg;

  auto num = [&](const char* sec, const char* key, double& out) {
    if (auto e = reader.take(sec, key)) out = detail::entry_double(*e, src);
  };
  auto integer = [&](const char* sec, const char* key, int& out) {
    if (auto e = reader.take(sec, key)) out = detail::entry_int(*e, src);
  };
  auto boolean = [&](const char* sec, const char* key, bool& out) {
    if (auto e = reader.take(sec, key)) out = detail::entry_bool(*e, src);
  };
  auto text_value = [&](const char* sec, const char* key, std::string& out) {
    if (auto e = reader.take(sec, key)) out = e->value;
  };

  text_value("geometry", "kind", cfg.geometry.kind);
  integer("geometry", "severity", cfg.geometry.severity);
  num("geometry", "r_max", cfg.geometry.r_max);
  num("geometry", "r_min", cfg.geometry.r_min);
  num("geometry", "length", cfg.geometry.length);
  text_value("geometry", "table", cfg.geometry.table);

  num("fluid", "rho", cfg.params.rho);
  num("fluid", "mu", cfg.params.mu);

  num("wall", "thickness", cfg.params.wall_thickness);
  num("wall", "youngs_modulus", cfg.params.youngs_modulus);
  num("wall", "poisson", cfg.params.poisson);
  num("wall", "external_pressure", cfg.params.external_pressure);
  if (auto e = reader.take("wall", "stiffness_radius"))
    cfg.params.stiffness = stiffness_from_name(e->value);
  num("wall", "fixed_radius", cfg.params.fixed_radius);

  if (auto e = reader.take("model", "variant")) cfg.variant = variant_from_name(e->value);
  num("model", "alpha", cfg.params.alpha);

  integer("solver", "elements", cfg.solver.elements);
  integer("solver", "degree", cfg.solver.degree);
  num("solver", "cfl", cfg.solver.cfl);
  num("solver", "t_end", cfg.solver.t_end);
  boolean("solver", "limiter", cfg.solver.limiter);
  num("solver", "tvb_m", cfg.solver.tvb_m);

  num("boundary", "inlet_velocity", cfg.boundary.inlet_velocity);
  num("boundary", "ramp_time", cfg.boundary.ramp_time);
  if (auto e = reader.take("boundary", "outlet")) cfg.boundary.outlet = outlet_from_name(e->value);
  num("boundary", "outlet_pressure", cfg.boundary.outlet_pressure);

  boolean("steady", "detect", cfg.steady.detect);
  num("steady", "tolerance", cfg.steady.tolerance);
  integer("steady", "window", cfg.steady.window);

  text_value("output", "directory", cfg.output.directory);
  num("output", "record_interval", cfg.output.record_interval);
  integer("output", "samples", cfg.output.samples);
  integer("output", "radial_samples", cfg.output.radial_samples);
  integer("output", "bvp_points", cfg.output.bvp_points);

  cfg.validate();
  return cfg;
}

/// Load and validate a configuration file.
inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

/// Canonical text with every key spelled out; reloading it reproduces the
/// configuration exactly (doubles use shortest round-trip formatting).
inline std::string effective_config_text(const RunConfig& cfg) {
  std::ostringstream out;
  out << "# effective configuration: all defaults resolved\n\n";
  out << "[geometry]\n";
  out << "kind = " << cfg.geometry.kind << "\n";
  out << "severity = " << cfg.geometry.severity << "\n";
  out << "r_max = " << format_double(cfg.geometry.r_max) << "\n";
  out << "r_min = " << format_double(cfg.geometry.r_min) << "\n";
  out << "length = " << format_double(cfg.geometry.length) << "\n";
  if (!cfg.geometry.table.empty()) out << "table = " << cfg.geometry.table << "\n";
  out << "\n[fluid]\n";
  out << "rho = " << format_double(cfg.params.rho) << "\n";
  out << "mu = " << format_double(cfg.params.mu) << "\n";
  out << "\n[wall]\n";
  out << "thickness = " << format_double(cfg.params.wall_thickness) << "\n";
  out << "youngs_modulus = " << format_double(cfg.params.youngs_modulus) << "\n";
  out << "poisson = " << format_double(cfg.params.poisson) << "\n";
  out << "external_pressure = " << format_double(cfg.params.external_pressure) << "\n";
  out << "stiffness_radius = " << stiffness_name(cfg.params.stiffness) << "\n";
  out << "fixed_radius = " << format_double(cfg.params.fixed_radius) << "\n";
  out << "\n[model]\n";
  out << "variant = " << variant_name(cfg.variant) << "\n";
  out << "alpha = " << format_double(cfg.params.alpha) << "\n";
  out << "\n[solver]\n";
  out << "elements = " << cfg.solver.elements << "\n";
  out << "degree = " << cfg.solver.degree << "\n";
  out << "cfl = " << format_double(cfg.solver.cfl) << "\n";
  out << "t_end = " << format_double(cfg.solver.t_end) << "\n";
  out << "limiter = " << (cfg.solver.limiter ? "true" : "false") << "\n";
  out << "tvb_m = " << format_double(cfg.solver.tvb_m) << "\n";
  out << "\n[boundary]\n";
  out << "inlet_velocity = " << format_double(cfg.boundary.inlet_velocity) << "\n";
  out << "ramp_time = " << format_double(cfg.boundary.ramp_time) << "\n";
  out << "outlet = " << outlet_name(cfg.boundary.outlet) << "\n";
  out << "outlet_pressure = " << format_double(cfg.boundary.outlet_pressure) << "\n";
  out << "\n[steady]\n";
  out << "detect = " << (cfg.steady.detect ? "true" : "false") << "\n";
  out << "tolerance = " << format_double(cfg.steady.tolerance) << "\n";
  out << "window = " << cfg.steady.window << "\n";
  out << "\n[output]\n";
  if (!cfg.output.directory.empty()) out << "directory = " << cfg.output.directory << "\n";
  out << "record_interval = " << format_double(cfg.output.record_interval) << "\n";
  out << "samples = " << cfg.output.samples << "\n";
  out << "radial_samples = " << cfg.output.radial_samples << "\n";
  out << "bvp_points = " << cfg.output.bvp_points << "\n";
  return out.str();
}

/// FNV-1a 64-bit hash of the effective configuration text, as 16 hex digits.
inline std::string config_hash(const RunConfig& cfg) {
  const std::string text = effective_config_text(cfg);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  for (int i = 15; i >= 0; --i) {
    buf[i] = "0123456789abcdef"[h & 0xf];
    h >>= 4;
  }
  buf[16] = '\0';
  return std::string(buf);
}

// ---------------------------------------------------------------------------
// Solution records and CSV I/O
// ---------------------------------------------------------------------------

/// One output snapshot on a uniform z-grid: area variable a = R^2, reduced
/// flow q, mean velocity u, section pressure p, lumen radius r and wall
/// displacement eta = r - R0.
struct SolutionRecord {
  double t = 0.0;
  std::vector<double> z, a, q, u, p, r, eta;

  int size() const { return static_cast<int>(z.size()); }

  void validate() const {
    const std::size_t n = z.size();
    if (a.size() != n || q.size() != n || u.size() != n || p.size() != n || r.size() != n ||
        eta.size() != n)
      throw StateError("record: column lengths disagree");
    for (double v : a)
      if (!(v > 0.0)) throw StateError("record: non-positive area sample");
  }

  friend bool operator==(const SolutionRecord&, const SolutionRecord&) = default;
};

/// Evaluate the DG polynomials of a state on a uniform n-point z-grid.
inline SolutionRecord sample_record(const StateField& f, const VesselGeometry& geo,
                                    const PhysicalParams& params, ModelVariant variant,
                                    int n_samples = 512) {
  if (n_samples < 2) throw InvalidParameterError("record: need at least two samples");
  SolutionRecord rec;
  rec.t = f.time;
  rec.z.reserve(n_samples);
  for (auto* col : {&rec.a, &rec.q, &rec.u, &rec.p, &rec.r, &rec.eta}) col->reserve(n_samples);
  const double length = f.mesh.length;
  for (int i = 0; i < n_samples; ++i) {
    const double z = length * i / (n_samples - 1);
    const FlowState s = f.at(z);
    const GeometrySample g = geo.sample(z);
    rec.z.push_back(z);
    rec.a.push_back(s.a);
    rec.q.push_back(s.q);
    rec.u.push_back(s.velocity());
    rec.p.push_back(total_pressure(s, g, params, variant));
    rec.r.push_back(std::sqrt(s.a));
    rec.eta.push_back(std::sqrt(s.a) - g.r0);
  }
  rec.validate();
  return rec;
}

/// Comma-separated text for named columns of equal length.
inline std::string csv_text(const std::vector<std::string>& header,
                            const std::vector<const std::vector<double>*>& columns) {
  if (header.size() != columns.size() || columns.empty())
    throw InvalidParameterError("csv: header/column mismatch");
  const std::size_t rows = columns.front()->size();
  for (const auto* c : columns)
    if (c->size() != rows) throw InvalidParameterError("csv: column lengths disagree");
  std::string out;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j) out += ',';
    out += header[j];
  }
  out += '\n';
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < columns.size(); ++j) {
      if (j) out += ',';
      out += format_double((*columns[j])[i]);
    }
    out += '\n';
  }
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);  // binary: byte-stable newlines
  if (!out) throw ConfigError("output: cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw ConfigError("output: short write to '" + path.string() + "'");
}

inline std::string record_csv_text(const SolutionRecord& rec) {
  return csv_text({"z", "a", "q", "u", "p", "r", "eta"},
                  {&rec.z, &rec.a, &rec.q, &rec.u, &rec.p, &rec.r, &rec.eta});
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_csv_double(const std::string& s, const std::string& what, int line) {
  double v = 0.0;
  const std::string t = strip_ws(s);
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw ConfigError(what + ":" + std::to_string(line) + ": malformed number '" + s + "'");
  return v;
}

}  // namespace detail

/// Parse a record CSV produced by record_csv_text (t is not stored there).
inline SolutionRecord record_from_csv_text(const std::string& text,
                                           const std::string& what = "<record>") {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || detail::strip_ws(line) != "z,a,q,u,p,r,eta")
    throw ConfigError(what + ": expected header 'z,a,q,u,p,r,eta'");
  SolutionRecord rec;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::strip_ws(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 7)
      throw ConfigError(what + ":" + std::to_string(lineno) + ": expected 7 columns");
    rec.z.push_back(detail::parse_csv_double(cells[0], what, lineno));
    rec.a.push_back(detail::parse_csv_double(cells[1], what, lineno));
    rec.q.push_back(detail::parse_csv_double(cells[2], what, lineno));
    rec.u.push_back(detail::parse_csv_double(cells[3], what, lineno));
    rec.p.push_back(detail::parse_csv_double(cells[4], what, lineno));
    rec.r.push_back(detail::parse_csv_double(cells[5], what, lineno));
    rec.eta.push_back(detail::parse_csv_double(cells[6], what, lineno));
  }
  rec.validate();
  return rec;
}

inline std::string record_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "record_%04d.csv", index);
  return buf;
}

// ---------------------------------------------------------------------------
// Case execution
// ---------------------------------------------------------------------------

struct RunResult {
  RunConfig config;
  std::string hash;  ///< configuration hash the outputs are keyed by
  bool ok = false;
  std::string error;  ///< diagnostic when !ok
  SolveStats stats;
  std::vector<SolutionRecord> records;
  double wall_time_s = 0.0;
  json summary;
};

inline json run_summary_json(const RunResult& res) {
  const RunConfig& cfg = res.config;
  json j;
  j["config_hash"] = res.hash;
  j["status"] = res.ok ? "ok" : "solver_error";
  if (!res.ok) j["error"] = res.error;
  j["variant"] = variant_name(cfg.variant);
  j["geometry"] = {{"kind", cfg.geometry.kind},
                   {"severity", cfg.geometry.severity},
                   {"r_max", cfg.geometry.r_max}};
  j["tolerances"] = {{"cfl", cfg.solver.cfl},
                     {"steady_tolerance", cfg.steady.tolerance},
                     {"steady_window", cfg.steady.window}};
  j["steady"] = {{"detected", res.stats.steady_reached},
                 {"residual", res.stats.steady_residual},
                 {"steps", res.stats.steps},
                 {"t_final", res.stats.t_final}};
  j["area"] = {{"min", res.stats.min_a}, {"max", res.stats.max_a}};
  j["conservation"] = {{"defect_max", res.stats.conservation_defect_max},
                       {"roundtrip_defect_max", res.stats.boundary_roundtrip_defect_max},
                       {"mass_initial", res.stats.mass_initial},
                       {"mass_final", res.stats.mass_final},
                       {"boundary_mass_total", res.stats.boundary_mass_total}};
  if (!res.records.empty()) {
    const SolutionRecord& last = res.records.back();
    int arg = 0;
    for (int i = 1; i < last.size(); ++i)
      if (std::abs(last.u[i]) > std::abs(last.u[arg])) arg = i;
    j["peak"] = {{"u", last.u[arg]}, {"z", last.z[arg]}, {"t", last.t}};
  }
  j["records"] = res.records.size();
  j["wall_time_s"] = res.wall_time_s;
  return j;
}

/// Write records, index, summary and effective config into cfg.output.directory.
inline void write_run_outputs(const RunResult& res) {
  namespace fs = std::filesystem;
  const fs::path dir = res.config.output.directory;
  fs::create_directories(dir);
  std::string index = "record,t,file\n";
  for (std::size_t i = 0; i < res.records.size(); ++i) {
    const std::string name = record_file_name(static_cast<int>(i));
    write_text_file(dir / name, record_csv_text(res.records[i]));
    index += std::to_string(i) + "," + format_double(res.records[i].t) + "," + name + "\n";
  }
  write_text_file(dir / "index.csv", index);
  write_text_file(dir / "summary.json", res.summary.dump(2) + "\n");
  write_text_file(dir / "effective.ini", effective_config_text(res.config));
}

/// Read back the records written by write_run_outputs (restores t from the index).
inline std::vector<SolutionRecord> read_run_records(const std::string& directory) {
  namespace fs = std::filesystem;
  const fs::path dir = directory;
  std::ifstream in(dir / "index.csv");
  if (!in) throw ConfigError("output: cannot open '" + (dir / "index.csv").string() + "'");
  std::string line;
  if (!std::getline(in, line) || detail::strip_ws(line) != "record,t,file")
    throw ConfigError("output: malformed index header in '" + directory + "'");
  std::vector<SolutionRecord> records;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::strip_ws(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 3)
      throw ConfigError("output: index line " + std::to_string(lineno) + " needs 3 columns");
    const std::string file = detail::strip_ws(cells[2]);
    std::ifstream rec_in(dir / file);
    if (!rec_in) throw ConfigError("output: cannot open record '" + file + "'");
    std::ostringstream buf;
    buf << rec_in.rdbuf();
    SolutionRecord rec = record_from_csv_text(buf.str(), file);
    rec.t = detail::parse_csv_double(cells[1], "index.csv", lineno);
    records.push_back(std::move(rec));
  }
  return records;
}

/// Run one configured case from the resting initial state. Solver failures
/// are captured in the result (status/summary), not rethrown; configuration
/// problems do throw. Outputs are written when an output directory is set.
inline RunResult run_case(const RunConfig& cfg) {
  cfg.validate();
  RunResult res;
  res.config = cfg;
  res.hash = config_hash(cfg);
  const auto t0 = std::chrono::steady_clock::now();

  const VesselGeometry geo = cfg.make_geometry();
  const Mesh1D mesh(cfg.solver.elements, geo.length(), cfg.solver.degree);
  DgOperator op(mesh, geo, cfg.params, cfg.make_boundary(), cfg.variant);
  if (cfg.solver.limiter) op.enable_limiter(true, cfg.solver.tvb_m);
  StateField u = op.project(
      [&geo](double z) {
        const double r = geo.radius(z);
        return r * r;
      },
      [](double) { return 0.0; });
  op.set_outlet_reference(u);

  try {
    res.stats = integrate(op, u, cfg.make_solve_options(), [&](const StateField& f) {
      res.records.push_back(sample_record(f, geo, cfg.params, cfg.variant, cfg.output.samples));
    });
    res.ok = true;
  } catch (const std::exception& e) {
    res.ok = false;
    res.error = e.what();
    // u still holds the last committed state; keep it for diagnosis.
    if (res.records.empty() || u.time > res.records.back().t)
      res.records.push_back(sample_record(u, geo, cfg.params, cfg.variant, cfg.output.samples));
  }

  res.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  res.summary = run_summary_json(res);
  if (!cfg.output.directory.empty()) write_run_outputs(res);
  return res;
}

// ---------------------------------------------------------------------------
// Model comparison
// ---------------------------------------------------------------------------

struct PairDivergence {
  std::string first, second;  ///< variant names; metrics are relative to `first`
  double max_rel_u = 0.0, l2_rel_u = 0.0;
  double max_rel_p = 0.0, l2_rel_p = 0.0;
};

struct ComparisonReport {
  std::vector<RunResult> runs;  ///< classical, extended, appendix-b (always 3)
  bool degenerate = false;      ///< no constricted region: metrics cover the whole vessel
  double region_z_lo = 0.0, region_z_hi = 0.0;
  int region_samples = 0;
  std::vector<PairDivergence> divergence;
  std::map<std::string, double> peak_u_region;  ///< variant -> max |u| inside the region
  json summary;
};

namespace detail {

inline PairDivergence pair_divergence(const SolutionRecord& x, const SolutionRecord& y,
                                      const std::vector<int>& mask, const std::string& first,
                                      const std::string& second) {
  PairDivergence d;
  d.first = first;
  d.second = second;
  double ref_u = 0.0, ref_p = 0.0, du_max = 0.0, dp_max = 0.0;
  double du2 = 0.0, dp2 = 0.0, u2 = 0.0, p2 = 0.0;
  for (int i : mask) {
    ref_u = std::max(ref_u, std::abs(x.u[i]));
    ref_p = std::max(ref_p, std::abs(x.p[i]));
    du_max = std::max(du_max, std::abs(x.u[i] - y.u[i]));
    dp_max = std::max(dp_max, std::abs(x.p[i] - y.p[i]));
    du2 += (x.u[i] - y.u[i]) * (x.u[i] - y.u[i]);
    dp2 += (x.p[i] - y.p[i]) * (x.p[i] - y.p[i]);
    u2 += x.u[i] * x.u[i];
    p2 += x.p[i] * x.p[i];
  }
  d.max_rel_u = ref_u > 0.0 ? du_max / ref_u : 0.0;
  d.max_rel_p = ref_p > 0.0 ? dp_max / ref_p : 0.0;
  d.l2_rel_u = u2 > 0.0 ? std::sqrt(du2 / u2) : 0.0;
  d.l2_rel_p = p2 > 0.0 ? std::sqrt(dp2 / p2) : 0.0;
  return d;
}

}  // namespace detail

/// Run all three model variants on identical grids and boundary conditions
/// and measure how much they disagree inside the constricted region (where
/// R0 < r_max - 0.01 * constriction depth). A vessel without a constriction
/// makes the comparison degenerate: the metrics then cover the whole vessel.
inline ComparisonReport compare_models(const RunConfig& base) {
  base.validate();
  const ModelVariant variants[3] = {ModelVariant::kClassical, ModelVariant::kExtended,
                                    ModelVariant::kAppendixB};
  std::vector<std::future<RunResult>> futures;
  for (ModelVariant v : variants) {
    RunConfig cfg = base;
    cfg.variant = v;
    if (!base.output.directory.empty())
      cfg.output.directory = base.output.directory + "/" + variant_name(v);
    futures.push_back(std::async(std::launch::async, [cfg]() {
      try {
        return run_case(cfg);
      } catch (const std::exception& e) {
        RunResult res;
        res.config = cfg;
        res.hash = config_hash(cfg);
        res.ok = false;
        res.error = e.what();
        res.summary = run_summary_json(res);
        return res;
      }
    }));
  }

  ComparisonReport rep;
  for (auto& f : futures) rep.runs.push_back(f.get());

  // Constricted-region mask from the reference radius on the common z-grid.
  const VesselGeometry geo = base.make_geometry();
  const int n = base.output.samples;
  std::vector<double> r0(n);
  double r_lo = std::numeric_limits<double>::infinity(), r_hi = 0.0;
  for (int i = 0; i < n; ++i) {
    r0[i] = geo.radius(geo.length() * i / (n - 1));
    r_lo = std::min(r_lo, r0[i]);
    r_hi = std::max(r_hi, r0[i]);
  }
  const double depth = r_hi - r_lo;
  rep.degenerate = !(depth > 1e-12 * r_hi);
  std::vector<int> mask;
  for (int i = 0; i < n; ++i)
    if (rep.degenerate || r0[i] < r_hi - 0.01 * depth) mask.push_back(i);
  rep.region_samples = static_cast<int>(mask.size());
  if (!mask.empty()) {
    rep.region_z_lo = geo.length() * mask.front() / (n - 1);
    rep.region_z_hi = geo.length() * mask.back() / (n - 1);
  }

  auto final_record = [&](int k) -> const SolutionRecord* {
    return rep.runs[k].ok && !rep.runs[k].records.empty() ? &rep.runs[k].records.back() : nullptr;
  };
  for (int k = 0; k < 3; ++k)
    if (const SolutionRecord* rec = final_record(k)) {
      double peak = 0.0;
      for (int i : mask) peak = std::max(peak, std::abs(rec->u[i]));
      rep.peak_u_region[variant_name(variants[k])] = peak;
    }
  const std::pair<int, int> pairs[3] = {{1, 0}, {1, 2}, {0, 2}};
  for (auto [i, j] : pairs) {
    const SolutionRecord* x = final_record(i);
    const SolutionRecord* y = final_record(j);
    if (x && y)
      rep.divergence.push_back(detail::pair_divergence(
          *x, *y, mask, variant_name(variants[i]), variant_name(variants[j])));
  }

  json j;
  j["config_hash"] = config_hash(base);
  j["degenerate_comparison"] = rep.degenerate;
  j["region"] = {{"z_lo", rep.region_z_lo},
                 {"z_hi", rep.region_z_hi},
                 {"samples", rep.region_samples}};
  j["tolerances"] = {{"cfl", base.solver.cfl},
                     {"steady_tolerance", base.steady.tolerance},
                     {"steady_window", base.steady.window}};
  json jv;
  for (int k = 0; k < 3; ++k) {
    json entry;
    entry["status"] = rep.runs[k].ok ? "ok" : "solver_error";
    if (!rep.runs[k].ok) entry["error"] = rep.runs[k].error;
    entry["steady_residual"] = rep.runs[k].stats.steady_residual;
    if (rep.peak_u_region.count(variant_name(variants[k])))
      entry["peak_u_region"] = rep.peak_u_region.at(variant_name(variants[k]));
    jv[variant_name(variants[k])] = entry;
  }
  j["variants"] = jv;
  json jd = json::array();
  for (const PairDivergence& d : rep.divergence)
    jd.push_back({{"first", d.first},
                  {"second", d.second},
                  {"max_rel_u", d.max_rel_u},
                  {"l2_rel_u", d.l2_rel_u},
                  {"max_rel_p", d.max_rel_p},
                  {"l2_rel_p", d.l2_rel_p}});
  j["divergence"] = jd;
  rep.summary = j;

  if (!base.output.directory.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(base.output.directory);
    std::vector<std::string> header = {"z"};
    std::vector<const std::vector<double>*> cols;
    std::vector<double> zcol(n);
    for (int i = 0; i < n; ++i) zcol[i] = geo.length() * i / (n - 1);
    cols.push_back(&zcol);
    for (int k = 0; k < 3; ++k)
      if (const SolutionRecord* rec = final_record(k)) {
        header.push_back("u_" + variant_name(variants[k]));
        cols.push_back(&rec->u);
      }
    for (int k = 0; k < 3; ++k)
      if (const SolutionRecord* rec = final_record(k)) {
        header.push_back("p_" + variant_name(variants[k]));
        cols.push_back(&rec->p);
      }
    write_text_file(fs::path(base.output.directory) / "comparison.csv", csv_text(header, cols));
    write_text_file(fs::path(base.output.directory) / "comparison.json", j.dump(2) + "\n");
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Convergence study
// ---------------------------------------------------------------------------

struct ConvergenceTable {
  int degree = 0;
  bool projection_only = false;
  std::vector<int> n_list;
  std::vector<double> err_a, err_q;    ///< projection: per N; evolution: per consecutive pair
  std::vector<double> rate_a, rate_q;  ///< rates between consecutive errors
  double fitted_rate_a = 0.0, fitted_rate_q = 0.0;  ///< least-squares slopes
  bool monotone = true;
  double required_rate = 0.0;  ///< degree + 0.7
  bool pass = false;
  json summary;
};

namespace detail {

/// Least-squares slope of -log2(err) against log2(n).
inline double fitted_rate(const std::vector<int>& n, const std::vector<double>& err) {
  const int m = static_cast<int>(err.size());
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (int i = 0; i < m; ++i) {
    const double x = std::log2(static_cast<double>(n[i]));
    const double y = -std::log2(std::max(err[i], 1e-300));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = m * sxx - sx * sx;
  return denom > 0.0 ? (m * sxy - sx * sy) / denom : 0.0;
}

}  // namespace detail

/// Self-convergence study on a straight compliant tube with a smooth interior
/// pulse in both fields. With t_end > 0 the runs are compared pairwise at
/// min(t_end, 1 ms), before the pulse reaches a boundary; with t_end = 0 only
/// the initial projection is measured against the analytic profiles.
inline ConvergenceTable convergence_study(const RunConfig& base, std::vector<int> n_list) {
  base.validate();
  if (n_list.size() < 3)
    throw ConfigError("convergence: need at least three mesh sizes");
  for (std::size_t i = 0; i + 1 < n_list.size(); ++i)
    if (n_list[i] >= n_list[i + 1])
      throw ConfigError("convergence: mesh sizes must increase strictly");

  const double radius = base.geometry.r_max;
  const double length =
      detail::lower(base.geometry.kind) == "straight" ? base.geometry.length : 6.0;
  static const int kGridSamples = 2048;

  // Smooth interior pulse in both conserved fields.
  const VesselGeometry geo = VesselGeometry::straight(radius, length);
  const double a0 = radius * radius;
  const double c0 = celerity(a0, geo.sample(0.0), base.params);
  const double zc = 0.5 * length, width = length / 7.5;
  auto a_init = [=](double z) {
    const double d = (z - zc) / width;
    return a0 * (1.0 + 0.05 * std::exp(-d * d));
  };
  auto q_init = [=](double z) {
    const double d = (z - zc) / width;
    return 0.02 * a0 * c0 * std::exp(-d * d);
  };

  ConvergenceTable table;
  table.degree = base.solver.degree;
  table.projection_only = base.solver.t_end <= 0.0;
  table.n_list = n_list;
  table.required_rate = base.solver.degree + 0.7;
  const double t_end = table.projection_only ? 0.0 : std::min(base.solver.t_end, 1e-3);

  auto run_one = [&](int n) {
    const Mesh1D mesh(n, length, base.solver.degree);
    BoundarySpec bc;
    bc.inflow = {0.0, 0.0};
    DgOperator op(mesh, geo, base.params, bc, base.variant);
    StateField u = op.project(a_init, q_init);
    op.set_outlet_reference(u);
    if (t_end > 0.0) {
      SolveOptions opt;
      opt.t_end = t_end;
      opt.cfl = base.solver.cfl;
      opt.detect_steady = false;
      integrate(op, u, opt, [](const StateField&) {});
    }
    std::vector<double> samples(2 * kGridSamples);
    for (int i = 0; i < kGridSamples; ++i) {
      const FlowState s = u.at(length * i / (kGridSamples - 1));
      samples[i] = s.a;
      samples[kGridSamples + i] = s.q;
    }
    return samples;
  };

  std::vector<std::future<std::vector<double>>> futures;
  for (int n : n_list) futures.push_back(std::async(std::launch::async, run_one, n));
  std::vector<std::vector<double>> sampled;
  for (auto& f : futures) sampled.push_back(f.get());

  auto rms = [&](const std::vector<double>& x, const std::vector<double>& y, int offset) {
    double s = 0.0;
    for (int i = 0; i < kGridSamples; ++i) {
      const double d = x[offset + i] - y[offset + i];
      s += d * d;
    }
    return std::sqrt(s / kGridSamples);
  };

  std::vector<int> err_n;  // mesh size attributed to each error entry
  if (table.projection_only) {
    std::vector<double> exact(2 * kGridSamples);
    for (int i = 0; i < kGridSamples; ++i) {
      const double z = length * i / (kGridSamples - 1);
      exact[i] = a_init(z);
      exact[kGridSamples + i] = q_init(z);
    }
    for (std::size_t j = 0; j < n_list.size(); ++j) {
      table.err_a.push_back(rms(sampled[j], exact, 0));
      table.err_q.push_back(rms(sampled[j], exact, kGridSamples));
      err_n.push_back(n_list[j]);
    }
  } else {
    for (std::size_t j = 0; j + 1 < n_list.size(); ++j) {
      table.err_a.push_back(rms(sampled[j], sampled[j + 1], 0));
      table.err_q.push_back(rms(sampled[j], sampled[j + 1], kGridSamples));
      err_n.push_back(n_list[j]);
    }
  }
  for (std::size_t j = 0; j + 1 < table.err_a.size(); ++j) {
    const double dn = std::log2(static_cast<double>(err_n[j + 1]) / err_n[j]);
    table.rate_a.push_back(std::log2(table.err_a[j] / table.err_a[j + 1]) / dn);
    table.rate_q.push_back(std::log2(table.err_q[j] / table.err_q[j + 1]) / dn);
    if (table.err_a[j + 1] >= table.err_a[j] || table.err_q[j + 1] >= table.err_q[j])
      table.monotone = false;
  }
  table.fitted_rate_a = detail::fitted_rate(err_n, table.err_a);
  table.fitted_rate_q = detail::fitted_rate(err_n, table.err_q);
  table.pass = table.monotone && table.fitted_rate_a >= table.required_rate &&
               table.fitted_rate_q >= table.required_rate;

  json j;
  j["config_hash"] = config_hash(base);
  j["mode"] = table.projection_only ? "projection" : "evolution";
  j["degree"] = table.degree;
  j["n"] = table.n_list;
  j["err_a"] = table.err_a;
  j["err_q"] = table.err_q;
  j["rate_a"] = table.rate_a;
  j["rate_q"] = table.rate_q;
  j["fitted_rate_a"] = table.fitted_rate_a;
  j["fitted_rate_q"] = table.fitted_rate_q;
  j["required_rate"] = table.required_rate;
  j["monotone"] = table.monotone;
  j["pass"] = table.pass;
  table.summary = j;

  if (!base.output.directory.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(base.output.directory);
    std::vector<double> ncol(err_n.begin(), err_n.end());
    write_text_file(fs::path(base.output.directory) / "convergence.csv",
                    csv_text({"n", "err_a", "err_q"}, {&ncol, &table.err_a, &table.err_q}));
    write_text_file(fs::path(base.output.directory) / "convergence.json", j.dump(2) + "\n");
  }
  return table;
}

// ---------------------------------------------------------------------------
// Cross-section reconstruction driver
// ---------------------------------------------------------------------------

/// Build per-station slices from the last two records. When `steady` is set
/// the wall velocity is exactly zero; otherwise it is the backward difference
/// over the last output interval.
inline std::vector<SliceData> slices_from_records(const SolutionRecord& prev,
                                                  const SolutionRecord& last, bool steady,
                                                  const VesselGeometry& geo) {
  if (prev.size() != last.size())
    throw InvalidParameterError("slices: records have different sample counts");
  const double dt = last.t - prev.t;
  if (!steady && !(dt > 0.0))
    throw InvalidParameterError("slices: records must be time-ordered for wall velocities");
  std::vector<SliceData> slices(last.size());
  for (int i = 0; i < last.size(); ++i) {
    SliceData& s = slices[i];
    s.z = last.z[i];
    s.a = last.a[i];
    s.q = last.q[i];
    s.da_dt = steady ? 0.0 : (last.a[i] - prev.a[i]) / dt;
    s.geo = geo.sample(last.z[i]);
  }
  return slices;
}

/// Long-format CSV of the reconstructed cross-section field.
inline std::string field_csv_text(const Field2d& f) {
  std::vector<double> z, r, uz, ur, p;
  const std::size_t total = static_cast<std::size_t>(f.nz()) * f.nr();
  for (auto* col : {&z, &r, &uz, &ur, &p}) col->reserve(total);
  for (int iz = 0; iz < f.nz(); ++iz)
    for (int ir = 0; ir < f.nr(); ++ir) {
      z.push_back(f.z[iz]);
      r.push_back(f.r_over_wall[ir] * f.wall_radius[iz]);
      uz.push_back(f.at_uz(iz, ir));
      ur.push_back(f.at_ur(iz, ir));
      p.push_back(f.at_p(iz, ir));
    }
  return csv_text({"z", "r", "u_z", "u_r", "p"}, {&z, &r, &uz, &ur, &p});
}

struct FieldResult {
  RunResult run;
  Field2d field;
  json summary;
};

/// Run the case, then reconstruct (u_z, u_r, p) across the lumen from its
/// final records. Solver failures propagate in `run` (no field is built);
/// radial-solve failures throw ConvergenceError.
inline FieldResult postprocess_case(const RunConfig& cfg) {
  FieldResult out;
  out.run = run_case(cfg);
  if (!out.run.ok) return out;
  const std::vector<SolutionRecord>& recs = out.run.records;
  const VesselGeometry geo = cfg.make_geometry();
  const bool steady = out.run.stats.steady_reached || recs.size() < 2;
  const SolutionRecord& last = recs.back();
  const SolutionRecord& prev = recs.size() >= 2 ? recs[recs.size() - 2] : last;
  const std::vector<SliceData> slices = slices_from_records(prev, last, steady, geo);
  const CharacteristicScales scales(cfg.boundary.inlet_velocity, geo.length(), cfg.params);
  out.field = reconstruct_2d_field(slices, scales, cfg.params, cfg.variant,
                                   cfg.output.radial_samples, cfg.output.bvp_points);
  json j;
  j["config_hash"] = out.run.hash;
  j["status"] = "ok";
  j["steady_slices"] = steady;
  j["stations"] = out.field.nz();
  j["radial_samples"] = out.field.nr();
  j["scales"] = {{"u_z", cfg.boundary.inlet_velocity},
                 {"length", geo.length()},
                 {"rho", cfg.params.rho},
                 {"mu", cfg.params.mu}};
  double max_ur = 0.0;
  for (double v : out.field.u_r) max_ur = std::max(max_ur, std::abs(v));
  j["max_abs_u_r"] = max_ur;
  out.summary = j;
  if (!cfg.output.directory.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output.directory);
    write_text_file(fs::path(cfg.output.directory) / "field.csv", field_csv_text(out.field));
    write_text_file(fs::path(cfg.output.directory) / "field.json", j.dump(2) + "\n");
  }
  return out;
}

/// Reference-geometry table on a uniform grid (for plotting and inspection).
inline std::string geometry_table_csv_text(const VesselGeometry& geo, int n_samples = 512) {
  if (n_samples < 2) throw InvalidParameterError("geometry table: need at least two samples");
  std::vector<double> z(n_samples), r0(n_samples), dr0(n_samples), dlnr0(n_samples),
      d2lnr0(n_samples), ac(n_samples), dac(n_samples);
  for (int i = 0; i < n_samples; ++i) {
    z[i] = geo.length() * i / (n_samples - 1);
    const GeometrySample g = geo.sample(z[i]);
    r0[i] = g.r0;
    dr0[i] = g.dr0_dz;
    dlnr0[i] = g.dlnr0_dz;
    d2lnr0[i] = g.d2lnr0_dz2;
    ac[i] = g.alpha_c;
    dac[i] = g.dalpha_c_dz;
  }
  return csv_text({"z", "r0", "dr0_dz", "dlnr0_dz", "d2lnr0_dz2", "alpha_c", "dalpha_c_dz"},
                  {&z, &r0, &dr0, &dlnr0, &d2lnr0, &ac, &dac});
}

}  // namespace stenoflow

#endif  // STENOFLOW_HARNESS_HPP
