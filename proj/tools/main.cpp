/// Command-line driver for the stenoflow library.
///
/// Subcommands:
///   run          simulate one case and write records + summary
///   compare      run all three model variants on the same case and report divergence
///   converge     grid-refinement study on a straight-tube smooth pulse
///   postprocess  run a case, then reconstruct the (u_z, u_r, p) cross-section field
///   profiles     export the reference-geometry table as CSV
///
/// Exit codes: 0 success, 2 configuration error, 3 solver failure,
/// 4 postprocess (field reconstruction) failure.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <stenoflow/harness.hpp>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;
constexpr int kExitPostprocess = 4;

/// Flags shared by the case-running subcommands. A zero severity or an empty
/// string means "keep whatever the config file (or the default) says".
struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::string variant;
  int severity = 0;
  bool steady = false;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f, bool with_variant) {
  cmd->add_option("--config", f.config_path, "configuration file (strict INI)");
  cmd->add_option("--out", f.out_dir, "output directory (overrides the config)");
  if (with_variant)
    cmd->add_option("--variant", f.variant, "model variant")
        ->check(CLI::IsMember({"classical", "extended", "appendix-b"}));
  cmd->add_option("--severity", f.severity, "benchmark constriction severity [%]")
      ->check(CLI::IsMember({23, 40, 50}));
  cmd->add_flag("--steady", f.steady, "stop as soon as the flow is steady");
}

/// Load the config file (or start from defaults), apply flag overrides, and
/// validate the result. Throws ConfigError / InvalidParameterError on bad input.
stenoflow::RunConfig build_config(const CommonFlags& f) {
  stenoflow::RunConfig cfg;
  if (!f.config_path.empty()) cfg = stenoflow::load_config(f.config_path);
  if (!f.out_dir.empty()) cfg.output.directory = f.out_dir;
  if (!f.variant.empty()) cfg.variant = stenoflow::variant_from_name(f.variant);
  if (f.severity != 0) {
    cfg.geometry.kind = "stenosis";
    cfg.geometry.severity = f.severity;
  }
  if (f.steady) cfg.steady.detect = true;
  cfg.validate();
  return cfg;
}

int cmd_run(const CommonFlags& f) {
  const stenoflow::RunConfig cfg = build_config(f);
  const stenoflow::RunResult res = stenoflow::run_case(cfg);
  std::cout << res.summary.dump(2) << "\n";
  if (!res.ok) {
    std::cerr << "run failed: " << res.error << "\n";
    return kExitSolver;
  }
  return kExitOk;
}

int cmd_compare(const CommonFlags& f) {
  const stenoflow::RunConfig cfg = build_config(f);
  const stenoflow::ComparisonReport report = stenoflow::compare_models(cfg);
  std::cout << report.summary.dump(2) << "\n";
  bool all_ok = true;
  for (const stenoflow::RunResult& run : report.runs) {
    if (run.ok) continue;
    all_ok = false;
    std::cerr << "variant '" << stenoflow::variant_name(run.config.variant)
              << "' failed: " << run.error << "\n";
  }
  return all_ok ? kExitOk : kExitSolver;
}

int cmd_converge(const CommonFlags& f, const std::vector<int>& grids) {
  const stenoflow::RunConfig cfg = build_config(f);
  const stenoflow::ConvergenceTable table = stenoflow::convergence_study(cfg, grids);
  std::cout << table.summary.dump(2) << "\n";
  if (!table.pass) {
    std::cerr << "convergence study failed: fitted rates (" << table.fitted_rate_a << ", "
              << table.fitted_rate_q << ") below required " << table.required_rate
              << (table.monotone ? "" : " (errors not monotone)") << "\n";
    return kExitSolver;
  }
  return kExitOk;
}

int cmd_postprocess(const CommonFlags& f) {
  const stenoflow::RunConfig cfg = build_config(f);
  stenoflow::FieldResult out;
  try {
    out = stenoflow::postprocess_case(cfg);
  } catch (const stenoflow::ConfigError&) {
    throw;  // configuration problems keep their own exit code
  } catch (const std::invalid_argument&) {
    throw;
  } catch (const std::exception& e) {
    // run_case captures solver failures in the result instead of throwing, so
    // anything escaping here comes from the field-reconstruction stage.
    std::cerr << "field reconstruction failed: " << e.what() << "\n";
    return kExitPostprocess;
  }
  if (!out.run.ok) {
    std::cout << out.run.summary.dump(2) << "\n";
    std::cerr << "run failed: " << out.run.error << "\n";
    return kExitSolver;
  }
  std::cout << out.summary.dump(2) << "\n";
  return kExitOk;
}

int cmd_profiles(const CommonFlags& f) {
  const stenoflow::RunConfig cfg = build_config(f);
  const stenoflow::VesselGeometry geo = cfg.make_geometry();
  const std::string csv = stenoflow::geometry_table_csv_text(geo, cfg.output.samples);
  if (cfg.output.directory.empty()) {
    std::cout << csv;
  } else {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output.directory);
    stenoflow::write_text_file(fs::path(cfg.output.directory) / "geometry.csv", csv);
    std::cout << "wrote " << (fs::path(cfg.output.directory) / "geometry.csv").string()
              << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stenoflow: one-dimensional blood-flow solver for constricted vessels"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  CLI::App* run = app.add_subcommand("run", "simulate one case");
  add_common_flags(run, run_flags, true);

  CommonFlags compare_flags;
  CLI::App* compare =
      app.add_subcommand("compare", "run every model variant on the same case");
  add_common_flags(compare, compare_flags, false);

  CommonFlags converge_flags;
  std::vector<int> grids = {50, 100, 200};
  CLI::App* converge =
      app.add_subcommand("converge", "grid-refinement study on a smooth pulse");
  add_common_flags(converge, converge_flags, true);
  converge->add_option("--grids", grids, "element counts (at least three, increasing)")
      ->expected(-3);

  CommonFlags post_flags;
  CLI::App* post =
      app.add_subcommand("postprocess", "reconstruct the cross-section velocity field");
  add_common_flags(post, post_flags, true);

  CommonFlags profile_flags;
  CLI::App* profiles = app.add_subcommand("profiles", "export the geometry table as CSV");
  add_common_flags(profiles, profile_flags, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (app.got_subcommand(run)) return cmd_run(run_flags);
    if (app.got_subcommand(compare)) return cmd_compare(compare_flags);
    if (app.got_subcommand(converge)) return cmd_converge(converge_flags, grids);
    if (app.got_subcommand(post)) return cmd_postprocess(post_flags);
    if (app.got_subcommand(profiles)) return cmd_profiles(profile_flags);
  } catch (const stenoflow::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  }
  return kExitOk;
}
