#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rpf/commands.hpp"

int main(int argc, char** argv) {
  using namespace rpf::cli;

  CLI::App app{"Fault-gated particle filtering of freeway traffic"};
  app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);
  app.require_subcommand(1);

  auto add_common = [](CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--scenario", o.scenario, "Scenario file (JSON)")->required();
    cmd->add_option("--out", o.out, "Output directory (default <output_dir>/<command>)");
    cmd->add_option("--seed", o.seed, "Use this seed instead of the scenario's seed list");
    cmd->add_flag("--quiet", o.quiet, "Suppress progress output");
  };

  SimulateOptions simulate;
  auto* sim = app.add_subcommand("simulate", "Simulate ground truth and write the measurement log");
  add_common(sim, simulate);

  FilterOptions filter;
  auto* flt = app.add_subcommand("filter", "Run one gated filter over a measurement log");
  add_common(flt, filter);
  flt->add_option("--log", filter.log, "Measurement log (CSV)")->required();
  flt->add_option("--variant", filter.variant, "none, fisher, np_correct or np_incorrect")->required();
  flt->add_option("--alpha", filter.alpha, "Significance level (default: first scenario alpha)");

  SweepOptions sweep;
  auto* swp = app.add_subcommand("sweep", "Run every variant, alpha and seed and write the metrics table");
  add_common(swp, sweep);
  swp->add_option("--variant", sweep.variant, "Restrict to one gated variant");
  swp->add_option("--alpha", sweep.alpha, "Restrict to one alpha");

  std::string run_dir;
  std::string run_dir_flag;
  auto* rep = app.add_subcommand("report", "Print the summary of a finished run directory");
  rep->add_option("run_dir", run_dir, "Run directory");
  rep->add_option("--out", run_dir_flag, "Run directory (alternative to the positional argument)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (*sim) return run_guarded([&] { return cmd_simulate(simulate, std::cout); }, std::cerr);
  if (*flt) return run_guarded([&] { return cmd_filter(filter, std::cout); }, std::cerr);
  if (*swp) return run_guarded([&] { return cmd_sweep(sweep, std::cout); }, std::cerr);
  return run_guarded(
      [&] {
        const std::string dir = run_dir.empty() ? run_dir_flag : run_dir;
        if (dir.empty()) {
          std::cerr << "report: a run directory is required\n";
          return static_cast<int>(kExitConfig);
        }
        return cmd_report(dir, std::cout);
      },
      std::cerr);
}
