#include "rpf/commands.hpp"

#include <algorithm>
#include <ostream>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "rpf/errors.hpp"
#include "rpf/harness.hpp"
#include "rpf/io.hpp"
#include "rpf/scenario.hpp"

namespace rpf::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Loaded {
  scenario::Scenario scenario;
  fs::path out_dir;
};

Loaded load(const CommonOptions& options, const std::string& command) {
  if (options.scenario.empty()) throw ConfigError("--scenario is required");
  Loaded loaded{scenario::load_scenario(options.scenario), {}};
  auto& cfg = loaded.scenario.experiment;
  if (options.seed) cfg.seeds = {*options.seed};
  cfg.validate();
  loaded.out_dir = options.out ? *options.out : fs::path(loaded.scenario.output_dir) / command;
  return loaded;
}

// The manifest goes out before any artifact so a directory with result
// files always says how they were produced.
void write_manifest(const fs::path& dir, const std::string& command, const harness::ExperimentConfig& cfg,
                    const json& parameters, const std::vector<std::string>& artifacts) {
  const json config = scenario::resolved_json(cfg);
  json run = {{"command", command}, {"config", config}, {"seeds", cfg.seeds}, {"parameters", parameters}};
  json manifest = {{"tool", kToolName},
                   {"version", kToolVersion},
                   {"command", command},
                   {"config_hash", scenario::config_hash(cfg)},
                   {"run_hash", scenario::hash_text(run.dump())},
                   {"seeds", cfg.seeds},
                   {"parameters", parameters},
                   {"artifacts", artifacts},
                   {"config", config}};
  io::write_file_atomic(dir / kManifestFile, manifest.dump(2) + "\n");
}

double resolve_alpha(const std::optional<double>& alpha, const harness::ExperimentConfig& cfg) {
  const double a = alpha ? *alpha : (cfg.alphas.empty() ? 0.01 : cfg.alphas.front());
  if (!(a > 0.0 && a < 1.0)) throw ConfigError("--alpha: must lie in (0, 1)");
  return a;
}

}  // namespace

int cmd_simulate(const SimulateOptions& options, std::ostream& out) {
  const auto loaded = load(options, "simulate");
  const auto& cfg = loaded.scenario.experiment;
  const std::uint64_t seed = cfg.seeds.front();

  const std::vector<std::string> artifacts = {"truth_density.csv", "truth_speed.csv", "measurements.csv",
                                              "measurements_clean.csv"};
  write_manifest(loaded.out_dir, "simulate", cfg, json{{"seed", seed}}, artifacts);

  const auto truth = harness::simulate_truth(cfg, seed);
  io::write_file_atomic(loaded.out_dir / artifacts[0], io::trajectory_csv(truth.trajectory.states));
  io::write_file_atomic(loaded.out_dir / artifacts[1], io::trajectory_csv(truth.trajectory.speeds));
  io::write_file_atomic(loaded.out_dir / artifacts[2], io::measurement_log_csv(truth.faulted));
  io::write_file_atomic(loaded.out_dir / artifacts[3], io::measurement_log_csv(truth.clean));

  if (!options.quiet) {
    std::size_t gnss = 0;
    std::size_t faulty = 0;
    for (const auto& step : truth.faulted) {
      for (const auto& m : step) {
        if (m.kind != sensing::MeasurementKind::gnss_speed) continue;
        ++gnss;
        faulty += m.faulty ? 1 : 0;
      }
    }
    out << "simulated seed " << seed << ": " << cfg.horizon << " steps, " << gnss << " GNSS readings (" << faulty
        << " faulty) -> " << loaded.out_dir.string() << "\n";
  }
  return kExitOk;
}

int cmd_filter(const FilterOptions& options, std::ostream& out) {
  const auto loaded = load(options, "filter");
  const auto& cfg = loaded.scenario.experiment;
  if (options.variant.empty()) throw ConfigError("--variant is required");
  sensing::HypothesisMode mode;
  try {
    mode = sensing::parse_hypothesis_mode(options.variant);
  } catch (const std::exception&) {
    throw ConfigError("--variant: unknown variant '" + options.variant + "'");
  }
  const double alpha = mode == sensing::HypothesisMode::none ? 0.0 : resolve_alpha(options.alpha, cfg);
  if (options.log.empty()) throw ConfigError("--log is required");
  const std::string log_text = io::read_file(options.log);
  std::istringstream log_stream(log_text);
  const auto log = io::parse_measurement_log(log_stream, cfg.horizon, cfg.network.size(), options.log.string());
  const std::uint64_t seed = cfg.seeds.front();

  const std::vector<std::string> artifacts = {"estimate_density.csv", "decisions.csv", "summary.json"};
  const json parameters = {{"variant", options.variant},
                           {"alpha", alpha},
                           {"seed", seed},
                           {"measurement_log_hash", scenario::hash_text(log_text)}};
  write_manifest(loaded.out_dir, "filter", cfg, parameters, artifacts);

  const auto run = harness::run_filter(cfg, log, mode, alpha, seed);
  std::size_t rejected = 0;
  for (const auto& d : run.decisions) rejected += d.decision.rejected_h0 ? 1 : 0;
  const json summary = {{"gated", run.decisions.size()},
                        {"rejected", rejected},
                        {"ungated", run.ungated_clean + run.ungated_faulty},
                        {"resamples", run.resamples},
                        {"steps_all_rejected", run.steps_all_rejected},
                        {"collapsed", run.collapsed},
                        {"collapse_step", run.collapse_step},
                        {"collapse_message", run.collapse_message}};
  io::write_file_atomic(loaded.out_dir / artifacts[0], io::trajectory_csv(run.estimates));
  io::write_file_atomic(loaded.out_dir / artifacts[1], io::decisions_csv(run.decisions));
  io::write_file_atomic(loaded.out_dir / artifacts[2], summary.dump(2) + "\n");

  if (run.collapsed) {
    out << "weight collapse at step " << run.collapse_step << ": " << run.collapse_message << "\n";
    return kExitCollapse;
  }
  if (!options.quiet) {
    out << "filtered " << options.variant << " (alpha " << io::format_number(alpha) << "): " << rejected << " of "
        << run.decisions.size() << " gated readings rejected -> " << loaded.out_dir.string() << "\n";
  }
  return kExitOk;
}

int cmd_sweep(const SweepOptions& options, std::ostream& out) {
  auto loaded = load(options, "sweep");
  auto& cfg = loaded.scenario.experiment;
  if (options.variant) {
    sensing::HypothesisMode mode;
    try {
      mode = sensing::parse_hypothesis_mode(*options.variant);
    } catch (const std::exception&) {
      throw ConfigError("--variant: unknown variant '" + *options.variant + "'");
    }
    if (mode == sensing::HypothesisMode::none) throw ConfigError("--variant: sweep needs a gated variant");
    cfg.variants = {mode};
  }
  if (options.alpha) cfg.alphas = {resolve_alpha(options.alpha, cfg)};
  cfg.validate();

  const std::vector<std::string> artifacts = {"metrics.csv", "runs.csv"};
  json parameters = json::object();
  if (options.variant) parameters["variant"] = *options.variant;
  if (options.alpha) parameters["alpha"] = *options.alpha;
  write_manifest(loaded.out_dir, "sweep", cfg, parameters, artifacts);

  const auto report = harness::run_experiment(cfg);
  io::write_file_atomic(loaded.out_dir / artifacts[0], io::metrics_table_csv(report));
  io::write_file_atomic(loaded.out_dir / artifacts[1], io::runs_csv(report));

  const auto collapsed = std::count_if(report.runs.begin(), report.runs.end(),
                                       [](const harness::RunMetrics& r) { return r.collapsed; });
  if (!options.quiet) {
    out << "swept " << report.runs.size() << " runs -> " << loaded.out_dir.string() << "\n\n";
    const auto table = io::read_file(loaded.out_dir / artifacts[0]);
    out << io::render_metrics_table(io::parse_table(table, artifacts[0]));
  }
  if (collapsed > 0) {
    out << collapsed << " run(s) ended in weight collapse; see the collapsed column of runs.csv\n";
    return kExitCollapse;
  }
  return kExitOk;
}

int cmd_report(const fs::path& run_dir, std::ostream& out) {
  const fs::path manifest_path = run_dir / kManifestFile;
  if (!fs::exists(manifest_path)) {
    throw DataError("run directory " + run_dir.string() + " is missing: " + kManifestFile);
  }
  json manifest;
  try {
    manifest = json::parse(io::read_file(manifest_path));
  } catch (const json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  if (!manifest.contains("artifacts") || !manifest["artifacts"].is_array()) {
    throw DataError(manifest_path.string() + ": no artifact list");
  }
  std::vector<std::string> artifacts;
  std::vector<std::string> missing;
  for (const auto& a : manifest["artifacts"]) {
    const auto name = a.get<std::string>();
    artifacts.push_back(name);
    if (!fs::exists(run_dir / name)) missing.push_back(name);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw DataError("run directory " + run_dir.string() + " is missing: " + list);
  }

  out << manifest.value("tool", std::string(kToolName)) << " " << manifest.value("version", std::string()) << " "
      << manifest.value("command", std::string()) << ", config " << manifest.value("config_hash", std::string())
      << ", seeds";
  for (const auto& s : manifest.value("seeds", json::array())) out << " " << s.get<std::uint64_t>();
  out << "\n\n";

  if (std::find(artifacts.begin(), artifacts.end(), "metrics.csv") != artifacts.end()) {
    const auto table = io::parse_table(io::read_file(run_dir / "metrics.csv"), "metrics.csv");
    out << io::render_metrics_table(table);
    return kExitOk;
  }
  for (const auto& name : artifacts) out << "  " << name << "\n";
  if (std::find(artifacts.begin(), artifacts.end(), "summary.json") != artifacts.end()) {
    out << "\n" << json::parse(io::read_file(run_dir / "summary.json")).dump(2) << "\n";
  }
  return kExitOk;
}

int run_guarded(const std::function<int()>& command, std::ostream& err) {
  try {
    return command();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const WeightCollapse& e) {
    err << "weight collapse: " << e.what() << "\n";
    return kExitCollapse;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace rpf::cli
