#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

namespace rpf::cli {

inline constexpr const char* kToolName = "rpf";
inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kManifestFile = "manifest.json";

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,    // bad scenario, flags or input data
  kExitCollapse = 3,  // a filter lost all of its weight
};

struct CommonOptions {
  std::filesystem::path scenario;
  std::optional<std::filesystem::path> out;  // defaults to <output_dir>/<command>
  std::optional<std::uint64_t> seed;         // replaces the scenario's seed list
  bool quiet = false;
};

struct SimulateOptions : CommonOptions {};

struct FilterOptions : CommonOptions {
  std::filesystem::path log;
  std::string variant;
  std::optional<double> alpha;  // defaults to the scenario's first alpha
};

struct SweepOptions : CommonOptions {
  std::optional<std::string> variant;  // restrict to one gated variant
  std::optional<double> alpha;         // restrict to one alpha
};

// Each command returns an exit code and throws on configuration or data
// errors; run_guarded maps those exceptions to exit codes.
int cmd_simulate(const SimulateOptions& options, std::ostream& out);
int cmd_filter(const FilterOptions& options, std::ostream& out);
int cmd_sweep(const SweepOptions& options, std::ostream& out);
int cmd_report(const std::filesystem::path& run_dir, std::ostream& out);

int run_guarded(const std::function<int()>& command, std::ostream& err);

}  // namespace rpf::cli
