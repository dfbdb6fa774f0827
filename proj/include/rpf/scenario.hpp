#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "rpf/harness.hpp"

namespace rpf::scenario {

// A scenario file resolved into an experiment plus run-level settings that do
// not affect results.
struct Scenario {
  harness::ExperimentConfig experiment;
  std::string output_dir = "out";
};

// Parses and validates a scenario document. Errors are ConfigError with the
// offending field path, e.g. "network.links[3].length: must be positive".
Scenario parse_scenario(const nlohmann::json& document);
Scenario load_scenario(const std::filesystem::path& path);

// Fully resolved configuration: every value that affects results and nothing
// else. Key order is canonical, so dump() is stable.
nlohmann::json resolved_json(const harness::ExperimentConfig& config);

// FNV-1a 64-bit hash of the compact dump, as 16 lowercase hex digits.
std::string hash_text(const std::string& text);
std::string config_hash(const harness::ExperimentConfig& config);

}  // namespace rpf::scenario
