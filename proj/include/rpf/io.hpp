#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "rpf/harness.hpp"

namespace rpf::io {

// Shortest text that round-trips the double exactly ("%.17g").
std::string format_number(double value);

// "mean ± std" with two decimals, as in the metrics table.
std::string format_summary(const harness::Summary& summary);

// Writes to a sibling temporary file and renames it over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

// Measurement log columns, in order.
inline constexpr const char* kMeasurementHeader = "k,sensor_id,kind,link,value,faulty";

std::string measurement_log_csv(const harness::MeasurementLog& log);

// Parses a measurement log. Rows are grouped by k into a log with
// horizon + 1 entries; malformed rows raise DataError naming the line.
harness::MeasurementLog parse_measurement_log(std::istream& in, std::size_t horizon, std::size_t links,
                                              const std::string& source);
harness::MeasurementLog read_measurement_log(const std::filesystem::path& path, std::size_t horizon,
                                             std::size_t links);

// Links x timesteps: header "link,0,1,...,K", then one row per link.
std::string trajectory_csv(const std::vector<StateVector>& states);

inline constexpr const char* kDecisionHeader = "k,sensor_id,test,statistic,threshold,rejected,auxiliary,faulty";

std::string decisions_csv(const std::vector<harness::DecisionRecord>& decisions);

// Rows of (variant, metric) with one "mean ± std" cell per alpha. Baseline
// rows do not depend on alpha and repeat the same cell in every column.
std::string metrics_table_csv(const harness::MetricsReport& report);

// One row per run at full precision.
std::string runs_csv(const harness::MetricsReport& report);

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Table parse_table(std::string_view text, const std::string& source);

// Column-aligned rendering of a metrics table, grouped by variant.
std::string render_metrics_table(const Table& table);

}  // namespace rpf::io
