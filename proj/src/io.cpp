#include "rpf/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>
#include <sstream>

#include "rpf/errors.hpp"

namespace rpf::io {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split(std::string_view line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(line.substr(start));
      return out;
    }
    out.emplace_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

std::size_t parse_index(const std::string& text, const std::string& where) {
  std::size_t used = 0;
  unsigned long long value = 0;
  try {
    if (text.empty() || text.front() == '-' || text.front() == '+') throw std::invalid_argument("sign");
    value = std::stoull(text, &used);
  } catch (const std::exception&) {
    throw DataError(where + ": expected a non-negative integer, got '" + text + "'");
  }
  if (used != text.size()) throw DataError(where + ": expected a non-negative integer, got '" + text + "'");
  return static_cast<std::size_t>(value);
}

double parse_double(const std::string& text, const std::string& where) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    throw DataError(where + ": expected a number, got '" + text + "'");
  }
  if (used != text.size()) throw DataError(where + ": expected a number, got '" + text + "'");
  return value;
}

bool parse_flag(const std::string& text, const std::string& where) {
  if (text == "0") return false;
  if (text == "1") return true;
  throw DataError(where + ": expected 0 or 1, got '" + text + "'");
}

std::string alpha_label(double alpha) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "alpha=%g", alpha);
  return buf;
}

const harness::SummaryRow* find_row(const harness::MetricsReport& report, const std::string& variant,
                                    double alpha) {
  for (const auto& row : report.summary) {
    if (row.variant == variant && row.alpha == alpha) return &row;
  }
  return nullptr;
}

bool is_baseline(const std::string& variant) {
  return variant == harness::kFaultFree || variant == harness::kUngated;
}

}  // namespace

std::string format_number(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

std::string format_summary(const harness::Summary& summary) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f \xC2\xB1 %.2f", summary.mean, summary.std);
  return buf;
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw DataError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string measurement_log_csv(const harness::MeasurementLog& log) {
  std::string out = kMeasurementHeader;
  out += '\n';
  for (const auto& step : log) {
    for (const auto& m : step) {
      out += std::to_string(m.k);
      out += ',';
      out += m.sensor_id;
      out += ',';
      out += sensing::to_string(m.kind);
      out += ',';
      out += std::to_string(m.link);
      out += ',';
      out += format_number(m.value);
      out += ',';
      out += m.faulty ? '1' : '0';
      out += '\n';
    }
  }
  return out;
}

harness::MeasurementLog parse_measurement_log(std::istream& in, std::size_t horizon, std::size_t links,
                                              const std::string& source) {
  harness::MeasurementLog log(horizon + 1);
  std::string raw;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = strip_cr(raw);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (!saw_header) {
      if (line != kMeasurementHeader) {
        throw DataError(where + ": expected header '" + std::string(kMeasurementHeader) + "'");
      }
      saw_header = true;
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != 6) {
      throw DataError(where + ": expected 6 columns, got " + std::to_string(cells.size()));
    }
    sensing::LabeledMeasurement m;
    m.k = parse_index(cells[0], where + " column k");
    if (cells[1].empty()) throw DataError(where + " column sensor_id: empty");
    m.sensor_id = cells[1];
    try {
      m.kind = sensing::parse_measurement_kind(cells[2]);
    } catch (const std::exception&) {
      throw DataError(where + " column kind: unknown kind '" + cells[2] + "'");
    }
    m.link = parse_index(cells[3], where + " column link");
    m.value = parse_double(cells[4], where + " column value");
    m.faulty = parse_flag(cells[5], where + " column faulty");
    if (m.k > horizon) {
      throw DataError(where + ": k = " + std::to_string(m.k) + " exceeds the horizon " + std::to_string(horizon));
    }
    if (m.link >= links) throw DataError(where + ": link " + std::to_string(m.link) + " out of range");
    log[m.k].push_back(std::move(m));
  }
  if (!saw_header) throw DataError(source + ": empty measurement log");
  return log;
}

harness::MeasurementLog read_measurement_log(const fs::path& path, std::size_t horizon, std::size_t links) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open measurement log " + path.string());
  return parse_measurement_log(in, horizon, links, path.string());
}

std::string trajectory_csv(const std::vector<StateVector>& states) {
  std::string out = "link";
  for (std::size_t k = 0; k < states.size(); ++k) out += "," + std::to_string(k);
  out += '\n';
  const std::size_t links = states.empty() ? 0 : states.front().size();
  for (std::size_t l = 0; l < links; ++l) {
    out += std::to_string(l);
    for (const auto& state : states) {
      if (state.size() != links) throw DataError("trajectory has rows of different lengths");
      out += ',';
      out += format_number(state[l]);
    }
    out += '\n';
  }
  return out;
}

std::string decisions_csv(const std::vector<harness::DecisionRecord>& decisions) {
  std::string out = kDecisionHeader;
  out += '\n';
  for (const auto& d : decisions) {
    out += std::to_string(d.k);
    out += ',';
    out += d.decision.sensor_id;
    out += ',';
    out += to_string(d.decision.test_kind);
    out += ',';
    out += format_number(d.decision.statistic);
    out += ',';
    out += format_number(d.decision.threshold);
    out += ',';
    out += d.decision.rejected_h0 ? '1' : '0';
    out += ',';
    out += format_number(d.decision.auxiliary);
    out += ',';
    out += d.faulty ? '1' : '0';
    out += '\n';
  }
  return out;
}

std::string metrics_table_csv(const harness::MetricsReport& report) {
  std::string out = "variant,metric";
  for (double alpha : report.alphas) out += "," + alpha_label(alpha);
  out += '\n';
  for (const auto& variant : report.variants) {
    for (int metric = 0; metric < 6; ++metric) {
      out += variant;
      out += ',';
      out += harness::kMetricNames[metric];
      for (double alpha : report.alphas) {
        const auto* row = find_row(report, variant, is_baseline(variant) ? 0.0 : alpha);
        if (row == nullptr) throw DataError("metrics report has no summary for " + variant);
        out += ',';
        out += format_summary(row->metrics[metric]);
      }
      out += '\n';
    }
  }
  return out;
}

std::string runs_csv(const harness::MetricsReport& report) {
  std::string out =
      "variant,alpha,seed,tp,fp,tn,fn,labeling_error,mape,zero_faults,zero_faults_rejected,random_faults,"
      "random_faults_rejected,collapsed\n";
  for (const auto& r : report.runs) {
    out += r.variant + "," + format_number(r.alpha) + "," + std::to_string(r.seed) + ",";
    out += std::to_string(r.confusion.tp) + "," + std::to_string(r.confusion.fp) + ",";
    out += std::to_string(r.confusion.tn) + "," + std::to_string(r.confusion.fn) + ",";
    out += format_number(r.labeling_error) + "," + format_number(r.mape) + ",";
    out += std::to_string(r.zero_faults) + "," + std::to_string(r.zero_faults_rejected) + ",";
    out += std::to_string(r.random_faults) + "," + std::to_string(r.random_faults_rejected) + ",";
    out += r.collapsed ? "1\n" : "0\n";
  }
  return out;
}

Table parse_table(std::string_view text, const std::string& source) {
  Table table;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const auto line = strip_cr(text.substr(start, end - start));
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    auto cells = split(line, ',');
    if (table.header.empty()) {
      table.header = std::move(cells);
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw DataError(source + ":" + std::to_string(line_no) + ": expected " + std::to_string(table.header.size()) +
                      " columns, got " + std::to_string(cells.size()));
    }
    table.rows.push_back(std::move(cells));
  }
  if (table.header.empty()) throw DataError(source + ": empty table");
  return table;
}

std::string render_metrics_table(const Table& table) {
  if (table.header.size() < 3 || table.header[0] != "variant" || table.header[1] != "metric") {
    throw DataError("metrics table: unexpected header");
  }
  // "±" is two bytes but one column wide.
  auto width = [](const std::string& s) {
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
  };
  std::vector<std::size_t> widths(table.header.size() - 1, 0);
  widths[0] = width(table.header[1]);
  for (std::size_t c = 2; c < table.header.size(); ++c) widths[c - 1] = width(table.header[c]);
  for (const auto& row : table.rows) {
    for (std::size_t c = 1; c < row.size(); ++c) widths[c - 1] = std::max(widths[c - 1], width(row[c]));
  }
  auto pad = [&](const std::string& s, std::size_t w, bool left) {
    const std::string fill(w - std::min(w, width(s)), ' ');
    return left ? s + fill : fill + s;
  };
  auto render_line = [&](const std::vector<std::string>& cells) {
    std::string line = "  " + pad(cells[1], widths[0], true);
    for (std::size_t c = 2; c < cells.size(); ++c) line += "  " + pad(cells[c], widths[c - 1], false);
    return line + "\n";
  };

  std::string out;
  std::string current;
  for (const auto& row : table.rows) {
    if (row[0] != current) {
      if (!current.empty()) out += '\n';
      current = row[0];
      out += current + "\n";
      out += render_line(table.header);
    }
    out += render_line(row);
  }
  return out;
}

}  // namespace rpf::io
