#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cct/csv.hpp"
#include "cct/errors.hpp"

namespace cct {

inline constexpr const char* kVersion = "cct 0.1.0";

struct ReplicationRow {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::vector<double> values;
};

struct Aggregate {
  double mean = 0.0;
  double se = 0.0;
  std::size_t count = 0;
};

struct ExperimentReport {
  std::string version = kVersion;
  std::uint64_t master_seed = 0;
  std::string procedure;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<std::string> metrics;
  std::vector<ReplicationRow> rows;
  std::vector<Aggregate> aggregates;
};

/// Mean and standard error sd / sqrt(R) (sample sd; 0 when R = 1).
inline Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  a.count = values.size();
  if (values.empty()) return a;
  double sum = 0.0;
  for (double v : values) sum += v;
  a.mean = sum / static_cast<double>(a.count);
  if (a.count > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.se = std::sqrt(ss / static_cast<double>(a.count - 1)) / std::sqrt(static_cast<double>(a.count));
  }
  return a;
}

/// Recompute every aggregate from the per-replication rows.
inline void aggregate_rows(ExperimentReport& report) {
  report.aggregates.clear();
  for (std::size_t k = 0; k < report.metrics.size(); ++k) {
    std::vector<double> column;
    for (const auto& row : report.rows) column.push_back(row.values.at(k));
    report.aggregates.push_back(aggregate(column));
  }
}

namespace detail {

inline void check_schema(const ExperimentReport& report) {
  if (report.metrics.empty()) throw report_error("report has no metrics");
  if (report.aggregates.size() != report.metrics.size()) throw report_error("report aggregates do not match metrics");
  for (const auto& row : report.rows) {
    if (row.values.size() != report.metrics.size()) throw report_error("report row has the wrong number of values");
  }
}

}  // namespace detail

inline nlohmann::ordered_json report_to_json(const ExperimentReport& report) {
  detail::check_schema(report);
  nlohmann::ordered_json j;
  j["software"] = report.version;
  j["procedure"] = report.procedure;
  j["master_seed"] = report.master_seed;
  auto& cfg = j["config"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : report.config) cfg[k] = v;
  j["metrics"] = report.metrics;
  auto& reps = j["replications"] = nlohmann::ordered_json::array();
  for (const auto& row : report.rows) {
    nlohmann::ordered_json r;
    r["replication"] = row.index;
    r["seed"] = row.seed;
    auto& values = r["values"] = nlohmann::ordered_json::object();
    for (std::size_t k = 0; k < report.metrics.size(); ++k) values[report.metrics[k]] = row.values[k];
    reps.push_back(std::move(r));
  }
  auto& agg = j["aggregate"] = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < report.metrics.size(); ++k) {
    agg[report.metrics[k]] = {{"mean", report.aggregates[k].mean},
                              {"se", report.aggregates[k].se},
                              {"count", report.aggregates[k].count}};
  }
  return j;
}

/// Header `replication,seed,<metrics>`, one row per replication, then rows
/// labelled mean, se and count with an empty seed cell.
inline void write_report_csv(std::ostream& out, const ExperimentReport& report) {
  detail::check_schema(report);
  out << "replication,seed";
  for (const auto& name : report.metrics) out << ',' << name;
  out << '\n';
  for (const auto& row : report.rows) {
    out << row.index << ',' << row.seed;
    for (double v : row.values) out << ',' << detail::format_double(v);
    out << '\n';
  }
  auto block = [&](const char* label, auto field) {
    out << label << ',';
    for (const auto& a : report.aggregates) out << ',' << detail::format_double(static_cast<double>(field(a)));
    out << '\n';
  };
  block("mean", [](const Aggregate& a) { return a.mean; });
  block("se", [](const Aggregate& a) { return a.se; });
  block("count", [](const Aggregate& a) { return static_cast<double>(a.count); });
}

inline std::string render_report(const ExperimentReport& report, const std::string& format) {
  if (format == "json") return report_to_json(report).dump(2) + "\n";
  if (format == "csv") {
    std::ostringstream out;
    write_report_csv(out, report);
    return out.str();
  }
  throw argument_error("unknown report format '" + format + "'");
}

inline void emit_report(const ExperimentReport& report, const std::string& format, const std::string& path) {
  const std::string body = render_report(report, format);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error(path + ": cannot open for writing");
  out << body;
  if (!out) throw data_error(path + ": write failed");
}

}  // namespace cct
