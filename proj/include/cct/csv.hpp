#pragma once

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "cct/dataset.hpp"
#include "cct/errors.hpp"

namespace cct {

/// Column roles for load_csv. Empty `covariates` means every column that is
/// not a response.
struct CsvSchema {
  std::vector<std::string> covariates;
  std::vector<std::string> responses;
  char delimiter = ',';
};

namespace detail {

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  s = s.substr(first, last - first + 1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, delim)) out.push_back(trim(field));
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

inline bool parse_double(const std::string& text, double& value) {
  if (text.empty()) return false;
  char* end = nullptr;
  errno = 0;
  value = std::strtod(text.c_str(), &end);
  return end == text.c_str() + text.size() && errno != ERANGE;
}

inline std::size_t column_of(const std::vector<std::string>& header, const std::string& name,
                             const std::string& source) {
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k] == name) return k;
  }
  throw data_error(source + ": missing column '" + name + "'");
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

/// Read a header-first delimited file. Row order is preserved.
inline Dataset load_csv(std::istream& in, const CsvSchema& schema, const std::string& source = "csv") {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!detail::trim(line).empty()) {
      header = detail::split_fields(line, schema.delimiter);
      break;
    }
  }
  if (header.empty()) throw data_error(source + ": empty file");

  std::vector<std::size_t> resp_cols;
  for (const auto& name : schema.responses) resp_cols.push_back(detail::column_of(header, name, source));
  std::vector<std::size_t> cov_cols;
  std::vector<std::string> cov_names = schema.covariates;
  if (cov_names.empty()) {
    for (std::size_t k = 0; k < header.size(); ++k) {
      if (std::find(resp_cols.begin(), resp_cols.end(), k) == resp_cols.end()) cov_names.push_back(header[k]);
    }
  }
  for (const auto& name : cov_names) cov_cols.push_back(detail::column_of(header, name, source));

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line, schema.delimiter);
    if (fields.size() != header.size()) {
      throw data_error(source + ": line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                       " fields, expected " + std::to_string(header.size()));
    }
    std::vector<double> row(fields.size());
    auto parse = [&](std::size_t k) {
      if (!detail::parse_double(fields[k], row[k])) {
        throw data_error(source + ": non-numeric cell '" + fields[k] + "' at line " + std::to_string(line_no) +
                         ", column '" + header[k] + "'");
      }
    };
    for (std::size_t k : cov_cols) parse(k);
    for (std::size_t k : resp_cols) parse(k);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw data_error(source + ": no data rows");

  Dataset d;
  d.covariates.resize(static_cast<Index>(rows.size()), static_cast<Index>(cov_cols.size()));
  d.responses.resize(static_cast<Index>(rows.size()), static_cast<Index>(resp_cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < cov_cols.size(); ++k) d.covariates(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][cov_cols[k]];
    for (std::size_t k = 0; k < resp_cols.size(); ++k) d.responses(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][resp_cols[k]];
  }
  d.covariate_names = std::move(cov_names);
  d.response_names = schema.responses;
  return d;
}

inline Dataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw data_error(path + ": cannot open");
  return load_csv(in, schema, path);
}

/// Covariates, then responses, then any extra columns; 17 significant digits.
inline void write_csv(std::ostream& out, const Dataset& d,
                      const std::vector<std::pair<std::string, std::vector<double>>>& extra = {}) {
  std::vector<std::string> names = d.covariate_names;
  for (Index k = static_cast<Index>(names.size()); k < d.dim(); ++k) names.push_back("x" + std::to_string(k + 1));
  for (Index k = 0; k < d.responses.cols(); ++k) {
    names.push_back(static_cast<std::size_t>(k) < d.response_names.size() ? d.response_names[static_cast<std::size_t>(k)]
                                                                            : "y" + std::to_string(k + 1));
  }
  for (const auto& [name, values] : extra) {
    if (static_cast<Index>(values.size()) != d.rows()) throw argument_error("write_csv: extra column '" + name + "' has the wrong length");
    names.push_back(name);
  }
  for (std::size_t k = 0; k < names.size(); ++k) out << (k ? "," : "") << names[k];
  out << '\n';
  for (Index i = 0; i < d.rows(); ++i) {
    bool first = true;
    auto put = [&](double v) {
      out << (first ? "" : ",") << detail::format_double(v);
      first = false;
    };
    for (Index k = 0; k < d.dim(); ++k) put(d.covariates(i, k));
    for (Index k = 0; k < d.responses.cols(); ++k) put(d.responses(i, k));
    for (const auto& col : extra) put(col.second[static_cast<std::size_t>(i)]);
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const Dataset& d,
                      const std::vector<std::pair<std::string, std::vector<double>>>& extra = {}) {
  std::ofstream out(path);
  if (!out) throw data_error(path + ": cannot open for writing");
  write_csv(out, d, extra);
  if (!out) throw data_error(path + ": write failed");
}

}  // namespace cct
