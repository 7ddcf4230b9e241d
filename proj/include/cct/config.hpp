#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "cct/csv.hpp"
#include "cct/errors.hpp"
#include "cct/kernel.hpp"
#include "cct/label_screening.hpp"
#include "cct/score_models.hpp"

namespace cct {

/// One `key = value` line; line 0 marks a command-line override.
struct ConfigEntry {
  std::string value;
  std::size_t line = 0;
};

using ConfigMap = std::map<std::string, ConfigEntry>;

/// Parse a flat key/value file. `#` starts a comment; blank lines are skipped.
inline ConfigMap parse_config(std::istream& in, const std::string& source = "config") {
  ConfigMap out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (detail::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw config_error(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    if (key.empty()) throw config_error(source + ":" + std::to_string(line_no) + ": empty key");
    if (const auto it = out.find(key); it != out.end()) {
      throw config_error(source + ":" + std::to_string(line_no) + ": key '" + key + "' already set on line " +
                         std::to_string(it->second.line));
    }
    out[key] = ConfigEntry{detail::trim(line.substr(eq + 1)), line_no};
  }
  return out;
}

inline ConfigMap load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error(path + ": cannot open config file");
  return parse_config(in, path);
}

enum class Procedure { outlier_detect, label_screen, select, two_sample_test, simulate };

inline Procedure parse_procedure(const std::string& name) {
  if (name == "outlier-detect") return Procedure::outlier_detect;
  if (name == "label-screen") return Procedure::label_screen;
  if (name == "select") return Procedure::select;
  if (name == "two-sample-test") return Procedure::two_sample_test;
  if (name == "simulate") return Procedure::simulate;
  throw config_error("field 'procedure': unknown procedure '" + name + "'");
}

inline std::string procedure_name(Procedure p) {
  switch (p) {
    case Procedure::outlier_detect: return "outlier-detect";
    case Procedure::label_screen: return "label-screen";
    case Procedure::select: return "select";
    case Procedure::two_sample_test: return "two-sample-test";
    case Procedure::simulate: return "simulate";
  }
  return "";
}

/// Conjunction of `column op value` clauses over named covariates.
struct Condition {
  struct Clause {
    std::string column;
    std::string op;
    double value = 0.0;
  };
  std::string name;
  std::string text;
  std::vector<Clause> clauses;
};

inline Condition parse_condition(const std::string& name, const std::string& text) {
  Condition c{name, text, {}};
  std::string clause;
  std::string normalized = text;
  std::replace(normalized.begin(), normalized.end(), '&', ',');
  std::istringstream in(normalized);
  while (std::getline(in, clause, ',')) {
    clause = detail::trim(clause);
    if (clause.empty()) continue;
    const auto pos = clause.find_first_of("<>=");
    if (pos == std::string::npos || pos == 0) {
      throw config_error("field 'condition." + name + "': cannot parse clause '" + clause + "'");
    }
    std::size_t end = pos + 1;
    if (end < clause.size() && clause[end] == '=') ++end;
    Condition::Clause cl{detail::trim(clause.substr(0, pos)), clause.substr(pos, end - pos), 0.0};
    if (cl.op == "=") cl.op = "==";
    if (!detail::parse_double(detail::trim(clause.substr(end)), cl.value)) {
      throw config_error("field 'condition." + name + "': bad number in '" + clause + "'");
    }
    c.clauses.push_back(std::move(cl));
  }
  if (c.clauses.empty()) throw config_error("field 'condition." + name + "': no clauses");
  return c;
}

/// Rule list: `>=a`, `<=a` or `in:v1|v2|...`, comma separated, one per
/// component (a single rule applies to all components).
inline std::vector<LabelRule> parse_rules(const std::string& text) {
  std::vector<LabelRule> rules;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = detail::trim(item);
    double v = 0.0;
    if (item.rfind(">=", 0) == 0 && detail::parse_double(detail::trim(item.substr(2)), v)) {
      rules.push_back(LabelRule::at_least(v));
    } else if (item.rfind("<=", 0) == 0 && detail::parse_double(detail::trim(item.substr(2)), v)) {
      rules.push_back(LabelRule::at_most(v));
    } else if (item.rfind("in:", 0) == 0) {
      std::vector<double> members;
      std::istringstream ms(item.substr(3));
      std::string m;
      while (std::getline(ms, m, '|')) {
        if (!detail::parse_double(detail::trim(m), v)) throw config_error("field 'rules': bad member '" + m + "'");
        members.push_back(v);
      }
      rules.push_back(LabelRule::member_of(std::move(members)));
    } else {
      throw config_error("field 'rules': cannot parse rule '" + item + "'");
    }
  }
  if (rules.empty()) throw config_error("field 'rules': empty rule list");
  return rules;
}

struct ExperimentConfig {
  Procedure procedure = Procedure::outlier_detect;
  std::string scenario = "a1";
  std::size_t n = 1000;
  std::size_t m = 500;
  bool n_given = false;
  std::string hypothesis = "null";
  bool shared_noise = true;

  double alpha = 0.1;
  std::size_t reps = 1;
  std::size_t first_rep = 0;
  std::uint64_t seed = 1;

  std::string kernel = "gaussian";
  double bandwidth = 0.0;  ///< 0 means auto
  std::string tie_rule = "inclusive";
  std::string score = "";  ///< empty picks the scenario default
  std::size_t knn_k = 0;
  double cqr_lo = 0.05;
  double cqr_hi = 0.95;
  double l2 = kLogisticDefaultL2;
  double split_ratio = 0.5;
  std::vector<std::string> weighting_columns;

  std::string rules;
  std::string response;
  std::vector<Condition> conditions;

  std::string data;
  std::string data1;
  std::string data2;
  std::vector<std::string> covariates;
  std::vector<std::string> responses;
  char delimiter = ',';
  std::string split_rule = "random";
  std::vector<double> tilt;

  double inject_fraction = 0.1;
  std::string inject_column;
  std::string inject_law = "normal";
  double inject_magnitude = 3.0;

  std::string output;
  std::string format = "json";
  std::size_t threads = 1;

  /// Keys as given (seed, threads and output excluded), in key order.
  std::vector<std::pair<std::string, std::string>> echo;
};

namespace detail {

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "procedure", "scenario",  "n",           "m",           "hypothesis",  "shared_noise", "alpha",
      "reps",      "first_rep", "seed",        "kernel",      "bandwidth",   "tie_rule",     "score",
      "knn_k",     "cqr_lo",    "cqr_hi",      "l2",          "split_ratio", "weighting_columns",
      "rules",     "response",  "data",        "data1",       "data2",       "covariates",   "responses",
      "delimiter", "split_rule", "tilt",       "inject.fraction", "inject.column", "inject.law",
      "inject.magnitude", "output", "format",  "threads"};
  return keys;
}

inline std::string where(const std::string& key, const ConfigEntry& e) {
  return e.line ? "line " + std::to_string(e.line) + ", field '" + key + "'" : "field '" + key + "'";
}

inline std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

}  // namespace detail

/// Validate a key/value map into a typed config. Messages name the line and
/// field of the offending entry.
inline ExperimentConfig build_config(const ConfigMap& map) {
  ExperimentConfig c;
  for (const auto& [key, entry] : map) {
    if (key.rfind("condition.", 0) == 0) continue;
    if (!detail::known_keys().contains(key)) throw config_error(detail::where(key, entry) + ": unknown key");
  }
  auto get = [&](const std::string& key) -> const ConfigEntry* {
    const auto it = map.find(key);
    return it == map.end() ? nullptr : &it->second;
  };
  auto real = [&](const std::string& key, double& out) {
    if (const auto* e = get(key)) {
      if (!detail::parse_double(e->value, out)) throw config_error(detail::where(key, *e) + ": expected a number");
    }
  };
  auto count = [&](const std::string& key, auto& out) {
    if (const auto* e = get(key)) {
      char* end = nullptr;
      const auto v = std::strtoull(e->value.c_str(), &end, 10);
      if (e->value.empty() || *end != '\0' || e->value[0] == '-') {
        throw config_error(detail::where(key, *e) + ": expected a nonnegative integer");
      }
      out = static_cast<std::remove_reference_t<decltype(out)>>(v);
    }
  };
  auto text = [&](const std::string& key, std::string& out) {
    if (const auto* e = get(key)) out = e->value;
  };
  auto choice = [&](const std::string& key, std::string& out, std::initializer_list<const char*> allowed) {
    text(key, out);
    for (const char* a : allowed) {
      if (out == a) return;
    }
    const auto* e = get(key);
    throw config_error((e ? detail::where(key, *e) : "field '" + key + "'") + ": invalid value '" + out + "'");
  };

  const auto* proc = get("procedure");
  if (!proc) throw config_error("field 'procedure': required");
  try {
    c.procedure = parse_procedure(proc->value);
  } catch (const config_error&) {
    throw config_error(detail::where("procedure", *proc) + ": unknown procedure '" + proc->value + "'");
  }
  choice("scenario", c.scenario, {"a1", "b1", "a2", "a3", "b3", "c3", "csv"});
  count("n", c.n);
  c.n_given = get("n") != nullptr;
  count("m", c.m);
  choice("hypothesis", c.hypothesis, {"null", "alt"});
  if (const auto* e = get("shared_noise")) {
    if (e->value != "true" && e->value != "false") throw config_error(detail::where("shared_noise", *e) + ": expected true or false");
    c.shared_noise = e->value == "true";
  }
  real("alpha", c.alpha);
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) {
    const auto* e = get("alpha");
    throw config_error((e ? detail::where("alpha", *e) : std::string("field 'alpha'")) + ": must lie in (0, 1)");
  }
  count("reps", c.reps);
  if (c.reps < 1) throw config_error(detail::where("reps", *get("reps")) + ": must be at least 1");
  count("first_rep", c.first_rep);
  count("seed", c.seed);
  choice("kernel", c.kernel, {"gaussian", "box"});
  if (const auto* e = get("bandwidth"); e && e->value != "auto") {
    real("bandwidth", c.bandwidth);
    if (!(c.bandwidth > 0.0)) throw config_error(detail::where("bandwidth", *e) + ": must be positive or 'auto'");
  }
  choice("tie_rule", c.tie_rule, {"inclusive", "randomized"});
  if (get("score")) choice("score", c.score, {"linear", "knn-cqr", "knn-one-class"});
  count("knn_k", c.knn_k);
  real("cqr_lo", c.cqr_lo);
  real("cqr_hi", c.cqr_hi);
  if (!(0.0 <= c.cqr_lo && c.cqr_lo < c.cqr_hi && c.cqr_hi <= 1.0)) {
    throw config_error("field 'cqr_lo'/'cqr_hi': need 0 <= cqr_lo < cqr_hi <= 1");
  }
  real("l2", c.l2);
  if (c.l2 < 0.0) throw config_error(detail::where("l2", *get("l2")) + ": must be nonnegative");
  real("split_ratio", c.split_ratio);
  if (!(c.split_ratio > 0.0 && c.split_ratio < 1.0)) {
    throw config_error("field 'split_ratio': must lie in (0, 1)");
  }
  if (const auto* e = get("weighting_columns")) c.weighting_columns = detail::split_list(e->value);
  text("rules", c.rules);
  if (!c.rules.empty()) {
    try {
      parse_rules(c.rules);
    } catch (const config_error& err) {
      throw config_error(detail::where("rules", *get("rules")) + ": " + err.what());
    }
  }
  text("response", c.response);
  for (const auto& [key, entry] : map) {
    if (key.rfind("condition.", 0) != 0) continue;
    const std::string name = key.substr(10);
    if (name.empty()) throw config_error(detail::where(key, entry) + ": condition needs a name");
    try {
      c.conditions.push_back(parse_condition(name, entry.value));
    } catch (const config_error& err) {
      throw config_error(detail::where(key, entry) + ": " + err.what());
    }
  }
  text("data", c.data);
  text("data1", c.data1);
  text("data2", c.data2);
  if (const auto* e = get("covariates")) c.covariates = detail::split_list(e->value);
  if (const auto* e = get("responses")) c.responses = detail::split_list(e->value);
  if (const auto* e = get("delimiter")) {
    if (e->value == "tab" || e->value == "\\t") c.delimiter = '\t';
    else if (e->value.size() == 1) c.delimiter = e->value[0];
    else throw config_error(detail::where("delimiter", *e) + ": expected one character or 'tab'");
  }
  choice("split_rule", c.split_rule, {"random", "tilt", "response"});
  if (const auto* e = get("tilt")) {
    for (const auto& item : detail::split_list(e->value)) {
      double v = 0.0;
      if (!detail::parse_double(item, v)) throw config_error(detail::where("tilt", *e) + ": bad number '" + item + "'");
      c.tilt.push_back(v);
    }
  }
  real("inject.fraction", c.inject_fraction);
  if (!(c.inject_fraction >= 0.0 && c.inject_fraction <= 1.0)) {
    throw config_error("field 'inject.fraction': must lie in [0, 1]");
  }
  text("inject.column", c.inject_column);
  choice("inject.law", c.inject_law, {"normal", "rademacher", "uniform"});
  real("inject.magnitude", c.inject_magnitude);
  text("output", c.output);
  choice("format", c.format, {"json", "csv"});
  count("threads", c.threads);
  if (c.threads < 1) c.threads = 1;

  if (c.scenario == "csv") {
    const bool two = c.procedure == Procedure::two_sample_test;
    if (c.data.empty() && !(two && !c.data1.empty() && !c.data2.empty())) {
      throw config_error("field 'data': scenario=csv needs a data path (or data1 and data2 for two-sample-test)");
    }
    if (c.procedure == Procedure::simulate) throw config_error("field 'scenario': simulate needs a generated scenario");
  }

  for (const auto& [key, entry] : map) {
    if (key == "seed" || key == "threads" || key == "output") continue;
    c.echo.emplace_back(key, entry.value);
  }
  return c;
}

/// Apply `key=value` overrides (line 0) on top of a parsed file.
inline void apply_override(ConfigMap& map, const std::string& key, const std::string& value) {
  map[key] = ConfigEntry{value, 0};
}

}  // namespace cct
