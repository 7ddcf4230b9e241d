#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cct/config.hpp"
#include "cct/csv.hpp"
#include "cct/experiment.hpp"
#include "cct/report.hpp"

namespace {

constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

int run(const std::string& procedure, const std::string& config_path, const std::optional<std::uint64_t>& seed,
        const std::optional<std::string>& alpha, const std::optional<std::size_t>& reps,
        const std::optional<std::string>& output, const std::optional<std::size_t>& threads,
        const std::vector<std::string>& sets) {
  cct::ExperimentConfig config;
  try {
    cct::ConfigMap map = cct::load_config(config_path);
    if (const auto it = map.find("procedure"); it != map.end() && it->second.value != procedure) {
      throw cct::config_error(config_path + ":" + std::to_string(it->second.line) + ": field 'procedure' is '" +
                              it->second.value + "' but the command is '" + procedure + "'");
    }
    cct::apply_override(map, "procedure", procedure);
    if (seed) cct::apply_override(map, "seed", std::to_string(*seed));
    if (alpha) cct::apply_override(map, "alpha", *alpha);
    if (reps) cct::apply_override(map, "reps", std::to_string(*reps));
    if (output) cct::apply_override(map, "output", *output);
    if (threads) cct::apply_override(map, "threads", std::to_string(*threads));
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw cct::config_error("--set '" + s + "': expected key=value");
      cct::apply_override(map, s.substr(0, eq), s.substr(eq + 1));
    }
    if (const char* env = std::getenv("CCT_THREADS"); env && *env) cct::apply_override(map, "threads", env);
    config = cct::build_config(map);
  } catch (const cct::config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    if (config.procedure == cct::Procedure::simulate) {
      const auto table = cct::simulate(config);
      if (config.output.empty()) cct::write_csv(std::cout, table.data, table.extra);
      else cct::write_csv(config.output, table.data, table.extra);
      return 0;
    }
    const cct::ExperimentReport report = cct::run_experiment(config);
    if (config.output.empty()) std::cout << cct::render_report(report, config.format);
    else cct::emit_report(report, config.format, config.output);
  } catch (const cct::config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Localized conformal inference: outlier detection, label screening, selection, two-sample testing"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> alpha;
  std::optional<std::size_t> reps;
  std::optional<std::string> output;
  std::optional<std::size_t> threads;
  std::vector<std::string> sets;

  const char* commands[][2] = {{"outlier-detect", "Conditional outlier detection with FDR control"},
                               {"label-screen", "Conditional label screening with FWER control"},
                               {"select", "Balanced selection with PSER control"},
                               {"two-sample-test", "Two-sample conditional distribution test"},
                               {"simulate", "Write one generated scenario dataset as CSV"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "Key/value config file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Master seed");
    sub->add_option("--alpha", alpha, "Nominal level");
    sub->add_option("--reps", reps, "Number of replications");
    sub->add_option("--output", output, "Output path (stdout if omitted)");
    sub->add_option("--threads", threads, "Replication workers (CCT_THREADS overrides)");
    sub->add_option("--set", sets, "Extra key=value override, repeatable");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }
  const std::string procedure = app.get_subcommands().front()->get_name();
  return run(procedure, config_path, seed, alpha, reps, output, threads, sets);
}
