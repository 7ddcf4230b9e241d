#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "cct/config.hpp"
#include "cct/csv.hpp"
#include "cct/data_selection.hpp"
#include "cct/label_screening.hpp"
#include "cct/outlier_detection.hpp"
#include "cct/random.hpp"
#include "cct/report.hpp"
#include "cct/scenarios.hpp"
#include "cct/two_sample.hpp"

namespace cct {

/// A replication failed; carries its index and sub-seed so the run can be
/// resumed from that replication.
class replication_error : public std::runtime_error {
 public:
  replication_error(std::size_t index, std::uint64_t seed, const std::string& what)
      : std::runtime_error("replication " + std::to_string(index) + " (sub-seed " + std::to_string(seed) +
                           ") failed: " + what),
        index_(index),
        seed_(seed) {}
  std::size_t index() const noexcept { return index_; }
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::size_t index_;
  std::uint64_t seed_;
};

/// Immutable state shared by all replication workers.
struct ExperimentContext {
  ExperimentConfig config;
  std::optional<Dataset> data;
  std::optional<Dataset> data1;
  std::optional<Dataset> data2;
  std::vector<std::string> metrics;
};

namespace detail {

inline Index column_index(const std::vector<std::string>& names, const std::string& name, const std::string& field) {
  for (std::size_t k = 0; k < names.size(); ++k) {
    if (names[k] == name) return static_cast<Index>(k);
  }
  throw config_error("field '" + field + "': unknown column '" + name + "'");
}

inline std::vector<Index> weighting_indices(const ExperimentConfig& c, const Dataset& d,
                                            const std::vector<Index>& fallback) {
  if (c.weighting_columns.empty()) return fallback;
  std::vector<Index> out;
  for (const auto& name : c.weighting_columns) out.push_back(column_index(d.covariate_names, name, "weighting_columns"));
  return out;
}

inline CovariatePredicate predicate_for(const Condition& cond, const std::vector<std::string>& names) {
  std::vector<std::pair<Index, Condition::Clause>> clauses;
  for (const auto& cl : cond.clauses) clauses.emplace_back(column_index(names, cl.column, "condition." + cond.name), cl);
  return [clauses](VectorRef x) {
    for (const auto& [k, cl] : clauses) {
      const double v = x(k);
      bool ok = false;
      if (cl.op == "<") ok = v < cl.value;
      else if (cl.op == "<=") ok = v <= cl.value;
      else if (cl.op == ">") ok = v > cl.value;
      else if (cl.op == ">=") ok = v >= cl.value;
      else if (cl.op == "==") ok = v == cl.value;
      if (!ok) return false;
    }
    return true;
  };
}

inline KernelFamily kernel_family(const ExperimentConfig& c) {
  return c.kernel == "box" ? KernelFamily::box : KernelFamily::gaussian;
}

inline CsvSchema schema_of(const ExperimentConfig& c) { return CsvSchema{c.covariates, c.responses, c.delimiter}; }

/// Random labeled / test partition of a CSV dataset.
inline std::pair<Dataset, Dataset> partition(const Dataset& d, const ExperimentConfig& c, RandomStream& rng) {
  const auto rows = static_cast<std::size_t>(d.rows());
  const std::size_t m = c.m;
  const std::size_t n = c.n_given ? c.n : (rows > m ? rows - m : 0);
  if (n < 2 || m < 1 || n + m > rows) {
    throw config_error("fields 'n'/'m': need n >= 2, m >= 1 and n + m <= " + std::to_string(rows) + " data rows");
  }
  const auto perm = rng.permutation(rows);
  const std::vector<std::size_t> a(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n));
  const std::vector<std::size_t> b(perm.begin() + static_cast<std::ptrdiff_t>(n),
                                   perm.begin() + static_cast<std::ptrdiff_t>(n + m));
  return {d.subset(a), d.subset(b)};
}

/// Adds magnitude * draw to the injection column of round(fraction * m) rows.
inline std::vector<bool> inject_outliers(Dataset& test, const ExperimentConfig& c, RandomStream& rng) {
  const auto m = static_cast<std::size_t>(test.rows());
  auto flags = exact_outlier_flags(m, c.inject_fraction, rng);
  bool response = test.labeled();
  Index col = 0;
  if (!c.inject_column.empty()) {
    const auto& rn = test.response_names;
    const auto it = std::find(rn.begin(), rn.end(), c.inject_column);
    response = it != rn.end();
    col = response ? static_cast<Index>(it - rn.begin()) : column_index(test.covariate_names, c.inject_column, "inject.column");
  }
  for (std::size_t i = 0; i < m; ++i) {
    if (!flags[i]) continue;
    double draw = 0.0;
    if (c.inject_law == "normal") draw = rng.normal();
    else if (c.inject_law == "rademacher") draw = rademacher(rng);
    else draw = uniform(rng, -1.0, 1.0);
    double& cell = response ? test.responses(static_cast<Index>(i), col) : test.covariates(static_cast<Index>(i), col);
    cell += c.inject_magnitude * draw;
  }
  return flags;
}

inline OutlierScoreSpec score_spec(const ExperimentConfig& c, bool labeled) {
  OutlierScoreSpec s;
  std::string name = c.score.empty() ? (labeled ? "knn-cqr" : "knn-one-class") : c.score;
  s.kind = name == "linear" ? OutlierScoreKind::linear_residual
           : name == "knn-cqr" ? OutlierScoreKind::knn_cqr
                               : OutlierScoreKind::knn_one_class;
  s.k = c.knn_k;
  s.lo = c.cqr_lo;
  s.hi = c.cqr_hi;
  return s;
}

inline std::vector<LabelRule> rules_of(const ExperimentConfig& c) {
  if (!c.rules.empty()) return parse_rules(c.rules);
  if (c.scenario == "a2") return {LabelRule::at_least(kA2Thresholds[0]), LabelRule::at_least(kA2Thresholds[1])};
  throw config_error("field 'rules': required for scenario '" + c.scenario + "'");
}

inline double fraction_true(const std::vector<std::vector<bool>>& d) {
  std::size_t hit = 0, total = 0;
  for (const auto& row : d) {
    for (bool b : row) hit += b ? 1 : 0;
    total += row.size();
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

inline double fraction_true(const std::vector<bool>& d) {
  const auto hit = static_cast<std::size_t>(std::count(d.begin(), d.end(), true));
  return d.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(d.size());
}

inline std::vector<double> run_outlier(const ExperimentContext& ctx, RandomStream& rng) {
  const auto& c = ctx.config;
  Dataset clean, test;
  std::vector<bool> truth;
  std::vector<Index> fallback;
  if (c.scenario == "a1" || c.scenario == "b1") {
    const bool a1 = c.scenario == "a1";
    GeneratedSample g1 = a1 ? gen_a1(c.n, false, rng) : gen_b1(c.n, false, rng);
    GeneratedSample g2 = a1 ? gen_a1(c.m, true, rng) : gen_b1(c.m, true, rng);
    clean = std::move(g1.data);
    test = std::move(g2.data);
    truth = std::move(g2.is_outlier);
    fallback = g1.weighting_columns;
  } else if (c.scenario == "csv") {
    std::tie(clean, test) = partition(*ctx.data, c, rng);
    truth = inject_outliers(test, c, rng);
  } else {
    throw config_error("field 'scenario': outlier-detect supports a1, b1 or csv");
  }
  OutlierDetectionConfig oc;
  oc.alpha = c.alpha;
  oc.kernel = kernel_family(c);
  oc.bandwidth = c.bandwidth;
  oc.weighting_columns = weighting_indices(c, clean, fallback);
  oc.score = score_spec(c, clean.labeled());
  oc.split_ratio = c.split_ratio;
  oc.tie_rule = c.tie_rule == "randomized" ? TieRule::randomized : TieRule::inclusive;
  const OutlierScores s = prepare_outlier_scores(clean, test, oc, rng);
  const OutlierRun run =
      detect_outliers_from_scores(s.calibration, s.test_weighting, s.test_scores, oc.alpha, s.kernel, rng, oc.tie_rule);
  const auto q = fdp_and_power(run, truth);
  const auto cp = fdp_and_power(conformal_bh(s.calibration.scores(), s.test_scores, oc.alpha), truth);
  return {q.fdp, q.power, static_cast<double>(run.final_set.size()), cp.fdp, cp.power};
}

inline std::pair<Dataset, Dataset> labeled_and_test(const ExperimentContext& ctx, RandomStream& rng,
                                                    std::vector<Index>& fallback) {
  const auto& c = ctx.config;
  if (c.scenario == "a2") {
    GeneratedSample g1 = gen_a2(c.n, rng, c.shared_noise);
    GeneratedSample g2 = gen_a2(c.m, rng, c.shared_noise);
    fallback = g1.weighting_columns;
    return {std::move(g1.data), std::move(g2.data)};
  }
  if (c.scenario == "a1") {
    GeneratedSample g1 = gen_a1(c.n, false, rng);
    GeneratedSample g2 = gen_a1(c.m, false, rng);
    fallback = g1.weighting_columns;
    return {std::move(g1.data), std::move(g2.data)};
  }
  if (c.scenario == "csv") {
    auto parts = partition(*ctx.data, c, rng);
    fallback = resolve_columns({}, parts.first.dim());
    return parts;
  }
  throw config_error("field 'scenario': " + procedure_name(c.procedure) + " supports a1, a2 or csv");
}

inline std::vector<std::vector<double>> response_rows(const Dataset& d) {
  return MultiLabelDataset::from_dataset(d).responses();
}

inline std::vector<double> run_screen(const ExperimentContext& ctx, RandomStream& rng) {
  const auto& c = ctx.config;
  std::vector<Index> fallback;
  auto [labeled, test] = labeled_and_test(ctx, rng, fallback);
  if (!labeled.labeled()) throw config_error("field 'responses': label-screen needs response columns");
  ScreeningConfig sc;
  sc.alpha = c.alpha;
  sc.kernel = kernel_family(c);
  sc.bandwidth = c.bandwidth;
  sc.weighting_columns = weighting_indices(c, labeled, fallback);
  sc.rules = rules_of(c);
  sc.l2 = c.l2;
  sc.split_ratio = c.split_ratio;
  const ScreeningScores s = prepare_screening(MultiLabelDataset::from_dataset(labeled), test.covariates, sc, rng);
  const ScreeningResult lcp = screen_from_scores(s.calibration, s.test_weighting, s.test_scores, sc.alpha, s.kernel, rng);
  const ScreeningResult thr = threshold_screen(s.calibration.scores(), s.test_scores, lcp.xi, sc.alpha);
  const auto truth = response_rows(test);
  std::vector<double> out = {fwer_metrics(lcp, test.covariates, truth, sc.rules),
                             fwer_metrics(thr, test.covariates, truth, sc.rules), fraction_true(lcp.decisions),
                             fraction_true(thr.decisions)};
  for (const auto& cond : c.conditions) {
    const auto pred = predicate_for(cond, test.covariate_names);
    out.push_back(fwer_metrics(lcp, test.covariates, truth, sc.rules, pred));
    out.push_back(fwer_metrics(thr, test.covariates, truth, sc.rules, pred));
  }
  return out;
}

inline std::vector<double> run_select(const ExperimentContext& ctx, RandomStream& rng) {
  const auto& c = ctx.config;
  std::vector<Index> fallback;
  auto [labeled, test] = labeled_and_test(ctx, rng, fallback);
  if (!labeled.labeled()) throw config_error("field 'responses': select needs a response column");
  SelectionConfig sc;
  sc.alpha = c.alpha;
  sc.kernel = kernel_family(c);
  sc.bandwidth = c.bandwidth;
  sc.weighting_columns = weighting_indices(c, labeled, fallback);
  sc.response_column = c.response.empty() ? 0 : column_index(labeled.response_names, c.response, "response");
  const auto rules = rules_of(c);
  sc.rule = rule_for(rules, static_cast<std::size_t>(sc.response_column));
  sc.l2 = c.l2;
  sc.split_ratio = c.split_ratio;
  const SelectionScores s = prepare_selection(labeled, test.covariates, sc, rng);
  const SelectionResult lcp = select_from_scores(s.violating_calibration, s.test_weighting, s.test_scores, sc.alpha, s.kernel, rng);
  const SelectionResult thr = threshold_select(s.violating_calibration.scores(), s.test_scores, lcp.xi, sc.alpha);
  const auto truth = test.response(sc.response_column);
  std::vector<double> out = {pser_metrics(lcp, test.covariates, truth, sc.rule),
                             pser_metrics(thr, test.covariates, truth, sc.rule), fraction_true(lcp.selected),
                             fraction_true(thr.selected)};
  for (const auto& cond : c.conditions) {
    const auto pred = predicate_for(cond, test.covariate_names);
    out.push_back(pser_metrics(lcp, test.covariates, truth, sc.rule, pred));
    out.push_back(pser_metrics(thr, test.covariates, truth, sc.rule, pred));
  }
  return out;
}

inline SplitRule split_rule_of(const std::string& name) {
  return name == "tilt" ? SplitRule::tilt : name == "response" ? SplitRule::response : SplitRule::random;
}

inline TwoSamples two_samples(const ExperimentContext& ctx, RandomStream& rng) {
  const auto& c = ctx.config;
  const Hypothesis h = c.hypothesis == "alt" ? Hypothesis::alternative : Hypothesis::null;
  if (c.scenario == "a3") return gen_a3(c.n, c.m, h, rng);
  if (c.scenario == "b3") return gen_b3(c.n, c.m, h, rng);
  if (c.scenario == "c3") return gen_c3(c.n, c.m, h, rng);
  if (c.scenario == "csv") {
    if (ctx.data1 && ctx.data2) return TwoSamples{*ctx.data1, *ctx.data2};
    const auto& tilt = c.tilt.empty() ? kDefaultTilt : c.tilt;
    return split_rules(*ctx.data, split_rule_of(c.split_rule), rng, tilt);
  }
  throw config_error("field 'scenario': two-sample-test supports a3, b3, c3 or csv");
}

inline std::vector<double> run_two_sample(const ExperimentContext& ctx, RandomStream& rng) {
  const auto& c = ctx.config;
  const TwoSamples samples = two_samples(ctx, rng);
  TwoSampleConfig tc;
  tc.alpha = c.alpha;
  tc.kernel = kernel_family(c);
  tc.bandwidth = c.bandwidth;
  tc.l2 = c.l2;
  tc.split_ratio = c.split_ratio;
  const TwoSampleResult r = conditional_two_sample_test(samples.first, samples.second, tc, rng);
  return {r.reject ? 1.0 : 0.0, r.t_hat, r.p_value, r.sigma_sq_hat};
}

}  // namespace detail

/// Load CSV inputs and fix the metric names.
inline ExperimentContext make_context(const ExperimentConfig& config) {
  ExperimentContext ctx{config, {}, {}, {}, {}};
  const auto& c = ctx.config;
  if (c.procedure == Procedure::simulate) throw config_error("field 'procedure': simulate does not produce a report");
  if (c.scenario == "csv") {
    const CsvSchema schema = detail::schema_of(c);
    if (!c.data.empty()) ctx.data = load_csv(c.data, schema);
    if (!c.data1.empty()) ctx.data1 = load_csv(c.data1, schema);
    if (!c.data2.empty()) ctx.data2 = load_csv(c.data2, schema);
  }
  const bool conditional = c.procedure == Procedure::label_screen || c.procedure == Procedure::select;
  if (!c.conditions.empty() && !conditional) {
    throw config_error("field 'condition." + c.conditions.front().name + "': conditions apply to label-screen and select only");
  }
  switch (c.procedure) {
    case Procedure::outlier_detect: ctx.metrics = {"fdp", "power", "rejections", "cp_fdp", "cp_power"}; break;
    case Procedure::label_screen:
      ctx.metrics = {"mfwer", "thr_mfwer", "retained", "thr_retained"};
      for (const auto& cond : c.conditions) {
        ctx.metrics.push_back("cfwer." + cond.name);
        ctx.metrics.push_back("thr_cfwer." + cond.name);
      }
      break;
    case Procedure::select:
      ctx.metrics = {"pser", "thr_pser", "selected", "thr_selected"};
      for (const auto& cond : c.conditions) {
        ctx.metrics.push_back("pser." + cond.name);
        ctx.metrics.push_back("thr_pser." + cond.name);
      }
      break;
    case Procedure::two_sample_test: ctx.metrics = {"reject", "t_hat", "p_value", "sigma_sq_hat"}; break;
    case Procedure::simulate: break;
  }
  return ctx;
}

/// One replication driven by the stream seeded with derive_seed(seed, index).
inline std::vector<double> run_replication(const ExperimentContext& ctx, RandomStream& rng) {
  switch (ctx.config.procedure) {
    case Procedure::outlier_detect: return detail::run_outlier(ctx, rng);
    case Procedure::label_screen: return detail::run_screen(ctx, rng);
    case Procedure::select: return detail::run_select(ctx, rng);
    case Procedure::two_sample_test: return detail::run_two_sample(ctx, rng);
    case Procedure::simulate: break;
  }
  throw config_error("field 'procedure': simulate does not produce a report");
}

/// Run replications first_rep .. first_rep + reps - 1 on `threads` workers.
/// Results are ordered by replication index, so the report does not depend
/// on the worker count.
inline ExperimentReport run_experiment(const ExperimentConfig& config) {
  const ExperimentContext ctx = make_context(config);
  const std::size_t R = config.reps;
  std::vector<ReplicationRow> rows(R);
  std::vector<std::exception_ptr> errors(R);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < R; r = next++) {
      const std::size_t index = config.first_rep + r;
      rows[r].index = index;
      rows[r].seed = derive_seed(config.seed, index);
      try {
        RandomStream rng(rows[r].seed);
        rows[r].values = run_replication(ctx, rng);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(config.threads, R));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t r = 0; r < R; ++r) {
    if (!errors[r]) continue;
    try {
      std::rethrow_exception(errors[r]);
    } catch (const config_error&) {
      throw;
    } catch (const std::exception& e) {
      throw replication_error(rows[r].index, rows[r].seed, e.what());
    }
  }
  ExperimentReport report;
  report.master_seed = config.seed;
  report.procedure = procedure_name(config.procedure);
  report.config = config.echo;
  report.metrics = ctx.metrics;
  report.rows = std::move(rows);
  aggregate_rows(report);
  return report;
}

/// Generated data of replication `first_rep` with truth columns appended.
struct SimulatedTable {
  Dataset data;
  std::vector<std::pair<std::string, std::vector<double>>> extra;
};

inline SimulatedTable simulate(const ExperimentConfig& c) {
  RandomStream rng(derive_seed(c.seed, c.first_rep));
  SimulatedTable out;
  auto flags = [](const std::vector<bool>& b) {
    std::vector<double> v(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) v[i] = b[i] ? 1.0 : 0.0;
    return v;
  };
  if (c.scenario == "a1" || c.scenario == "b1") {
    GeneratedSample g = c.scenario == "a1" ? gen_a1(c.n, true, rng) : gen_b1(c.n, true, rng);
    out.data = std::move(g.data);
    out.extra.emplace_back("outlier", flags(g.is_outlier));
  } else if (c.scenario == "a2") {
    GeneratedSample g = gen_a2(c.n, rng, c.shared_noise);
    out.data = std::move(g.data);
    for (std::size_t s = 0; s < 2; ++s) {
      std::vector<bool> col;
      for (const auto& row : g.violates) col.push_back(row[s]);
      out.extra.emplace_back("violates" + std::to_string(s + 1), flags(col));
    }
  } else if (c.scenario == "a3" || c.scenario == "b3" || c.scenario == "c3") {
    ExperimentContext ctx{c, {}, {}, {}, {}};
    const TwoSamples t = detail::two_samples(ctx, rng);
    out.data.covariates.resize(t.first.rows() + t.second.rows(), t.first.dim());
    out.data.covariates << t.first.covariates, t.second.covariates;
    out.data.responses.resize(out.data.covariates.rows(), 1);
    out.data.responses << t.first.responses, t.second.responses;
    out.data.covariate_names = t.first.covariate_names;
    out.data.response_names = t.first.response_names;
    std::vector<double> group(static_cast<std::size_t>(out.data.rows()), 2.0);
    std::fill(group.begin(), group.begin() + t.first.rows(), 1.0);
    out.extra.emplace_back("sample", std::move(group));
  } else {
    throw config_error("field 'scenario': simulate needs a generated scenario");
  }
  return out;
}

}  // namespace cct
