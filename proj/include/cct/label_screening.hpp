#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cct/conformal.hpp"
#include "cct/dataset.hpp"
#include "cct/errors.hpp"
#include "cct/kernel.hpp"
#include "cct/outlier_detection.hpp"
#include "cct/random.hpp"
#include "cct/score_models.hpp"

namespace cct {

/// Screening rule A_s for one response component.
struct LabelRule {
  enum class Kind { at_least, at_most, member_of };

  Kind kind = Kind::at_least;
  double threshold = 0.0;
  std::vector<double> members;

  static LabelRule at_least(double a) { return {Kind::at_least, a, {}}; }
  static LabelRule at_most(double a) { return {Kind::at_most, a, {}}; }
  static LabelRule member_of(std::vector<double> values) { return {Kind::member_of, 0.0, std::move(values)}; }

  bool satisfied(double y) const {
    switch (kind) {
      case Kind::at_least: return y >= threshold;
      case Kind::at_most: return y <= threshold;
      case Kind::member_of: return std::find(members.begin(), members.end(), y) != members.end();
    }
    return false;
  }
};

/// Rule for component s: rules[s], or rules[0] broadcast when only one is given.
inline const LabelRule& rule_for(std::span<const LabelRule> rules, std::size_t s) {
  if (rules.empty()) throw argument_error("no screening rules given");
  if (rules.size() == 1) return rules[0];
  if (s >= rules.size()) throw argument_error("no screening rule for component " + std::to_string(s));
  return rules[s];
}

/// Covariates with a ragged multivariate response (row j has S_j >= 1 labels).
class MultiLabelDataset {
 public:
  MultiLabelDataset(Matrix covariates, std::vector<std::vector<double>> responses)
      : covariates_(std::move(covariates)), responses_(std::move(responses)) {
    if (covariates_.rows() != static_cast<Index>(responses_.size())) {
      throw argument_error("multi-label dataset: covariate rows and response rows differ");
    }
    for (const auto& r : responses_) {
      if (r.empty()) throw argument_error("multi-label dataset: every row needs at least one label");
    }
  }

  /// Constant-S view of a Dataset whose response columns are the components.
  static MultiLabelDataset from_dataset(const Dataset& d) {
    std::vector<std::vector<double>> resp(static_cast<std::size_t>(d.rows()));
    for (Index i = 0; i < d.rows(); ++i) {
      auto& row = resp[static_cast<std::size_t>(i)];
      for (Index s = 0; s < d.responses.cols(); ++s) row.push_back(d.responses(i, s));
    }
    return MultiLabelDataset(d.covariates, std::move(resp));
  }

  const Matrix& covariates() const noexcept { return covariates_; }
  const std::vector<std::vector<double>>& responses() const noexcept { return responses_; }
  std::size_t size() const noexcept { return responses_.size(); }

  /// Common component count, or 0 if the rows are ragged.
  std::size_t constant_components() const {
    const std::size_t s = responses_.front().size();
    for (const auto& r : responses_) {
      if (r.size() != s) return 0;
    }
    return s;
  }

  MultiLabelDataset subset(std::span<const std::size_t> idx) const {
    std::vector<std::vector<double>> resp;
    resp.reserve(idx.size());
    for (std::size_t i : idx) resp.push_back(responses_[i]);
    return MultiLabelDataset(select_rows(covariates_, idx), std::move(resp));
  }

 private:
  Matrix covariates_;
  std::vector<std::vector<double>> responses_;
};

/// max{V_s : Y_s violates A_s}, or kNoViolation when every component
/// satisfies its rule.
inline double summary_score(std::span<const double> scores, std::span<const double> labels,
                            std::span<const LabelRule> rules) {
  if (scores.size() != labels.size()) throw argument_error("summary_score: score and label lengths differ");
  double best = kNoViolation;
  for (std::size_t s = 0; s < scores.size(); ++s) {
    if (!rule_for(rules, s).satisfied(labels[s])) best = std::max(best, scores[s]);
  }
  return best;
}

struct ScreeningResult {
  std::vector<std::vector<double>> p_values;
  /// decisions[j][s] is true when component s of test point j is retained.
  std::vector<std::vector<bool>> decisions;
  std::vector<double> xi;
  std::vector<Vector> x_tilde;
};

/// Localized screening given summary calibration scores and per-component
/// test scores. Draw order: (x_tilde_j, xi_j) for j = 0..m-1.
template <LocalizationKernel K>
ScreeningResult screen_from_scores(const CalibrationSet& summary_calibration, const Matrix& test_weighting,
                                   const std::vector<std::vector<double>>& test_scores, double alpha,
                                   const K& kernel, RandomStream& rng) {
  detail::check_alpha(alpha);
  const std::size_t m = test_scores.size();
  if (static_cast<std::size_t>(test_weighting.rows()) != m) {
    throw argument_error("screen: test covariate rows and score rows differ");
  }
  ScreeningResult out;
  out.p_values.resize(m);
  out.decisions.resize(m);
  out.xi.resize(m);
  out.x_tilde.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    const Vector xj = test_weighting.row(static_cast<Index>(j)).transpose();
    out.x_tilde[j] = kernel.sample(xj, rng);
    out.xi[j] = rng.uniform();
    const LocalizedReference ref(summary_calibration, xj, kernel, out.x_tilde[j]);
    for (double v : test_scores[j]) {
      const double p = ref.p_value(v, out.xi[j]).value;
      out.p_values[j].push_back(p);
      out.decisions[j].push_back(p <= alpha);
    }
  }
  return out;
}

/// Unweighted thresholding baseline: same xi_j, p = (#{Vbar_i >= v} + xi_j) / (n + 1).
inline ScreeningResult threshold_screen(std::span<const double> summary_scores,
                                        const std::vector<std::vector<double>>& test_scores,
                                        std::span<const double> xi, double alpha) {
  detail::check_alpha(alpha);
  if (xi.size() != test_scores.size()) throw argument_error("threshold_screen: one xi per test point required");
  ScreeningResult out;
  out.p_values.resize(test_scores.size());
  out.decisions.resize(test_scores.size());
  out.xi.assign(xi.begin(), xi.end());
  for (std::size_t j = 0; j < test_scores.size(); ++j) {
    for (double v : test_scores[j]) {
      const double p = unweighted_conformal_p_value(summary_scores, v, xi[j]);
      out.p_values[j].push_back(p);
      out.decisions[j].push_back(p <= alpha);
    }
  }
  return out;
}

struct ScreeningConfig {
  double alpha = 0.1;
  KernelFamily kernel = KernelFamily::gaussian;
  double bandwidth = 0.0;  ///< 0 selects default_bandwidth(n, |weighting_columns|)
  std::vector<Index> weighting_columns;
  std::vector<LabelRule> rules;
  double l2 = kLogisticDefaultL2;
  double split_ratio = 0.5;
};

/// Calibration summary scores and test component scores for one run.
struct ScreeningScores {
  CalibrationSet calibration;
  Matrix test_weighting;
  std::vector<std::vector<double>> test_scores;
  KernelSpec kernel;
};

/// Split, fit one logistic classifier per component for the event
/// Y_s in A_s, and score calibration and test points. Requires constant S.
inline ScreeningScores prepare_screening(const MultiLabelDataset& labeled, const Matrix& test_x,
                                         const ScreeningConfig& config, RandomStream& rng) {
  const std::size_t S = labeled.constant_components();
  if (S == 0) throw argument_error("per-component logistic scores need a constant number of components");
  if (test_x.cols() != labeled.covariates().cols()) throw argument_error("screen: covariate dimensions differ");
  const auto split = random_split(labeled.size(), config.split_ratio, rng);
  const MultiLabelDataset train = labeled.subset(split.train);
  const MultiLabelDataset cal = labeled.subset(split.calibration);

  std::vector<LogisticModel> models;
  for (std::size_t s = 0; s < S; ++s) {
    std::vector<int> labels(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      labels[i] = rule_for(config.rules, s).satisfied(train.responses()[i][s]) ? 1 : 0;
    }
    models.push_back(fit_logistic(train.covariates(), labels, config.l2));
  }
  auto component_scores = [&](const Matrix& x) {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(x.rows()));
    for (Index i = 0; i < x.rows(); ++i) {
      const Vector row = x.row(i).transpose();
      for (const auto& model : models) out[static_cast<std::size_t>(i)].push_back(model.probability(row));
    }
    return out;
  };

  const auto cal_scores = component_scores(cal.covariates());
  std::vector<double> summaries(cal.size());
  for (std::size_t i = 0; i < cal.size(); ++i) {
    summaries[i] = summary_score(cal_scores[i], cal.responses()[i], config.rules);
  }
  const auto wcols = resolve_columns(config.weighting_columns, test_x.cols());
  const double h = config.bandwidth > 0.0 ? config.bandwidth : default_bandwidth(labeled.size(), wcols.size());
  return ScreeningScores{CalibrationSet(select_columns(cal.covariates(), wcols), std::move(summaries)),
                         select_columns(test_x, wcols), component_scores(test_x),
                         KernelSpec(config.kernel, h, static_cast<Index>(wcols.size()))};
}

/// Conditional label screening with finite-sample marginal FWER control.
inline ScreeningResult screen(const MultiLabelDataset& labeled, const Matrix& test_x, const ScreeningConfig& config,
                              RandomStream& rng) {
  detail::check_alpha(config.alpha);
  const ScreeningScores s = prepare_screening(labeled, test_x, config, rng);
  return screen_from_scores(s.calibration, s.test_weighting, s.test_scores, config.alpha, s.kernel, rng);
}

using CovariatePredicate = std::function<bool(VectorRef)>;

/// Fraction of (conditioned) test points retaining at least one
/// rule-violating component.
inline double fwer_metrics(const ScreeningResult& result, const Matrix& test_x,
                           const std::vector<std::vector<double>>& truth, std::span<const LabelRule> rules,
                           const CovariatePredicate& condition = {}) {
  const std::size_t m = result.decisions.size();
  if (truth.size() != m || static_cast<std::size_t>(test_x.rows()) != m) {
    throw argument_error("fwer_metrics: truth and result sizes differ");
  }
  std::size_t considered = 0;
  std::size_t errors = 0;
  for (std::size_t j = 0; j < m; ++j) {
    if (condition && !condition(test_x.row(static_cast<Index>(j)).transpose())) continue;
    ++considered;
    if (truth[j].size() != result.decisions[j].size()) throw argument_error("fwer_metrics: component counts differ");
    for (std::size_t s = 0; s < truth[j].size(); ++s) {
      if (result.decisions[j][s] && !rule_for(rules, s).satisfied(truth[j][s])) {
        ++errors;
        break;
      }
    }
  }
  if (considered == 0) throw metric_error("fwer_metrics: condition selects no test points");
  return static_cast<double>(errors) / static_cast<double>(considered);
}

}  // namespace cct
