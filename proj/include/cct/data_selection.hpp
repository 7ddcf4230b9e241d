#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cct/conformal.hpp"
#include "cct/dataset.hpp"
#include "cct/errors.hpp"
#include "cct/kernel.hpp"
#include "cct/label_screening.hpp"
#include "cct/outlier_detection.hpp"
#include "cct/random.hpp"
#include "cct/score_models.hpp"

namespace cct {

struct SelectionResult {
  std::vector<double> p_values;
  std::vector<bool> selected;
  std::vector<double> xi;
};

/// Localized selection p-values calibrated on rule-violating points only.
///
/// `violating_calibration` must hold only calibration points with Y not in A;
/// the p-value then matches the Eq.-5 form with the calibration sum
/// restricted to that subset. Draw order: (x_tilde_j, xi_j) per test point.
template <LocalizationKernel K>
SelectionResult select_from_scores(const CalibrationSet& violating_calibration, const Matrix& test_weighting,
                                   std::span<const double> test_scores, double alpha, const K& kernel,
                                   RandomStream& rng) {
  detail::check_alpha(alpha);
  if (violating_calibration.empty()) throw calibration_error("select: no rule-violating calibration points");
  const std::size_t m = test_scores.size();
  if (static_cast<std::size_t>(test_weighting.rows()) != m) {
    throw argument_error("select: test covariate rows and score count differ");
  }
  SelectionResult out;
  out.p_values.resize(m);
  out.selected.resize(m);
  out.xi.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    const Vector xj = test_weighting.row(static_cast<Index>(j)).transpose();
    const Vector x_tilde = kernel.sample(xj, rng);
    out.xi[j] = rng.uniform();
    out.p_values[j] = localized_p_value_at(violating_calibration, xj, test_scores[j], kernel, x_tilde, out.xi[j]).value;
    out.selected[j] = out.p_values[j] <= alpha;
  }
  return out;
}

/// Unweighted baseline on the same violating calibration scores and xi draws.
inline SelectionResult threshold_select(std::span<const double> violating_scores, std::span<const double> test_scores,
                                        std::span<const double> xi, double alpha) {
  detail::check_alpha(alpha);
  if (violating_scores.empty()) throw calibration_error("select: no rule-violating calibration points");
  SelectionResult out;
  out.xi.assign(xi.begin(), xi.end());
  for (std::size_t j = 0; j < test_scores.size(); ++j) {
    const double p = unweighted_conformal_p_value(violating_scores, test_scores[j], xi[j]);
    out.p_values.push_back(p);
    out.selected.push_back(p <= alpha);
  }
  return out;
}

struct SelectionConfig {
  double alpha = 0.1;
  KernelFamily kernel = KernelFamily::gaussian;
  double bandwidth = 0.0;  ///< 0 selects default_bandwidth(n, |weighting_columns|)
  std::vector<Index> weighting_columns;
  LabelRule rule;
  double l2 = kLogisticDefaultL2;
  double split_ratio = 0.5;
  Index response_column = 0;
};

struct SelectionScores {
  CalibrationSet violating_calibration;
  Matrix test_weighting;
  std::vector<double> test_scores;
  KernelSpec kernel;
};

/// Split, fit a logistic classifier for the event Y in A (score = predicted
/// probability, larger means more likely in A), keep the violating
/// calibration points, and score the test points.
inline SelectionScores prepare_selection(const Dataset& labeled, const Matrix& test_x, const SelectionConfig& config,
                                         RandomStream& rng) {
  if (test_x.cols() != labeled.dim()) throw argument_error("select: covariate dimensions differ");
  const auto split = random_split(static_cast<std::size_t>(labeled.rows()), config.split_ratio, rng);
  const Dataset train = labeled.subset(split.train);
  const Dataset cal = labeled.subset(split.calibration);

  const auto train_y = train.response(config.response_column);
  std::vector<int> labels(train_y.size());
  for (std::size_t i = 0; i < train_y.size(); ++i) labels[i] = config.rule.satisfied(train_y[i]) ? 1 : 0;
  const LogisticModel model = fit_logistic(train.covariates, labels, config.l2);

  const auto cal_y = cal.response(config.response_column);
  std::vector<std::size_t> violators;
  for (std::size_t i = 0; i < cal_y.size(); ++i) {
    if (!config.rule.satisfied(cal_y[i])) violators.push_back(i);
  }
  if (violators.empty()) throw calibration_error("select: no rule-violating calibration points");
  const Matrix vx = select_rows(cal.covariates, violators);
  std::vector<double> vscores(violators.size());
  for (std::size_t i = 0; i < violators.size(); ++i) vscores[i] = model.probability(vx.row(static_cast<Index>(i)).transpose());

  std::vector<double> tscores(static_cast<std::size_t>(test_x.rows()));
  for (Index j = 0; j < test_x.rows(); ++j) tscores[static_cast<std::size_t>(j)] = model.probability(test_x.row(j).transpose());

  const auto wcols = resolve_columns(config.weighting_columns, labeled.dim());
  const double h = config.bandwidth > 0.0 ? config.bandwidth
                                          : default_bandwidth(static_cast<std::size_t>(labeled.rows()), wcols.size());
  return SelectionScores{CalibrationSet(select_columns(vx, wcols), std::move(vscores)), select_columns(test_x, wcols),
                         std::move(tscores), KernelSpec(config.kernel, h, static_cast<Index>(wcols.size()))};
}

/// Balanced selection with marginal per-selection error rate control.
inline SelectionResult select(const Dataset& labeled, const Matrix& test_x, const SelectionConfig& config,
                              RandomStream& rng) {
  detail::check_alpha(config.alpha);
  const SelectionScores s = prepare_selection(labeled, test_x, config, rng);
  return select_from_scores(s.violating_calibration, s.test_weighting, s.test_scores, config.alpha, s.kernel, rng);
}

/// Fraction of (conditioned) truly violating test points that were selected.
inline double pser_metrics(const SelectionResult& result, const Matrix& test_x, std::span<const double> truth,
                           const LabelRule& rule, const CovariatePredicate& condition = {}) {
  const std::size_t m = result.selected.size();
  if (truth.size() != m || static_cast<std::size_t>(test_x.rows()) != m) {
    throw argument_error("pser_metrics: truth and result sizes differ");
  }
  std::size_t violating = 0;
  std::size_t wrong = 0;
  for (std::size_t j = 0; j < m; ++j) {
    if (rule.satisfied(truth[j])) continue;
    if (condition && !condition(test_x.row(static_cast<Index>(j)).transpose())) continue;
    ++violating;
    if (result.selected[j]) ++wrong;
  }
  if (violating == 0) throw metric_error("pser_metrics: no violating test points satisfy the condition");
  return static_cast<double>(wrong) / static_cast<double>(violating);
}

}  // namespace cct
