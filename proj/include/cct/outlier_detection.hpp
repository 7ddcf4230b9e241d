#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <variant>
#include <type_traits>
#include <vector>

#include "cct/conformal.hpp"
#include "cct/dataset.hpp"
#include "cct/errors.hpp"
#include "cct/kernel.hpp"
#include "cct/random.hpp"
#include "cct/score_models.hpp"

namespace cct {

// ---------------------------------------------------------------------------
// Benjamini-Hochberg
// ---------------------------------------------------------------------------

namespace detail {

inline double bh_threshold(double alpha, std::size_t r, std::size_t m) {
  return alpha * static_cast<double>(r) / static_cast<double>(m);
}

// Smallest r in [0, m] with q <= alpha r / m, or m + 1 if there is none.
inline std::size_t bh_bucket(double q, double alpha, std::size_t m) {
  const double guess = std::ceil(q * static_cast<double>(m) / alpha);
  if (!(guess <= static_cast<double>(m) + 1.0)) return m + 1;
  auto r = static_cast<std::size_t>(std::max(guess, 0.0));
  while (r > 0 && q <= bh_threshold(alpha, r - 1, m)) --r;
  while (r <= m && q > bh_threshold(alpha, r, m)) ++r;
  return r;
}

inline void check_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw argument_error("alpha must lie in (0, 1)");
}

}  // namespace detail

/// r* = max{r >= 0 : #{j : p_j <= alpha r / m} >= r}; also the size of the
/// BH rejection set. Runs in O(m) by bucketing each p-value at the first
/// threshold it clears.
inline std::size_t bh_rejection_count(std::span<const double> p_values, double alpha) {
  detail::check_alpha(alpha);
  const std::size_t m = p_values.size();
  if (m == 0) return 0;
  std::vector<std::size_t> counts(m + 1, 0);
  for (double q : p_values) {
    if (std::isnan(q)) throw argument_error("bh_procedure: NaN p-value");
    const std::size_t b = detail::bh_bucket(q, alpha, m);
    if (b <= m) ++counts[b];
  }
  std::size_t cumulative = 0;
  std::size_t r_star = 0;
  for (std::size_t r = 0; r <= m; ++r) {
    cumulative += counts[r];
    if (cumulative >= r) r_star = r;
  }
  return r_star;
}

/// BH rejection set {j : p_j <= alpha r* / m}, ascending indices.
inline std::vector<std::size_t> bh_procedure(std::span<const double> p_values, double alpha) {
  const std::size_t m = p_values.size();
  const std::size_t r_star = bh_rejection_count(p_values, alpha);
  std::vector<std::size_t> out;
  if (r_star == 0) return out;
  const double thr = detail::bh_threshold(alpha, r_star, m);
  for (std::size_t j = 0; j < m; ++j) {
    if (p_values[j] <= thr) out.push_back(j);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Score models for outlier detection
// ---------------------------------------------------------------------------

enum class OutlierScoreKind { linear_residual, knn_cqr, knn_one_class };

struct OutlierScoreSpec {
  OutlierScoreKind kind = OutlierScoreKind::knn_cqr;
  /// Neighbours; 0 selects the family default (50 for CQR, 5 for one-class).
  std::size_t k = 0;
  double lo = 0.05;
  double hi = 0.95;
  /// Covariate columns fed to the model; empty means all.
  std::vector<Index> feature_columns;

  std::size_t effective_k() const noexcept {
    if (k != 0) return k;
    return kind == OutlierScoreKind::knn_one_class ? 5 : 50;
  }
};

/// A fitted score model; larger scores mean more outlying.
class OutlierScorer {
 public:
  OutlierScorer(const OutlierScoreSpec& spec, const Dataset& train) : features_(spec.feature_columns) {
    const Matrix x = features(train);
    switch (spec.kind) {
      case OutlierScoreKind::linear_residual:
        model_ = fit_linear_residual(x, require_response(train));
        break;
      case OutlierScoreKind::knn_cqr: {
        const auto y = require_response(train);
        model_ = KnnQuantileModel(x, y, std::min<std::size_t>(spec.effective_k(), y.size()), spec.lo, spec.hi);
        break;
      }
      case OutlierScoreKind::knn_one_class:
        model_ = KnnOneClassModel(x, std::min<std::size_t>(spec.effective_k(), static_cast<std::size_t>(x.rows())));
        break;
    }
  }

  std::vector<double> score(const Dataset& data) const {
    const Matrix x = features(data);
    const bool needs_y = !std::holds_alternative<KnnOneClassModel>(model_);
    if (needs_y && !data.labeled()) throw argument_error("score model needs a response column");
    std::vector<double> out(static_cast<std::size_t>(x.rows()));
    for (Index i = 0; i < x.rows(); ++i) {
      const Vector row = x.row(i).transpose();
      out[static_cast<std::size_t>(i)] = std::visit(
          [&](const auto& m) -> double {
            using M = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<M, LinearResidualModel>) {
              return m.score(row, data.responses(i, 0));
            } else if constexpr (std::is_same_v<M, KnnQuantileModel>) {
              return m.cqr_score(row, data.responses(i, 0));
            } else {
              return m.score(row);
            }
          },
          model_);
    }
    return out;
  }

 private:
  Matrix features(const Dataset& data) const {
    return features_.empty() ? data.covariates : select_columns(data.covariates, features_);
  }

  static std::vector<double> require_response(const Dataset& train) {
    if (!train.labeled()) throw argument_error("score model needs a response column");
    return train.response(0);
  }

  std::vector<Index> features_;
  std::variant<LinearResidualModel, KnnQuantileModel, KnnOneClassModel> model_;
};

// ---------------------------------------------------------------------------
// Conditional outlier detection with conditional-calibration pruning
// ---------------------------------------------------------------------------

struct OutlierDetectionConfig {
  double alpha = 0.1;
  KernelFamily kernel = KernelFamily::gaussian;
  /// Kernel bandwidth; 0 selects default_bandwidth(|clean|, |weighting_columns|).
  double bandwidth = 0.0;
  /// Covariate columns the kernel acts on; empty means all.
  std::vector<Index> weighting_columns;
  OutlierScoreSpec score;
  /// Fraction of the clean data used for calibration.
  double split_ratio = 0.5;
  TieRule tie_rule = TieRule::inclusive;
};

struct OutlierRun {
  std::vector<LocalizedPValue> p_values;
  std::vector<double> test_scores;
  /// |R_{j->0}| for each test point.
  std::vector<std::size_t> aux_set_sizes;
  std::vector<std::size_t> initial_set;
  std::vector<std::size_t> final_set;
  std::vector<double> zeta;
  std::size_t r_star = 0;
};

/// p^{(l)}_{L,j}: p_{L,j} with its randomization term multiplied by
/// 1{V_2j <= V_2l}. Reuses the draws stored in `pj`.
inline double auxiliary_p_value(const LocalizedPValue& pj, double score_j, double score_l) {
  const double indicator = score_j <= score_l ? 1.0 : 0.0;
  if (indicator == 1.0) return (pj.calibration_numerator + pj.xi * pj.test_weight) / pj.denominator_weight_sum;
  return pj.calibration_numerator / pj.denominator_weight_sum;
}

/// Pruning threshold r* = max{r : #{j in initial : zeta_j |R_{j->0}| <= r} >= r}.
inline std::size_t pruning_threshold(std::span<const std::size_t> initial, std::span<const double> zeta,
                                     std::span<const std::size_t> aux_sizes) {
  std::vector<double> c;
  c.reserve(initial.size());
  for (std::size_t j : initial) c.push_back(zeta[j] * static_cast<double>(aux_sizes[j]));
  std::sort(c.begin(), c.end());
  // #{c <= r} >= r  iff  the r-th smallest value is <= r.
  for (std::size_t r = c.size(); r >= 1; --r) {
    if (c[r - 1] <= static_cast<double>(r)) return r;
  }
  return 0;
}

/// Core detection given calibration and test scores.
///
/// Draw order on `rng`: (x_tilde_j, xi_j) for j = 0..m-1, then zeta_j for
/// j = 0..m-1.
template <LocalizationKernel K>
OutlierRun detect_outliers_from_scores(const CalibrationSet& calib, const Matrix& test_weighting,
                                       std::span<const double> test_scores, double alpha, const K& kernel,
                                       RandomStream& rng, TieRule tie_rule = TieRule::inclusive) {
  detail::check_alpha(alpha);
  const std::size_t m = test_scores.size();
  if (static_cast<std::size_t>(test_weighting.rows()) != m) {
    throw argument_error("detect_outliers: test covariate rows and score count differ");
  }
  OutlierRun run;
  run.test_scores.assign(test_scores.begin(), test_scores.end());
  run.p_values.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    const Vector xj = test_weighting.row(static_cast<Index>(j)).transpose();
    const Vector x_tilde = kernel.sample(xj, rng);
    const double xi = rng.uniform();
    run.p_values.push_back(localized_p_value_at(calib, xj, test_scores[j], kernel, x_tilde, xi, tie_rule));
  }

  // p_l and its indicator-zero variant; aux values are one of the two.
  std::vector<double> full(m), reduced(m);
  for (std::size_t l = 0; l < m; ++l) {
    full[l] = run.p_values[l].value;
    reduced[l] = run.p_values[l].calibration_numerator / run.p_values[l].denominator_weight_sum;
  }

  run.aux_set_sizes.assign(m, 0);
  std::vector<double> shadow(m);
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t l = 0; l < m; ++l) {
      shadow[l] = test_scores[l] <= test_scores[j] ? full[l] : reduced[l];
    }
    shadow[j] = 0.0;
    run.aux_set_sizes[j] = bh_rejection_count(shadow, alpha);
  }

  for (std::size_t j = 0; j < m; ++j) {
    if (full[j] <= detail::bh_threshold(alpha, run.aux_set_sizes[j], m)) run.initial_set.push_back(j);
  }

  run.zeta.resize(m);
  for (std::size_t j = 0; j < m; ++j) run.zeta[j] = rng.uniform();

  run.r_star = pruning_threshold(run.initial_set, run.zeta, run.aux_set_sizes);
  for (std::size_t j : run.initial_set) {
    if (run.zeta[j] * static_cast<double>(run.aux_set_sizes[j]) <= static_cast<double>(run.r_star)) {
      run.final_set.push_back(j);
    }
  }
  return run;
}

/// Fitted scores and calibration data for one detection run.
struct OutlierScores {
  CalibrationSet calibration;
  Matrix test_weighting;
  std::vector<double> test_scores;
  KernelSpec kernel;
};

inline std::vector<Index> resolve_columns(const std::vector<Index>& cols, Index dim) {
  if (!cols.empty()) return cols;
  std::vector<Index> all(static_cast<std::size_t>(dim));
  for (Index c = 0; c < dim; ++c) all[static_cast<std::size_t>(c)] = c;
  return all;
}

/// Split the clean data, fit the score model on the training part and score
/// the calibration and test data.
inline OutlierScores prepare_outlier_scores(const Dataset& clean, const Dataset& test,
                                            const OutlierDetectionConfig& config, RandomStream& rng) {
  if (clean.dim() != test.dim()) throw argument_error("clean and test covariate dimensions differ");
  const auto split = random_split(static_cast<std::size_t>(clean.rows()), config.split_ratio, rng);
  const Dataset train = clean.subset(split.train);
  const Dataset cal = clean.subset(split.calibration);
  const OutlierScorer scorer(config.score, train);

  const auto wcols = resolve_columns(config.weighting_columns, clean.dim());
  const double h = config.bandwidth > 0.0
                       ? config.bandwidth
                       : default_bandwidth(static_cast<std::size_t>(clean.rows()), wcols.size());
  return OutlierScores{CalibrationSet(select_columns(cal.covariates, wcols), scorer.score(cal)),
                       select_columns(test.covariates, wcols), scorer.score(test),
                       KernelSpec(config.kernel, h, static_cast<Index>(wcols.size()))};
}

/// Conditional outlier detection with finite-sample FDR control.
inline OutlierRun detect_outliers(const Dataset& clean, const Dataset& test, const OutlierDetectionConfig& config,
                                  RandomStream& rng) {
  detail::check_alpha(config.alpha);
  const OutlierScores s = prepare_outlier_scores(clean, test, config, rng);
  return detect_outliers_from_scores(s.calibration, s.test_weighting, s.test_scores, config.alpha, s.kernel, rng,
                                     config.tie_rule);
}

/// Unweighted conformal p-values, (#{V_i >= v} + 1) / (n + 1), followed by BH.
/// Marginal baseline; ignores the covariates.
inline std::vector<std::size_t> conformal_bh(std::span<const double> calibration_scores,
                                             std::span<const double> test_scores, double alpha) {
  std::vector<double> sorted(calibration_scores.begin(), calibration_scores.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> p(test_scores.size());
  const double denom = static_cast<double>(sorted.size() + 1);
  for (std::size_t j = 0; j < test_scores.size(); ++j) {
    const auto at_least = static_cast<double>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), test_scores[j]));
    p[j] = (at_least + 1.0) / denom;
  }
  return bh_procedure(p, alpha);
}

struct DetectionQuality {
  double fdp = 0.0;
  double power = 0.0;
};

/// FDP = |R & inliers| / max(|R|, 1); power = |R & outliers| / max(|outliers|, 1).
inline DetectionQuality fdp_and_power(std::span<const std::size_t> rejected, const std::vector<bool>& is_outlier) {
  std::size_t false_rej = 0;
  std::size_t true_rej = 0;
  for (std::size_t j : rejected) {
    if (j >= is_outlier.size()) throw argument_error("fdp_and_power: rejection index out of range");
    (is_outlier[j] ? true_rej : false_rej) += 1;
  }
  const auto outliers = static_cast<std::size_t>(std::count(is_outlier.begin(), is_outlier.end(), true));
  return DetectionQuality{static_cast<double>(false_rej) / static_cast<double>(std::max<std::size_t>(rejected.size(), 1)),
                          static_cast<double>(true_rej) / static_cast<double>(std::max<std::size_t>(outliers, 1))};
}

inline DetectionQuality fdp_and_power(const OutlierRun& run, const std::vector<bool>& is_outlier) {
  if (is_outlier.size() != run.p_values.size()) throw argument_error("fdp_and_power: truth length differs from m");
  return fdp_and_power(run.final_set, is_outlier);
}

}  // namespace cct
