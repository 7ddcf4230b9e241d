#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "cct/dataset.hpp"
#include "cct/errors.hpp"
#include "cct/kernel.hpp"
#include "cct/random.hpp"

namespace cct {

/// Summary score of a calibration point with no rule-violating component
/// (the maximum over an empty set). Never counts as `test_score <= score`.
inline constexpr double kNoViolation = -std::numeric_limits<double>::infinity();

/// Calibration covariates (weighting coordinates only) and their scores.
class CalibrationSet {
 public:
  CalibrationSet(Matrix covariates, std::vector<double> scores)
      : covariates_(std::move(covariates)), scores_(std::move(scores)) {
    if (covariates_.rows() != static_cast<Index>(scores_.size())) {
      throw argument_error("calibration covariate rows and score count differ");
    }
    for (double s : scores_) {
      if (!std::isfinite(s) && s != kNoViolation) {
        throw argument_error("calibration scores must be finite or the no-violation sentinel");
      }
    }
  }

  const Matrix& covariates() const noexcept { return covariates_; }
  std::span<const double> scores() const noexcept { return scores_; }
  std::size_t size() const noexcept { return scores_.size(); }
  bool empty() const noexcept { return scores_.empty(); }
  Index dim() const noexcept { return covariates_.cols(); }

 private:
  Matrix covariates_;
  std::vector<double> scores_;
};

/// How calibration scores tied with the test score are counted.
enum class TieRule {
  inclusive,   ///< 1{v <= V_i}: ties carry full weight
  randomized,  ///< 1{v < V_i} + xi * 1{v == V_i}
};

struct LocalizedPValue {
  double value = 1.0;
  double xi = 0.0;
  Vector x_tilde;
  /// Sum of calibration weights whose score is at least the test score
  /// (ties scaled by xi under TieRule::randomized).
  double calibration_numerator = 0.0;
  /// H(test_x, x_tilde).
  double test_weight = 0.0;
  double denominator_weight_sum = 0.0;

  double numerator_weight_sum() const noexcept { return calibration_numerator + xi * test_weight; }
};

/// Calibration weights around a fixed localization point.
///
/// Several test scores at the same test point (label screening) share one
/// reference; each p-value then costs O(n) comparisons and no kernel calls.
class LocalizedReference {
 public:
  template <LocalizationKernel K>
  LocalizedReference(const CalibrationSet& calib, VectorRef test_x, const K& kernel, VectorRef x_tilde)
      : calib_(&calib), x_tilde_(x_tilde) {
    if (calib.empty()) throw calibration_error("calibration set is empty");
    if (test_x.size() != calib.dim()) {
      throw argument_error("test point dimension differs from calibration covariates");
    }
    const Matrix& cov = calib.covariates();
    weights_.resize(calib.size());
    double sum = 0.0;
    for (Index i = 0; i < cov.rows(); ++i) {
      const double w = kernel.weight(cov.row(i).transpose(), x_tilde);
      weights_[static_cast<std::size_t>(i)] = w;
      sum += w;
    }
    test_weight_ = kernel.weight(test_x, x_tilde);
    denominator_ = sum + test_weight_;
    if (!(denominator_ > 0.0)) {
      throw degenerate_weights_error("all localization weights vanish");
    }
  }

  std::span<const double> weights() const noexcept { return weights_; }
  double test_weight() const noexcept { return test_weight_; }
  double denominator() const noexcept { return denominator_; }

  /// Weighted count of calibration scores at or above `test_score`.
  double calibration_numerator(double test_score, double xi, TieRule rule) const {
    const auto scores = calib_->scores();
    double num = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double v = scores[i];
      if (v == kNoViolation) continue;
      if (rule == TieRule::inclusive) {
        if (test_score <= v) num += weights_[i];
      } else if (test_score < v) {
        num += weights_[i];
      } else if (test_score == v) {
        num += xi * weights_[i];
      }
    }
    return num;
  }

  LocalizedPValue p_value(double test_score, double xi, TieRule rule = TieRule::inclusive) const {
    LocalizedPValue out;
    out.xi = xi;
    out.x_tilde = x_tilde_;
    out.calibration_numerator = calibration_numerator(test_score, xi, rule);
    out.test_weight = test_weight_;
    out.denominator_weight_sum = denominator_;
    out.value = (out.calibration_numerator + xi * test_weight_) / denominator_;
    return out;
  }

 private:
  const CalibrationSet* calib_;
  Vector x_tilde_;
  std::vector<double> weights_;
  double test_weight_ = 0.0;
  double denominator_ = 0.0;
};

/// Localized p-value with the localization point and xi supplied.
template <LocalizationKernel K>
LocalizedPValue localized_p_value_at(const CalibrationSet& calib, VectorRef test_x, double test_score,
                                     const K& kernel, VectorRef x_tilde, double xi,
                                     TieRule rule = TieRule::inclusive) {
  return LocalizedReference(calib, test_x, kernel, x_tilde).p_value(test_score, xi, rule);
}

/// Randomly localized conformal p-value.
///
/// Draws x_tilde ~ H(test_x, .) and then xi ~ U[0, 1) from `rng`, and returns
///   [sum_i H(X_i, x_tilde) 1{v <= V_i} + xi H(test_x, x_tilde)]
///     / [sum_i H(X_i, x_tilde) + H(test_x, x_tilde)].
template <LocalizationKernel K>
LocalizedPValue localized_p_value(const CalibrationSet& calib, VectorRef test_x, double test_score,
                                  const K& kernel, RandomStream& rng) {
  const Vector x_tilde = kernel.sample(test_x, rng);
  const double xi = rng.uniform();
  return localized_p_value_at(calib, test_x, test_score, kernel, x_tilde, xi, TieRule::inclusive);
}

/// As localized_p_value, but tied calibration scores contribute xi * weight.
template <LocalizationKernel K>
LocalizedPValue localized_p_value_tiebreak(const CalibrationSet& calib, VectorRef test_x, double test_score,
                                           const K& kernel, RandomStream& rng) {
  const Vector x_tilde = kernel.sample(test_x, rng);
  const double xi = rng.uniform();
  return localized_p_value_at(calib, test_x, test_score, kernel, x_tilde, xi, TieRule::randomized);
}

/// Localized at test_x itself (no x_tilde draw); xi is still drawn.
template <LocalizationKernel K>
LocalizedPValue simplified_localized_p_value(const CalibrationSet& calib, VectorRef test_x, double test_score,
                                             const K& kernel, RandomStream& rng) {
  const double xi = rng.uniform();
  return localized_p_value_at(calib, test_x, test_score, kernel, test_x, xi, TieRule::inclusive);
}

/// (#{V_i >= v} + 1) / (n + 1).
inline double unweighted_conformal_p_value(std::span<const double> scores, double test_score) {
  if (scores.empty()) throw argument_error("unweighted conformal p-value needs calibration scores");
  std::size_t count = 0;
  for (double v : scores) {
    if (v != kNoViolation && test_score <= v) ++count;
  }
  return (static_cast<double>(count) + 1.0) / static_cast<double>(scores.size() + 1);
}

/// (#{V_i >= v} + xi) / (n + 1).
inline double unweighted_conformal_p_value(std::span<const double> scores, double test_score, double xi) {
  if (scores.empty()) throw argument_error("unweighted conformal p-value needs calibration scores");
  double count = 0.0;
  for (double v : scores) {
    if (v != kNoViolation && test_score <= v) count += 1.0;
  }
  return (count + xi) / static_cast<double>(scores.size() + 1);
}

/// Randomized form with xi drawn from `rng`.
inline double unweighted_conformal_p_value(std::span<const double> scores, double test_score, RandomStream& rng) {
  return unweighted_conformal_p_value(scores, test_score, rng.uniform());
}

}  // namespace cct
