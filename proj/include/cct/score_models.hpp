#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "cct/dataset.hpp"
#include "cct/errors.hpp"

namespace cct {

// ---------------------------------------------------------------------------
// Linear least squares, absolute-residual score
// ---------------------------------------------------------------------------

struct LinearResidualModel {
  Vector coefficients;
  double intercept = 0.0;

  double predict(VectorRef x) const { return intercept + x.dot(coefficients); }
  double score(VectorRef x, double y) const { return std::abs(y - predict(x)); }
};

inline constexpr double kRidgeFallback = 1e-8;

/// Ordinary least squares with intercept. Rank-deficient designs fall back
/// to ridge regression with penalty kRidgeFallback on all coefficients.
inline LinearResidualModel fit_linear_residual(const Matrix& x, std::span<const double> y) {
  const Index n = x.rows();
  const Index d = x.cols();
  if (static_cast<std::size_t>(n) != y.size()) throw argument_error("fit_linear_residual: row count mismatch");
  if (n < d + 1) throw argument_error("fit_linear_residual: need at least d + 1 rows");

  Eigen::MatrixXd design(n, d + 1);
  design.col(0).setOnes();
  design.rightCols(d) = x;
  const Eigen::Map<const Vector> target(y.data(), n);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  Vector beta;
  if (qr.rank() == d + 1) {
    beta = qr.solve(target);
  } else {
    Eigen::MatrixXd gram = design.transpose() * design;
    gram.diagonal().array() += kRidgeFallback;
    beta = gram.ldlt().solve(design.transpose() * target);
  }
  if (!beta.allFinite()) throw fit_error("fit_linear_residual: degenerate design");
  return LinearResidualModel{beta.tail(d), beta(0)};
}

// ---------------------------------------------------------------------------
// Brute-force nearest neighbours
// ---------------------------------------------------------------------------

/// Indices of the k rows of `points` closest to `query` in Euclidean
/// distance, nearest first. Equal distances are ordered by row index.
inline std::vector<std::size_t> nearest_neighbors(const Matrix& points, VectorRef query, std::size_t k) {
  const auto n = static_cast<std::size_t>(points.rows());
  if (k == 0 || k > n) throw argument_error("nearest_neighbors: k must lie in [1, n]");
  const Vector sq = (points.rowwise() - query.transpose()).rowwise().squaredNorm();
  std::vector<std::pair<double, std::size_t>> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = {sq(static_cast<Index>(i)), i};
  const auto kth = order.begin() + static_cast<std::ptrdiff_t>(k);
  std::partial_sort(order.begin(), kth, order.end());
  std::vector<std::size_t> out(k);
  for (std::size_t i = 0; i < k; ++i) out[i] = order[i].second;
  return out;
}

// ---------------------------------------------------------------------------
// k-NN conditional quantiles, CQR score
// ---------------------------------------------------------------------------

/// Lower empirical quantile of `sorted`: element floor(level * (k - 1)).
inline double lower_quantile(std::span<const double> sorted, double level) {
  const auto pos = static_cast<std::size_t>(std::floor(level * static_cast<double>(sorted.size() - 1)));
  return sorted[pos];
}

class KnnQuantileModel {
 public:
  KnnQuantileModel(const Matrix& train_x, std::vector<double> train_y, std::size_t k, double lo, double hi,
                   bool standardize = true)
      : responses_(std::move(train_y)), k_(k), lo_(lo), hi_(hi) {
    if (train_x.rows() == 0) throw fit_error("k-NN quantile model: empty training set");
    if (static_cast<std::size_t>(train_x.rows()) != responses_.size()) {
      throw argument_error("k-NN quantile model: row count mismatch");
    }
    if (k == 0 || k > responses_.size()) throw argument_error("k-NN quantile model: k must lie in [1, n]");
    if (!(0.0 < lo && lo < hi && hi < 1.0)) throw argument_error("k-NN quantile model: need 0 < lo < hi < 1");
    scaler_ = standardize ? Standardizer::fit(train_x) : Standardizer::identity(train_x.cols());
    train_ = scaler_.apply_rows(train_x);
  }

  std::size_t k() const noexcept { return k_; }
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }

  /// (q_lo(x), q_hi(x)).
  std::pair<double, double> quantiles(VectorRef x) const {
    const auto nn = nearest_neighbors(train_, scaler_.apply(x), k_);
    std::vector<double> ys(nn.size());
    for (std::size_t i = 0; i < nn.size(); ++i) ys[i] = responses_[nn[i]];
    std::sort(ys.begin(), ys.end());
    return {lower_quantile(ys, lo_), lower_quantile(ys, hi_)};
  }

  /// max(q_lo(x) - y, y - q_hi(x)); negative inside the band.
  double cqr_score(VectorRef x, double y) const {
    const auto [qlo, qhi] = quantiles(x);
    return std::max(qlo - y, y - qhi);
  }

 private:
  Matrix train_;
  std::vector<double> responses_;
  Standardizer scaler_;
  std::size_t k_;
  double lo_;
  double hi_;
};

inline KnnQuantileModel fit_knn_quantile(const Matrix& train_x, std::span<const double> train_y, std::size_t k,
                                         double lo = 0.05, double hi = 0.95) {
  return KnnQuantileModel(train_x, std::vector<double>(train_y.begin(), train_y.end()), k, lo, hi);
}

// ---------------------------------------------------------------------------
// k-NN one-class score
// ---------------------------------------------------------------------------

/// Mean Euclidean distance to the k nearest training points, in the
/// original covariate units.
class KnnOneClassModel {
 public:
  KnnOneClassModel(Matrix train_x, std::size_t k) : train_(std::move(train_x)), k_(k) {
    if (train_.rows() == 0) throw fit_error("k-NN one-class model: empty training set");
    if (k == 0 || k > static_cast<std::size_t>(train_.rows())) {
      throw argument_error("k-NN one-class model: k must lie in [1, n]");
    }
  }

  std::size_t k() const noexcept { return k_; }

  double score(VectorRef x) const {
    const auto nn = nearest_neighbors(train_, x, k_);
    double total = 0.0;
    for (std::size_t i : nn) total += (train_.row(static_cast<Index>(i)).transpose() - x).norm();
    return total / static_cast<double>(k_);
  }

 private:
  Matrix train_;
  std::size_t k_;
};

inline double one_class_score(const KnnOneClassModel& model, VectorRef x) { return model.score(x); }

// ---------------------------------------------------------------------------
// L2-penalized logistic regression
// ---------------------------------------------------------------------------

/// Logistic classifier P(label = 1 | x). Coefficients live in the
/// standardized feature space recorded in `scaler`; the intercept is not
/// penalized.
struct LogisticModel {
  Vector weights;
  double intercept = 0.0;
  Standardizer scaler;
  bool converged = false;
  int iterations = 0;

  double linear_predictor(VectorRef x) const { return intercept + scaler.apply(x).dot(weights); }

  double probability(VectorRef x) const {
    const double eta = std::clamp(linear_predictor(x), -kLinkClamp, kLinkClamp);
    return 1.0 / (1.0 + std::exp(-eta));
  }

  /// p / (1 - p).
  double odds(VectorRef x) const { return std::exp(std::clamp(linear_predictor(x), -kLinkClamp, kLinkClamp)); }

  /// Keeps fitted probabilities strictly inside (0, 1).
  static constexpr double kLinkClamp = 30.0;
};

namespace detail {

// log(1 + exp(t)) without overflow.
inline double softplus(double t) { return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }

inline Eigen::MatrixXd logistic_design(const Matrix& standardized) {
  Eigen::MatrixXd z(standardized.rows(), standardized.cols() + 1);
  z.col(0).setOnes();
  z.rightCols(standardized.cols()) = standardized;
  return z;
}

inline double logistic_objective(const Eigen::MatrixXd& z, const Vector& y, const Vector& beta, double l2) {
  const Vector eta = z * beta;
  double ll = 0.0;
  for (Index i = 0; i < eta.size(); ++i) ll += y(i) * eta(i) - softplus(eta(i));
  return ll - 0.5 * l2 * beta.tail(beta.size() - 1).squaredNorm();
}

inline Vector logistic_gradient(const Eigen::MatrixXd& z, const Vector& y, const Vector& beta, double l2) {
  const Vector eta = z * beta;
  Vector resid(eta.size());
  for (Index i = 0; i < eta.size(); ++i) resid(i) = y(i) - 1.0 / (1.0 + std::exp(-eta(i)));
  Vector grad = z.transpose() * resid;
  grad.tail(grad.size() - 1) -= l2 * beta.tail(beta.size() - 1);
  return grad;
}

inline Vector to_label_vector(std::span<const int> labels) {
  Vector y(static_cast<Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw argument_error("logistic labels must be 0 or 1");
    y(static_cast<Index>(i)) = labels[i];
  }
  return y;
}

inline Vector model_parameters(const LogisticModel& model) {
  Vector beta(model.weights.size() + 1);
  beta(0) = model.intercept;
  beta.tail(model.weights.size()) = model.weights;
  return beta;
}

}  // namespace detail

/// Penalized log-likelihood of `model`'s own parameters on (x, labels):
/// sum_i [y_i eta_i - log(1 + e^{eta_i})] - (l2 / 2) ||w||^2, with eta computed
/// in the model's standardized space.
inline double logistic_objective(const LogisticModel& model, const Matrix& x, std::span<const int> labels,
                                 double l2) {
  return detail::logistic_objective(detail::logistic_design(model.scaler.apply_rows(x)), detail::to_label_vector(labels),
                                    detail::model_parameters(model), l2);
}

/// Gradient of logistic_objective with respect to (intercept, weights).
inline Vector logistic_gradient(const LogisticModel& model, const Matrix& x, std::span<const int> labels, double l2) {
  return detail::logistic_gradient(detail::logistic_design(model.scaler.apply_rows(x)), detail::to_label_vector(labels),
                                   detail::model_parameters(model), l2);
}

inline constexpr double kLogisticDefaultL2 = 1e-4;
inline constexpr double kLogisticGradientTolerance = 1e-8;
inline constexpr int kLogisticMaxIterations = 100;

/// Damped Newton (IRLS) on the penalized log-likelihood. Stops when the
/// gradient norm drops below kLogisticGradientTolerance or after
/// kLogisticMaxIterations steps.
inline LogisticModel fit_logistic(const Matrix& x, std::span<const int> labels, double l2 = kLogisticDefaultL2) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw argument_error("fit_logistic: row count mismatch");
  if (l2 < 0.0) throw argument_error("fit_logistic: l2 must be nonnegative");
  const Vector y = detail::to_label_vector(labels);
  const double positives = y.sum();
  if (positives == 0.0 || positives == static_cast<double>(y.size())) {
    throw fit_error("fit_logistic: both classes must be present");
  }

  LogisticModel model;
  model.scaler = Standardizer::fit(x);
  const Eigen::MatrixXd z = detail::logistic_design(model.scaler.apply_rows(x));
  const Index p = z.cols();
  Vector beta = Vector::Zero(p);
  double objective = detail::logistic_objective(z, y, beta, l2);

  int iter = 0;
  for (; iter < kLogisticMaxIterations; ++iter) {
    const Vector grad = detail::logistic_gradient(z, y, beta, l2);
    if (grad.norm() <= kLogisticGradientTolerance) {
      model.converged = true;
      break;
    }
    const Vector eta = z * beta;
    Vector w(eta.size());
    for (Index i = 0; i < eta.size(); ++i) {
      const double pr = 1.0 / (1.0 + std::exp(-eta(i)));
      w(i) = pr * (1.0 - pr);
    }
    Eigen::MatrixXd hessian = z.transpose() * w.asDiagonal() * z;
    hessian.diagonal().tail(p - 1).array() += l2;
    hessian.diagonal().array() += 1e-12;
    const Vector step = hessian.ldlt().solve(grad);

    double t = 1.0;
    bool improved = false;
    for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
      const Vector candidate = beta + t * step;
      const double cand_obj = detail::logistic_objective(z, y, candidate, l2);
      if (cand_obj >= objective) {
        beta = candidate;
        objective = cand_obj;
        improved = true;
        break;
      }
    }
    if (!improved) {
      // Newton direction no longer increases the objective in floating point.
      model.converged = detail::logistic_gradient(z, y, beta, l2).norm() <= 1e-6;
      break;
    }
  }
  if (!beta.allFinite()) throw fit_error("fit_logistic: diverged");
  model.intercept = beta(0);
  model.weights = beta.tail(p - 1);
  model.iterations = iter;
  return model;
}

inline double predict_odds(const LogisticModel& model, VectorRef x) { return model.odds(x); }

/// Estimate of f_2(y | x) / f_1(y | x): odds of the joint (x, y) classifier
/// divided by odds of the covariate-only classifier. Both classifiers use
/// label 0 for sample 1 and label 1 for sample 2.
inline double conditional_density_ratio_score(const LogisticModel& joint, const LogisticModel& marginal, VectorRef x,
                                              double y) {
  Vector xy(x.size() + 1);
  xy.head(x.size()) = x;
  xy(x.size()) = y;
  return joint.odds(xy) / marginal.odds(x);
}

/// Covariate density ratio estimate g(x) = f_{2,X}(x) / f_{1,X}(x).
inline double covariate_density_ratio(const LogisticModel& marginal, VectorRef x) { return marginal.odds(x); }

}  // namespace cct
