#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "cct/dataset.hpp"
#include "cct/errors.hpp"
#include "cct/kernel.hpp"
#include "cct/normal.hpp"
#include "cct/outlier_detection.hpp"
#include "cct/random.hpp"
#include "cct/score_models.hpp"

namespace cct {

/// D_ij = 1/2 - 1{v1 < v2} - xi 1{v1 == v2}.
inline double d_hat(double v1, double v2, double xi) {
  if (v1 < v2) return -0.5;
  if (v1 == v2) return 0.5 - xi;
  return 0.5;
}

struct TwoSampleResult {
  double t_hat = 0.0;
  double numerator = 0.0;
  double sigma_sq_hat = 0.0;
  double p_value = 1.0;
  bool reject = false;
  std::size_t n1 = 0;
};

/// Kernel-weighted two-sample U-statistic with supplied xi_j (one per
/// sample-2 point, shared across all i).
///
/// numerator = n^-2 sum_ij H_ij D_ij. With R_i = n^-1 sum_j H_ij D_ij and
/// C_j = n^-1 sum_i H_ij D_ij the variance estimate is
///   n^-2 sum_i R_i^2 + n^-2 sum_j C_j^2 - n^-4 sum_ij (H_ij D_ij)^2 - (2 / n) numerator^2.
template <LocalizationKernel K>
TwoSampleResult weighted_statistic_with_xi(const Matrix& x1, const Matrix& x2, std::span<const double> v1,
                                           std::span<const double> v2, const K& kernel, std::span<const double> xi,
                                           double alpha = 0.05) {
  const auto n = static_cast<std::size_t>(x1.rows());
  if (static_cast<std::size_t>(x2.rows()) != n || v1.size() != n || v2.size() != n || xi.size() != n) {
    throw argument_error("weighted_statistic: both samples need the same size n1");
  }
  if (n < 2) throw argument_error("weighted_statistic: n1 must be at least 2");
  const double nd = static_cast<double>(n);

  std::vector<double> row_sum(n, 0.0);
  std::vector<double> col_sum(n, 0.0);
  double total = 0.0;
  double total_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vector xi1 = x1.row(static_cast<Index>(i)).transpose();
    for (std::size_t j = 0; j < n; ++j) {
      const double k = kernel.weight(xi1, x2.row(static_cast<Index>(j)).transpose()) * d_hat(v1[i], v2[j], xi[j]);
      row_sum[i] += k;
      col_sum[j] += k;
      total_sq += k * k;
    }
    total += row_sum[i];
  }

  TwoSampleResult out;
  out.n1 = n;
  out.numerator = total / (nd * nd);
  double rows = 0.0;
  double cols = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    rows += (row_sum[i] / nd) * (row_sum[i] / nd);
    cols += (col_sum[i] / nd) * (col_sum[i] / nd);
  }
  out.sigma_sq_hat = rows / (nd * nd) + cols / (nd * nd) - total_sq / (nd * nd * nd * nd) -
                     (2.0 / nd) * out.numerator * out.numerator;
  if (!(out.sigma_sq_hat > 0.0)) {
    throw degenerate_variance_error("weighted_statistic: variance estimate is not positive");
  }
  out.t_hat = out.numerator / std::sqrt(out.sigma_sq_hat);
  out.p_value = normal_upper_tail(out.t_hat);
  out.reject = out.p_value <= alpha;
  return out;
}

/// As weighted_statistic_with_xi, drawing xi_1..xi_n from `rng`.
template <LocalizationKernel K>
TwoSampleResult weighted_statistic(const Matrix& x1, const Matrix& x2, std::span<const double> v1,
                                   std::span<const double> v2, const K& kernel, RandomStream& rng,
                                   double alpha = 0.05) {
  std::vector<double> xi(v2.size());
  for (double& x : xi) x = rng.uniform();
  return weighted_statistic_with_xi(x1, x2, v1, v2, kernel, xi, alpha);
}

struct TwoSampleConfig {
  double alpha = 0.05;
  KernelFamily kernel = KernelFamily::gaussian;
  double bandwidth = 0.0;  ///< 0 selects default_bandwidth(|d1|, d)
  double l2 = kLogisticDefaultL2;
  double split_ratio = 0.5;
};

/// Fitted density-ratio classifiers and calibration scores for one test.
struct TwoSampleScores {
  Matrix x1;
  Matrix x2;
  std::vector<double> v1;
  std::vector<double> v2;
  LogisticModel marginal;
  LogisticModel joint;
  KernelSpec kernel;
};

namespace detail {

inline Matrix join_xy(const Dataset& d) {
  Matrix out(d.rows(), d.dim() + 1);
  out.leftCols(d.dim()) = d.covariates;
  out.col(d.dim()) = d.responses.col(0);
  return out;
}

}  // namespace detail

/// Split both samples, fit the covariate and joint classifiers on the
/// training halves, score the calibration halves and equalize calibration
/// sizes. The score is the estimated f_1(y | x) / f_2(y | x), the reciprocal
/// of conditional_density_ratio_score, so that a difference in the
/// conditional laws pushes t_hat upward.
///
/// Draw order: split of d1, split of d2, then one uniformly chosen row to
/// drop per unit of size difference.
inline TwoSampleScores prepare_two_sample(const Dataset& d1, const Dataset& d2, const TwoSampleConfig& config,
                                          RandomStream& rng) {
  if (!d1.labeled() || !d2.labeled()) throw argument_error("two-sample test needs labeled samples");
  if (d1.dim() != d2.dim()) throw argument_error("two-sample test: covariate dimensions differ");
  const auto s1 = random_split(static_cast<std::size_t>(d1.rows()), config.split_ratio, rng);
  const auto s2 = random_split(static_cast<std::size_t>(d2.rows()), config.split_ratio, rng);
  const Dataset t1 = d1.subset(s1.train), t2 = d2.subset(s2.train);
  std::vector<std::size_t> c1 = s1.calibration, c2 = s2.calibration;
  while (c1.size() > c2.size()) c1.erase(c1.begin() + static_cast<std::ptrdiff_t>(rng.index(c1.size())));
  while (c2.size() > c1.size()) c2.erase(c2.begin() + static_cast<std::ptrdiff_t>(rng.index(c2.size())));
  const Dataset cal1 = d1.subset(c1), cal2 = d2.subset(c2);

  const Index d = d1.dim();
  Matrix xs(t1.rows() + t2.rows(), d);
  xs << t1.covariates, t2.covariates;
  Matrix xys(t1.rows() + t2.rows(), d + 1);
  xys << detail::join_xy(t1), detail::join_xy(t2);
  std::vector<int> labels(static_cast<std::size_t>(xs.rows()), 0);
  std::fill(labels.begin() + t1.rows(), labels.end(), 1);

  TwoSampleScores out{cal1.covariates, cal2.covariates, {}, {},
                      fit_logistic(xs, labels, config.l2), fit_logistic(xys, labels, config.l2),
                      KernelSpec(config.kernel,
                                 config.bandwidth > 0.0 ? config.bandwidth
                                                        : default_bandwidth(static_cast<std::size_t>(d1.rows()),
                                                                            static_cast<std::size_t>(d)),
                                 d)};
  for (Index i = 0; i < cal1.rows(); ++i) {
    out.v1.push_back(1.0 / conditional_density_ratio_score(out.joint, out.marginal, cal1.covariates.row(i).transpose(),
                                                           cal1.responses(i, 0)));
  }
  for (Index j = 0; j < cal2.rows(); ++j) {
    out.v2.push_back(1.0 / conditional_density_ratio_score(out.joint, out.marginal, cal2.covariates.row(j).transpose(),
                                                           cal2.responses(j, 0)));
  }
  return out;
}

/// One-sided test of P_{1,Y|X} = P_{2,Y|X}; rejects when 1 - Phi(t_hat) <= alpha.
inline TwoSampleResult conditional_two_sample_test(const Dataset& d1, const Dataset& d2, const TwoSampleConfig& config,
                                                   RandomStream& rng) {
  detail::check_alpha(config.alpha);
  const TwoSampleScores s = prepare_two_sample(d1, d2, config, rng);
  return weighted_statistic(s.x1, s.x2, s.v1, s.v2, s.kernel, rng, config.alpha);
}

}  // namespace cct
