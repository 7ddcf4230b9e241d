#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cct/dataset.hpp"
#include "cct/errors.hpp"
#include "cct/normal.hpp"
#include "cct/random.hpp"

namespace cct {

/// A simulated sample together with its ground truth.
struct GeneratedSample {
  Dataset data;
  /// Outlier flag per row (outlier scenarios only).
  std::vector<bool> is_outlier;
  /// Rule violation flag per row and component (label scenarios only).
  std::vector<std::vector<bool>> violates;
  /// Covariate columns the localization kernel should act on.
  std::vector<Index> weighting_columns;
};

struct TwoSamples {
  Dataset first;
  Dataset second;
};

enum class Hypothesis { null, alternative };

namespace detail {

inline std::vector<std::string> numbered(const std::string& prefix, std::size_t count) {
  std::vector<std::string> out;
  for (std::size_t k = 1; k <= count; ++k) out.push_back(prefix + std::to_string(k));
  return out;
}

/// Exactly round(fraction * n) flags set, at uniformly random positions.
inline std::vector<bool> exact_outlier_flags(std::size_t n, double fraction, RandomStream& rng) {
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  const auto perm = rng.permutation(n);
  std::vector<bool> flags(n, false);
  for (std::size_t i = 0; i < count; ++i) flags[perm[i]] = true;
  return flags;
}

inline double uniform(RandomStream& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform(); }

inline double rademacher(RandomStream& rng) { return rng.uniform() < 0.5 ? -1.0 : 1.0; }

}  // namespace detail

inline constexpr double kOutlierFraction = 0.1;

// ---------------------------------------------------------------------------
// Heteroscedastic linear regression with a time feature (weighting on t)
// ---------------------------------------------------------------------------

inline constexpr std::array<double, 9> kA1Beta = {0.5, -0.5, 0.5, -0.5, 0.5, 0.0, 0.0, 0.0, 0.0};

inline double a1_noise_scale(double t) { return 3.0 + 2.0 * std::sin(2.0 * std::numbers::pi * t); }
inline double a1_outlier_shift(double t) { return 3.0 * (3.0 + 1.5 * std::sin(2.0 * std::numbers::pi * t)); }

/// Covariates x1..x9 ~ U[-1, 1] and t ~ U[0, 1] (column 9);
/// Y = X beta + (3 + 2 sin(2 pi t)) eps, and outliers add r(t) * (+-1).
///
/// Draw order: outlier positions (if any), then per row x1..x9, t, eps and,
/// for outlier rows, the sign.
inline GeneratedSample gen_a1(std::size_t n, bool with_outliers, RandomStream& rng) {
  if (n < 1) throw argument_error("gen_a1: n must be positive");
  GeneratedSample out;
  out.is_outlier = with_outliers ? detail::exact_outlier_flags(n, kOutlierFraction, rng) : std::vector<bool>(n, false);
  out.data.covariates.resize(static_cast<Index>(n), 10);
  out.data.responses.resize(static_cast<Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Index>(i);
    double mean = 0.0;
    for (Index k = 0; k < 9; ++k) {
      const double x = detail::uniform(rng, -1.0, 1.0);
      out.data.covariates(r, k) = x;
      mean += kA1Beta[static_cast<std::size_t>(k)] * x;
    }
    const double t = rng.uniform();
    out.data.covariates(r, 9) = t;
    double y = mean + a1_noise_scale(t) * rng.normal();
    if (out.is_outlier[i]) y += a1_outlier_shift(t) * detail::rademacher(rng);
    out.data.responses(r, 0) = y;
  }
  out.data.covariate_names = detail::numbered("x", 9);
  out.data.covariate_names.push_back("t");
  out.data.response_names = {"y"};
  out.weighting_columns = {9};
  return out;
}

/// Oracle CDF of |Y - X beta| given t for inliers: 2 Phi(v / sigma(t)) - 1.
inline double a1_conditional_score_cdf(double t, double v) {
  if (v < 0.0) throw argument_error("a1_conditional_score_cdf: v must be nonnegative");
  if (std::isinf(v)) return 1.0;
  return 2.0 * normal_cdf(v / a1_noise_scale(t)) - 1.0;
}

// ---------------------------------------------------------------------------
// Spatial covariates without a response (weighting on s)
// ---------------------------------------------------------------------------

inline constexpr Index kB1Dim = 50;

inline double b1_variance(double s1, double s2) { return 0.2 + 0.9 * (s1 * s1 + s2 * s2); }

/// s ~ U[-1, 1]^2 (columns 0-1), X* | s ~ N(0, r(s) I_48), outliers use 4 r(s).
inline GeneratedSample gen_b1(std::size_t n, bool with_outliers, RandomStream& rng) {
  if (n < 1) throw argument_error("gen_b1: n must be positive");
  GeneratedSample out;
  out.is_outlier = with_outliers ? detail::exact_outlier_flags(n, kOutlierFraction, rng) : std::vector<bool>(n, false);
  out.data.covariates.resize(static_cast<Index>(n), kB1Dim);
  out.data.responses.resize(static_cast<Index>(n), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Index>(i);
    const double s1 = detail::uniform(rng, -1.0, 1.0);
    const double s2 = detail::uniform(rng, -1.0, 1.0);
    out.data.covariates(r, 0) = s1;
    out.data.covariates(r, 1) = s2;
    const double sd = std::sqrt(b1_variance(s1, s2) * (out.is_outlier[i] ? 4.0 : 1.0));
    for (Index k = 2; k < kB1Dim; ++k) out.data.covariates(r, k) = sd * rng.normal();
  }
  out.data.covariate_names = {"s1", "s2"};
  for (const auto& name : detail::numbered("x", kB1Dim - 2)) out.data.covariate_names.push_back(name);
  out.weighting_columns = {0, 1};
  return out;
}

// ---------------------------------------------------------------------------
// Two-component nonlinear regression for label screening
// ---------------------------------------------------------------------------

inline double a2_mean_1(const double* x) {
  return -2.0 * x[0] + 7.0 * x[1] * x[1] + 3.0 * std::exp(x[2] + 2.0 * x[3] * x[3]);
}
inline double a2_mean_2(const double* x) {
  return -6.0 * x[0] + 5.0 * x[1] * x[1] + 3.0 * std::exp(2.0 * x[2] + x[3] * x[3]);
}

/// Rule thresholds a_s (70% quantiles of Y_s), frozen from
/// a2_pilot_thresholds(kA2PilotSeed, kA2PilotDraws).
inline constexpr std::uint64_t kA2PilotSeed = 20241018;
inline constexpr std::size_t kA2PilotDraws = 1000000;
inline constexpr std::array<double, 2> kA2Thresholds = {11.892240050193246, 11.87431825695837};


/// X ~ U[-1, 1]^4; Y1 = -2X1 + 7X2^2 + 3exp(X3 + 2X4^2) + eps,
/// Y2 = -6X1 + 5X2^2 + 3exp(2X3 + X4^2) + eps. Rule: Y_s >= a_s.
inline GeneratedSample gen_a2(std::size_t n, RandomStream& rng, bool shared_noise = true) {
  if (n < 1) throw argument_error("gen_a2: n must be positive");
  GeneratedSample out;
  out.data.covariates.resize(static_cast<Index>(n), 4);
  out.data.responses.resize(static_cast<Index>(n), 2);
  out.violates.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Index>(i);
    double x[4];
    for (int k = 0; k < 4; ++k) {
      x[k] = detail::uniform(rng, -1.0, 1.0);
      out.data.covariates(r, k) = x[k];
    }
    const double e1 = rng.normal();
    const double e2 = shared_noise ? e1 : rng.normal();
    out.data.responses(r, 0) = a2_mean_1(x) + e1;
    out.data.responses(r, 1) = a2_mean_2(x) + e2;
    out.violates[i] = {out.data.responses(r, 0) < kA2Thresholds[0], out.data.responses(r, 1) < kA2Thresholds[1]};
  }
  out.data.covariate_names = detail::numbered("x", 4);
  out.data.response_names = {"y1", "y2"};
  out.weighting_columns = {0, 1, 2, 3};
  return out;
}

/// Empirical 70% quantiles (lower interpolation) of Y1 and Y2.
inline std::array<double, 2> a2_pilot_thresholds(std::uint64_t seed, std::size_t draws) {
  RandomStream rng(seed);
  std::vector<double> y1(draws), y2(draws);
  for (std::size_t i = 0; i < draws; ++i) {
    double x[4];
    for (double& v : x) v = detail::uniform(rng, -1.0, 1.0);
    const double e = rng.normal();
    y1[i] = a2_mean_1(x) + e;
    y2[i] = a2_mean_2(x) + e;
  }
  const auto pos = static_cast<std::size_t>(std::floor(0.7 * static_cast<double>(draws - 1)));
  std::nth_element(y1.begin(), y1.begin() + static_cast<std::ptrdiff_t>(pos), y1.end());
  std::nth_element(y2.begin(), y2.begin() + static_cast<std::ptrdiff_t>(pos), y2.end());
  return {y1[pos], y2[pos]};
}

// ---------------------------------------------------------------------------
// Two-sample conditional distribution designs (d = 5)
// ---------------------------------------------------------------------------

inline constexpr Index kTwoSampleDim = 5;
inline constexpr std::array<double, 5> kTwoSampleBeta = {1.0, 1.0, 1.0, -1.0, -1.0};

namespace detail {

inline std::vector<std::string> two_sample_names() { return numbered("x", 5); }

inline Dataset make_xy(Matrix x, std::vector<double> y) {
  Dataset d;
  d.covariates = std::move(x);
  d.responses.resize(d.covariates.rows(), 1);
  for (std::size_t i = 0; i < y.size(); ++i) d.responses(static_cast<Index>(i), 0) = y[i];
  d.covariate_names = two_sample_names();
  d.response_names = {"y"};
  return d;
}

// Draws one row from N(mean, sd^2 I).
inline void fill_normal_row(Matrix& x, Index r, const std::array<double, 5>& mean, double sd, RandomStream& rng) {
  for (Index k = 0; k < kTwoSampleDim; ++k) x(r, k) = mean[static_cast<std::size_t>(k)] + sd * rng.normal();
}

inline constexpr std::array<double, 5> kZero5 = {0, 0, 0, 0, 0};
inline constexpr std::array<double, 5> kMixShift = {0.5, 0.5, -0.5, -0.5, 0.0};

// Sample-1 mixture 0.5 N(0, I) + 0.5 N(mu, I).
inline Matrix mixture_sample_1(std::size_t n, RandomStream& rng) {
  Matrix x(static_cast<Index>(n), kTwoSampleDim);
  for (std::size_t i = 0; i < n; ++i) {
    fill_normal_row(x, static_cast<Index>(i), rng.uniform() < 0.5 ? kZero5 : kMixShift, 1.0, rng);
  }
  return x;
}

// Sample-2 mixture 0.5 N(0, I) + 0.5 N(0, 1.5 I).
inline Matrix mixture_sample_2(std::size_t n, RandomStream& rng) {
  Matrix x(static_cast<Index>(n), kTwoSampleDim);
  for (std::size_t i = 0; i < n; ++i) {
    fill_normal_row(x, static_cast<Index>(i), kZero5, rng.uniform() < 0.5 ? 1.0 : std::sqrt(1.5), rng);
  }
  return x;
}

inline double student_t5(RandomStream& rng) {
  const double z = rng.normal();
  return z / std::sqrt(rng.chi_squared(5.0) / 5.0);
}

}  // namespace detail

/// X1 ~ N(0, I), X2 ~ N((1, 1, -1, -1, 0), I); Y = a + X beta + N(0, 1), with
/// a = 0 for sample 1 and a = 0 (null) or 0.5 (alternative) for sample 2.
///
/// Draw order: sample 1 rows (x then eps), then sample 2 rows.
inline TwoSamples gen_a3(std::size_t n, std::size_t m, Hypothesis h, RandomStream& rng) {
  constexpr std::array<double, 5> mu = {1.0, 1.0, -1.0, -1.0, 0.0};
  auto draw = [&](std::size_t count, const std::array<double, 5>& mean, double shift) {
    Matrix x(static_cast<Index>(count), kTwoSampleDim);
    std::vector<double> y(count);
    for (std::size_t i = 0; i < count; ++i) {
      const auto r = static_cast<Index>(i);
      detail::fill_normal_row(x, r, mean, 1.0, rng);
      double lin = shift;
      for (Index k = 0; k < kTwoSampleDim; ++k) lin += kTwoSampleBeta[static_cast<std::size_t>(k)] * x(r, k);
      y[i] = lin + rng.normal();
    }
    return detail::make_xy(std::move(x), std::move(y));
  };
  TwoSamples out;
  out.first = draw(n, detail::kZero5, 0.0);
  out.second = draw(m, mu, h == Hypothesis::alternative ? 0.5 : 0.0);
  return out;
}

inline double b3_mean(const double* x) {
  return kTwoSampleBeta[0] * x[0] + kTwoSampleBeta[1] * x[1] + kTwoSampleBeta[2] * x[2] * x[2] +
         kTwoSampleBeta[3] * x[3] * x[3] + kTwoSampleBeta[4] * x[4] * x[4] * x[4];
}

/// 0.8 (1 - 0.1 ||x||^2), the sample-2 intercept under the alternative.
inline double b3_alternative_shift(const double* x) {
  double sq = 0.0;
  for (int k = 0; k < 5; ++k) sq += x[k] * x[k];
  return 0.8 * (1.0 - 0.1 * sq);
}

/// Mixture covariates, polynomial mean, t(5) noise.
///
/// Draw order: all sample-1 covariates, all sample-1 noise, then the same for
/// sample 2.
inline TwoSamples gen_b3(std::size_t n, std::size_t m, Hypothesis h, RandomStream& rng) {
  auto respond = [&](const Matrix& x, bool shifted) {
    std::vector<double> y(static_cast<std::size_t>(x.rows()));
    for (Index i = 0; i < x.rows(); ++i) {
      const double* row = x.row(i).data();
      y[static_cast<std::size_t>(i)] = (shifted ? b3_alternative_shift(row) : 0.0) + b3_mean(row) + detail::student_t5(rng);
    }
    return y;
  };
  TwoSamples out;
  Matrix x1 = detail::mixture_sample_1(n, rng);
  auto y1 = respond(x1, false);
  out.first = detail::make_xy(std::move(x1), std::move(y1));
  Matrix x2 = detail::mixture_sample_2(m, rng);
  auto y2 = respond(x2, h == Hypothesis::alternative);
  out.second = detail::make_xy(std::move(x2), std::move(y2));
  return out;
}

// Cubic B-spline basis with 6 uniform interior knots on [-3, 3]; 10 basis
// functions per coordinate.
inline constexpr int kSplineDegree = 3;
inline constexpr int kSplineBasis = 10;
inline constexpr double kSplineLo = -3.0;
inline constexpr double kSplineHi = 3.0;

/// Spline coefficients per coordinate, drawn once from a fixed-seed
/// standard normal and frozen.
inline constexpr double kC3Coefficients[5][kSplineBasis] = {
    {-1.0669780515657425, 0.84770855649957433, 0.031562185077359306, 0.44635262415717042, 0.94428829694438299,
     -0.058151077349772338, 0.91830387378758915, 0.061458293378816038, 0.25994877599989985, 0.56224061529233404},
    {0.80849382421387539, -1.6837087644010511, -0.21417033878330774, 0.95328003171078968, -0.6074189491052463,
     -0.96127418046930835, -0.49214434466718654, -0.28958696705209158, 0.36834426718543434, -0.76670581743397015},
    {0.33643618299910905, -0.36826228146807627, 2.0640615174041161, -1.5607270766525887, 1.8710733014931151,
     -1.2788543684556739, 0.5128089311730154, 1.1539669440820699, 0.99814421317571655, 1.3141887707392232},
    {-0.20717028756361006, -0.20987597787663353, 1.2872054570392926, 0.92842640153735012, 0.92479367798204626,
     -0.010224045636360963, -0.69063833484847581, 0.94006619787046919, 0.54315052688417287, -0.073084873601768061},
    {-1.7024238567259695, 0.78682240496079192, 2.0561062272190673, 0.15560206308543723, -0.59607467552234472,
     -0.083554010775126031, -0.93662714460162921, -0.075135055227569622, 0.77724688971030331, 0.24623384564243414},
};

/// Clamped knot vector: -3 (x4), six interior knots, 3 (x4).
inline std::array<double, kSplineBasis + kSplineDegree + 1> spline_knots() {
  std::array<double, kSplineBasis + kSplineDegree + 1> t{};
  for (int i = 0; i <= kSplineDegree; ++i) {
    t[static_cast<std::size_t>(i)] = kSplineLo;
    t[static_cast<std::size_t>(kSplineBasis + i)] = kSplineHi;
  }
  for (int k = 1; k <= 6; ++k) t[static_cast<std::size_t>(kSplineDegree + k)] = kSplineLo + (kSplineHi - kSplineLo) * k / 7.0;
  return t;
}

/// de Boor evaluation of sum_b coef[b] B_b(x); x is clamped to [-3, 3].
inline double spline_value(const double* coef, double x) {
  static const auto t = spline_knots();
  x = std::clamp(x, kSplineLo, kSplineHi);
  // Knot span l with t[l] <= x < t[l + 1], l in [p, nbasis - 1].
  int l = kSplineDegree;
  while (l < kSplineBasis - 1 && x >= t[static_cast<std::size_t>(l + 1)]) ++l;
  double d[kSplineDegree + 1];
  for (int j = 0; j <= kSplineDegree; ++j) d[j] = coef[j + l - kSplineDegree];
  for (int r = 1; r <= kSplineDegree; ++r) {
    for (int j = kSplineDegree; j >= r; --j) {
      const double left = t[static_cast<std::size_t>(j + l - kSplineDegree)];
      const double right = t[static_cast<std::size_t>(j + 1 + l - r)];
      const double a = (x - left) / (right - left);
      d[j] = (1.0 - a) * d[j - 1] + a * d[j];
    }
  }
  return d[kSplineDegree];
}

/// theta(x) = sum_k spline_k(x_k).
inline double c3_theta(const double* x) {
  double sum = 0.0;
  for (int k = 0; k < 5; ++k) sum += spline_value(kC3Coefficients[k], x[k]);
  return sum;
}

/// Mixture covariates, additive spline mean, noise N(0, 4 / (1 + x1^2));
/// under the alternative sample 2 uses variance 1.5 / (1 + x1^2).
inline TwoSamples gen_c3(std::size_t n, std::size_t m, Hypothesis h, RandomStream& rng) {
  auto respond = [&](const Matrix& x, double numerator) {
    std::vector<double> y(static_cast<std::size_t>(x.rows()));
    for (Index i = 0; i < x.rows(); ++i) {
      const double* row = x.row(i).data();
      y[static_cast<std::size_t>(i)] = c3_theta(row) + std::sqrt(numerator / (1.0 + row[0] * row[0])) * rng.normal();
    }
    return y;
  };
  TwoSamples out;
  Matrix x1 = detail::mixture_sample_1(n, rng);
  auto y1 = respond(x1, 4.0);
  out.first = detail::make_xy(std::move(x1), std::move(y1));
  Matrix x2 = detail::mixture_sample_2(m, rng);
  auto y2 = respond(x2, h == Hypothesis::alternative ? 1.5 : 4.0);
  out.second = detail::make_xy(std::move(x2), std::move(y2));
  return out;
}

// ---------------------------------------------------------------------------
// Real-data partition rules
// ---------------------------------------------------------------------------

enum class SplitRule { random, tilt, response };

/// Default exponential tilting direction for five covariates.
inline const std::vector<double> kDefaultTilt = {-1.0, 0.0, 0.0, 0.0, 1.0};

/// Partition one dataset into two samples.
///
/// random:   uniform partition into floor(n/2) and ceil(n/2) rows.
/// tilt:     random partition, then the second group is replaced by
///           round(0.25 |group 2|) draws with replacement, probability
///           proportional to exp(z' tilt) with z the standardized covariates.
/// response: sort by the first response, lower floor(n/2) rows to group 1.
inline TwoSamples split_rules(const Dataset& data, SplitRule rule, RandomStream& rng,
                              const std::vector<double>& tilt = kDefaultTilt) {
  const auto n = static_cast<std::size_t>(data.rows());
  if (n < 2) throw argument_error("split_rules: need at least two rows");
  const std::size_t half = n / 2;
  TwoSamples out;
  if (rule == SplitRule::response) {
    if (!data.labeled()) throw argument_error("split_rules: response rule needs a response column");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return data.responses(static_cast<Index>(a), 0) < data.responses(static_cast<Index>(b), 0); });
    out.first = data.subset(std::span(order).first(half));
    out.second = data.subset(std::span(order).subspan(half));
    return out;
  }
  const auto perm = rng.permutation(n);
  std::vector<std::size_t> g1(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(half));
  std::vector<std::size_t> g2(perm.begin() + static_cast<std::ptrdiff_t>(half), perm.end());
  out.first = data.subset(g1);
  if (rule == SplitRule::random) {
    out.second = data.subset(g2);
    return out;
  }
  if (tilt.size() != static_cast<std::size_t>(data.dim())) {
    throw argument_error("split_rules: tilt vector length must equal the covariate dimension");
  }
  const Standardizer scaler = Standardizer::fit(data.covariates);
  const Eigen::Map<const Vector> a(tilt.data(), static_cast<Index>(tilt.size()));
  std::vector<double> w(g2.size());
  for (std::size_t i = 0; i < g2.size(); ++i) {
    const Vector z = data.covariates.row(static_cast<Index>(g2[i])).transpose();
    w[i] = std::exp(scaler.apply(z).dot(a));
  }
  std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
  const auto draws = static_cast<std::size_t>(std::llround(0.25 * static_cast<double>(g2.size())));
  std::vector<std::size_t> chosen(draws);
  for (auto& c : chosen) c = g2[pick(rng.engine())];
  out.second = data.subset(chosen);
  return out;
}

}  // namespace cct
