#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "cct/scenarios.hpp"
#include "cct/two_sample.hpp"

using namespace cct;

namespace {

struct ConstantKernel {
  double weight(VectorRef, VectorRef) const { return 1.0; }
  Vector sample(VectorRef c, RandomStream&) const { return c; }
};

struct Naive {
  double numerator;
  double sigma_sq;
};

// Literal double and quadruple loops over the four-term display.
template <class K>
Naive naive(const Matrix& x1, const Matrix& x2, const std::vector<double>& v1, const std::vector<double>& v2,
            const K& k, const std::vector<double>& xi) {
  const std::size_t n = v1.size();
  const double nd = static_cast<double>(n);
  auto hd = [&](std::size_t i, std::size_t j) {
    const double d = 0.5 - (v1[i] < v2[j] ? 1.0 : 0.0) - xi[j] * (v1[i] == v2[j] ? 1.0 : 0.0);
    return k.weight(x1.row(static_cast<Index>(i)).transpose(), x2.row(static_cast<Index>(j)).transpose()) * d;
  };
  double num = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) num += hd(i, j);
  num /= nd * nd;
  double t1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < n; ++j) r += hd(i, j);
    t1 += (r / nd) * (r / nd);
  }
  double t2 = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += hd(i, j);
    t2 += (c / nd) * (c / nd);
  }
  double t3 = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
          if (a == i && b == j) t3 += hd(i, j) * hd(a, b);
        }
  double u = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) u += hd(i, j);
  u /= nd * nd;
  return {num, t1 / (nd * nd) + t2 / (nd * nd) - t3 / std::pow(nd, 4) - (2.0 / nd) * u * u};
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST(DHat, Examples) {
  EXPECT_EQ(d_hat(1, 2, 0.7), -0.5);
  EXPECT_EQ(d_hat(2, 1, 0.7), 0.5);
  EXPECT_DOUBLE_EQ(d_hat(1, 1, 0.3), 0.2);
}

TEST(WeightedStatistic, AllTiesAreDegenerate) {
  const Matrix x = Matrix::Zero(4, 1);
  const std::vector<double> v(4, 1.0), xi(4, 0.5);
  EXPECT_THROW(weighted_statistic_with_xi(x, x, v, v, ConstantKernel{}, xi), degenerate_variance_error);
}

TEST(WeightedStatistic, TwoByTwoHandInstance) {
  // D = [[1/2, -1/2], [1/2, 1/2]]
  const Matrix x = Matrix::Zero(2, 1);
  const std::vector<double> v1 = {1, 3}, v2 = {0, 2}, xi = {0.5, 0.5};
  const auto oracle = naive(x, x, v1, v2, ConstantKernel{}, xi);
  EXPECT_DOUBLE_EQ(oracle.numerator, 0.25);
  // rows {0, 1/2}, cols {1/2, 0}: 1/16 + 1/16 - 1/16 - 1/16 = 0
  EXPECT_DOUBLE_EQ(oracle.sigma_sq, 0.0);
  EXPECT_THROW(weighted_statistic_with_xi(x, x, v1, v2, ConstantKernel{}, xi), degenerate_variance_error);
}

TEST(WeightedStatistic, MatchesNaiveLoops) {
  RandomStream rng(12);
  int checked = 0;
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.index(5);
    Matrix x1(static_cast<Index>(n), 2), x2(static_cast<Index>(n), 2);
    std::vector<double> v1(n), v2(n), xi(n);
    for (std::size_t i = 0; i < n; ++i) {
      x1.row(static_cast<Index>(i)) << rng.normal(), rng.normal();
      x2.row(static_cast<Index>(i)) << rng.normal(), rng.normal();
      // coarse grid to force some ties
      v1[i] = std::floor(4 * rng.uniform());
      v2[i] = std::floor(4 * rng.uniform());
      xi[i] = rng.uniform();
    }
    const KernelSpec k(KernelFamily::gaussian, 0.5 + rng.uniform(), 2);
    const auto oracle = naive(x1, x2, v1, v2, k, xi);
    if (!(oracle.sigma_sq > 0.0)) {
      EXPECT_THROW(weighted_statistic_with_xi(x1, x2, v1, v2, k, xi), degenerate_variance_error);
      continue;
    }
    const auto res = weighted_statistic_with_xi(x1, x2, v1, v2, k, xi);
    EXPECT_LE(rel(res.numerator, oracle.numerator), 1e-12);
    EXPECT_LE(rel(res.sigma_sq_hat, oracle.sigma_sq), 1e-12);
    EXPECT_NEAR(res.t_hat, oracle.numerator / std::sqrt(oracle.sigma_sq), 1e-9);
    EXPECT_NEAR(res.p_value, 1.0 - normal_cdf(res.t_hat), 1e-12);
    EXPECT_EQ(res.reject, res.p_value <= 0.05);
    ++checked;
  }
  EXPECT_GT(checked, 50);
}

TEST(WeightedStatistic, SwapAntisymmetryAndScaleInvariance) {
  RandomStream rng(31);
  const std::size_t n = 40;
  Matrix x1(static_cast<Index>(n), 1), x2(static_cast<Index>(n), 1);
  std::vector<double> v1(n), v2(n), xi(n);
  for (std::size_t i = 0; i < n; ++i) {
    x1(static_cast<Index>(i), 0) = rng.normal();
    x2(static_cast<Index>(i), 0) = rng.normal();
    v1[i] = rng.normal();
    v2[i] = rng.normal() + 0.3;
    xi[i] = rng.uniform();
  }
  const KernelSpec k(KernelFamily::gaussian, 0.7, 1);
  const auto a = weighted_statistic_with_xi(x1, x2, v1, v2, k, xi);
  const auto b = weighted_statistic_with_xi(x2, x1, v2, v1, k, xi);
  EXPECT_NEAR(a.numerator, -b.numerator, 1e-15);

  std::vector<double> s1 = v1, s2 = v2;
  for (double& v : s1) v *= 3.5;
  for (double& v : s2) v *= 3.5;
  const auto c = weighted_statistic_with_xi(x1, x2, s1, s2, k, xi);
  EXPECT_EQ(c.numerator, a.numerator);
  EXPECT_EQ(c.sigma_sq_hat, a.sigma_sq_hat);
  EXPECT_EQ(c.t_hat, a.t_hat);
}

TEST(WeightedStatistic, RejectsBadSizes) {
  const Matrix x = Matrix::Zero(3, 1);
  const std::vector<double> v(3, 1.0), w(2, 1.0);
  EXPECT_THROW(weighted_statistic_with_xi(x, x, v, w, ConstantKernel{}, v), argument_error);
  const Matrix one = Matrix::Zero(1, 1);
  const std::vector<double> s(1, 1.0);
  EXPECT_THROW(weighted_statistic_with_xi(one, one, s, s, ConstantKernel{}, s), argument_error);
}

TEST(TwoSampleTest, IdenticalSamplesKeepLevel) {
  RandomStream base(1);
  const auto pair = gen_a3(200, 200, Hypothesis::null, base);
  const int reps = 500;
  int rejections = 0;
  TwoSampleConfig cfg;
  for (int r = 0; r < reps; ++r) {
    RandomStream rng(derive_seed(2, static_cast<std::uint64_t>(r)));
    rejections += conditional_two_sample_test(pair.first, pair.first, cfg, rng).reject;
  }
  // shared rows make the statistic conservative here, so only validity is checked
  EXPECT_LE(static_cast<double>(rejections) / reps, cfg.alpha + 0.02);
}

TEST(TwoSampleTest, UnequalSizesAreEqualized) {
  RandomStream rng(3);
  const auto pair = gen_a3(301, 200, Hypothesis::null, rng);
  const auto s = prepare_two_sample(pair.first, pair.second, TwoSampleConfig{}, rng);
  EXPECT_EQ(s.v1.size(), s.v2.size());
  EXPECT_EQ(s.x1.rows(), s.x2.rows());
  EXPECT_EQ(s.v1.size(), 100u);
}

TEST(TwoSampleTest, DetectsShiftedConditional) {
  int rejections = 0;
  for (int r = 0; r < 40; ++r) {
    RandomStream rng(derive_seed(4, static_cast<std::uint64_t>(r)));
    const auto pair = gen_a3(1000, 1000, Hypothesis::alternative, rng);
    rejections += conditional_two_sample_test(pair.first, pair.second, TwoSampleConfig{}, rng).reject;
  }
  EXPECT_GE(rejections, 20);
}
