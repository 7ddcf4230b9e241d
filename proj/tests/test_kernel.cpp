#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "cct/dataset.hpp"
#include "cct/kernel.hpp"
#include "cct/normal.hpp"
#include "cct/random.hpp"

using namespace cct;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index k = 0;
  for (double x : v) out(k++) = x;
  return out;
}

}  // namespace

TEST(Kernel, GaussianAtZeroDistance) {
  const KernelSpec k(KernelFamily::gaussian, 1.0, 1);
  EXPECT_NEAR(kernel_weight(k, vec({0}), vec({0})), 0.398942280401432678, 1e-15);
  EXPECT_DOUBLE_EQ(k.peak(), 1.0 / std::sqrt(2.0 * std::numbers::pi));
}

TEST(Kernel, GaussianAtUnitDistance) {
  const KernelSpec k(KernelFamily::gaussian, 1.0, 1);
  EXPECT_NEAR(kernel_weight(k, vec({0}), vec({1})), 0.241970724519143349, 1e-15);
}

TEST(Kernel, GaussianMultivariateClosedForm) {
  const double h = 0.7;
  const KernelSpec k(KernelFamily::gaussian, h, 3);
  const Vector x = vec({0.1, -0.4, 2.0}), y = vec({0.5, 0.3, 1.2});
  const double sq = (x - y).squaredNorm();
  const double expected = std::pow(2.0 * std::numbers::pi * h * h, -1.5) * std::exp(-sq / (2.0 * h * h));
  EXPECT_NEAR(kernel_weight(k, x, y), expected, 1e-15 * expected);
}

TEST(Kernel, BoxOutsideSupportIsZero) {
  const KernelSpec k(KernelFamily::box, 1.0, 1);
  EXPECT_EQ(kernel_weight(k, vec({0}), vec({2})), 0.0);
}

TEST(Kernel, BoxInsideSupportIsInverseBallVolume) {
  const KernelSpec k1(KernelFamily::box, 1.0, 1);
  EXPECT_DOUBLE_EQ(kernel_weight(k1, vec({0}), vec({1})), 1.0 / (2.0 * std::sqrt(2.0)));
  const KernelSpec k2(KernelFamily::box, 0.5, 2);
  // disc of radius sqrt(2) * 0.5
  EXPECT_NEAR(kernel_weight(k2, vec({0, 0}), vec({0.3, 0.3})), 1.0 / (std::numbers::pi * 0.5), 1e-14);
  EXPECT_NEAR(ball_volume(3, 2.0), 4.0 / 3.0 * std::numbers::pi * 8.0, 1e-12);
}

TEST(Kernel, Symmetric) {
  RandomStream rng(3);
  for (auto family : {KernelFamily::gaussian, KernelFamily::box}) {
    const KernelSpec k(family, 0.8, 4);
    for (int t = 0; t < 200; ++t) {
      Vector x(4), y(4);
      for (Index i = 0; i < 4; ++i) {
        x(i) = rng.normal();
        y(i) = rng.normal();
      }
      EXPECT_EQ(k.weight(x, y), k.weight(y, x));
      EXPECT_EQ(k.weight(x, x), k.peak());
    }
  }
}

TEST(Kernel, DimensionMismatchThrows) {
  const KernelSpec k(KernelFamily::gaussian, 1.0, 2);
  EXPECT_THROW(kernel_weight(k, vec({0}), vec({0, 1})), argument_error);
  RandomStream rng(1);
  EXPECT_THROW(sample_localization_point(k, vec({0}), rng), argument_error);
}

TEST(Kernel, InvalidSpecThrows) {
  EXPECT_THROW(KernelSpec(KernelFamily::gaussian, 0.0, 1), argument_error);
  EXPECT_THROW(KernelSpec(KernelFamily::gaussian, 1.0, 0), argument_error);
}

TEST(Sampler, SmallBandwidthReturnsCenter) {
  RandomStream rng(5);
  const KernelSpec k(KernelFamily::gaussian, 1e-12, 2);
  const Vector x = vec({0.3, -1.2});
  EXPECT_NEAR((sample_localization_point(k, x, rng) - x).norm(), 0.0, 1e-10);
}

TEST(Sampler, GaussianMomentsMonteCarlo) {
  RandomStream rng(11);
  const KernelSpec k1(KernelFamily::gaussian, 1.0, 1);
  const KernelSpec k2(KernelFamily::gaussian, 2.0, 1);
  const int draws = 100000;
  double mean = 0.0, sq = 0.0;
  for (int i = 0; i < draws; ++i) mean += sample_localization_point(k1, vec({0}), rng)(0);
  for (int i = 0; i < draws; ++i) {
    const double v = sample_localization_point(k2, vec({0}), rng)(0);
    sq += v * v;
  }
  EXPECT_LT(std::abs(mean / draws), 0.02);
  EXPECT_LT(std::abs(sq / draws - 4.0), 0.05 * 4.0);
}

TEST(Sampler, BoxDrawsAreUniformOnBall) {
  // Uniform on a d-ball of radius R: E||u||^2 = d R^2 / (d + 2), all inside.
  RandomStream rng(12);
  const Index d = 3;
  const double h = 0.5, R = std::sqrt(2.0) * h;
  const KernelSpec k(KernelFamily::box, h, d);
  const Vector c = Vector::Zero(d);
  const int draws = 100000;
  double sq = 0.0, inner = 0.0;
  for (int i = 0; i < draws; ++i) {
    const Vector u = k.sample(c, rng);
    ASSERT_LE(u.norm(), R * (1 + 1e-12));
    sq += u.squaredNorm();
    if (u.norm() <= R / 2.0) inner += 1.0;
  }
  EXPECT_NEAR(sq / draws, d * R * R / (d + 2.0), 0.01 * R * R);
  EXPECT_NEAR(inner / draws, 1.0 / 8.0, 0.005);
}

TEST(Bandwidth, Examples) {
  EXPECT_NEAR(default_bandwidth(2000, 1), 0.1, 1e-15);
  EXPECT_DOUBLE_EQ(default_bandwidth(2, 1), 1.0);
  EXPECT_DOUBLE_EQ(default_bandwidth(2, 7), 1.0);
  EXPECT_NEAR(default_bandwidth(1000, 5), std::pow(500.0, -1.0 / 7.0), 1e-15);
  EXPECT_NEAR(default_bandwidth(1000, 5), 0.4113, 1e-3);  // exact value 0.41156
  EXPECT_THROW(default_bandwidth(1, 1), argument_error);
}

TEST(Random, SeedDerivationIsDeterministicAndDistinct) {
  EXPECT_EQ(derive_seed(42, 7), derive_seed(42, 7));
  EXPECT_NE(derive_seed(42, 7), derive_seed(42, 8));
  EXPECT_NE(derive_seed(42, 7), derive_seed(43, 7));
  static_assert(splitmix64(0) == 0xE220A8397B1DCDAFULL);
  RandomStream a(9), b(9);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.uniform(), b.uniform());
}

TEST(Normal, CdfAndQuantile) {
  EXPECT_NEAR(normal_cdf(0.0), 0.5, 1e-16);
  EXPECT_NEAR(normal_cdf(1.0), 0.841344746068542948, 1e-15);
  EXPECT_NEAR(normal_upper_tail(1.6448536269514722), 0.05, 1e-15);
  for (double p : {1e-10, 0.001, 0.05, 0.3, 0.5, 0.77, 0.975, 1 - 1e-9}) {
    EXPECT_NEAR(normal_cdf(normal_quantile(p)), p, 1e-9 * std::max(p, 1e-3));
  }
}

TEST(Dataset, SplitSizesAndDisjointness) {
  RandomStream rng(4);
  const auto s = random_split(11, 0.5, rng);
  EXPECT_EQ(s.calibration.size(), 5u);
  EXPECT_EQ(s.train.size(), 6u);
  std::vector<int> seen(11, 0);
  for (auto i : s.train) ++seen[i];
  for (auto i : s.calibration) ++seen[i];
  for (int c : seen) EXPECT_EQ(c, 1);
  EXPECT_THROW(random_split(1, 0.5, rng), calibration_error);
}

TEST(Dataset, StandardizerUsesSampleStatistics) {
  Matrix x(3, 2);
  x << 1, 5, 2, 5, 3, 5;
  const auto s = Standardizer::fit(x);
  EXPECT_DOUBLE_EQ(s.mean(0), 2.0);
  EXPECT_DOUBLE_EQ(s.scale(0), 1.0);
  EXPECT_DOUBLE_EQ(s.scale(1), 1.0);  // zero variance keeps unit scale
  const Matrix z = s.apply_rows(x);
  EXPECT_DOUBLE_EQ(z(2, 0), 1.0);
  EXPECT_DOUBLE_EQ(z(0, 1), 0.0);
}
