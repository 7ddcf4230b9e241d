#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "cct/outlier_detection.hpp"
#include "cct/scenarios.hpp"

using namespace cct;

namespace {

struct ConstantKernel {
  double weight(VectorRef, VectorRef) const { return 1.0; }
  Vector sample(VectorRef c, RandomStream&) const { return c; }
};

// Brute force over every r in 0..m.
std::vector<std::size_t> brute_force_bh(const std::vector<double>& p, double alpha) {
  const std::size_t m = p.size();
  std::size_t best = 0;
  for (std::size_t r = 0; r <= m; ++r) {
    std::size_t count = 0;
    for (double q : p) count += q <= alpha * r / m;
    if (count >= r) best = r;
  }
  std::vector<std::size_t> out;
  if (best == 0) return out;
  for (std::size_t j = 0; j < m; ++j) {
    if (p[j] <= alpha * best / m) out.push_back(j);
  }
  return out;
}

// Weighted rank with the randomization term switched by `indicator`.
double direct_aux(const Matrix& x, const std::vector<double>& v, const Vector& xj, double score_j,
                  const KernelSpec& k, const Vector& xt, double xi, bool indicator) {
  double num = 0.0, den = 0.0;
  for (Index i = 0; i < x.rows(); ++i) {
    const double w = k.weight(x.row(i).transpose(), xt);
    den += w;
    if (score_j <= v[static_cast<std::size_t>(i)]) num += w;
  }
  const double wt = k.weight(xj, xt);
  return (num + (indicator ? xi * wt : 0.0)) / (den + wt);
}

}  // namespace

TEST(BH, Examples) {
  EXPECT_EQ(bh_procedure(std::vector<double>{0.01, 0.02, 0.5}, 0.15), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(bh_rejection_count(std::vector<double>{0.01, 0.02, 0.5}, 0.15), 2u);
  EXPECT_TRUE(bh_procedure(std::vector<double>(5, 1.0), 0.1).empty());
  EXPECT_EQ(bh_procedure(std::vector<double>(4, 0.0), 0.1).size(), 4u);
  EXPECT_TRUE(bh_procedure(std::vector<double>{}, 0.1).empty());
  EXPECT_THROW(bh_procedure(std::vector<double>{0.1}, 0.0), argument_error);
}

TEST(BH, MatchesBruteForce) {
  RandomStream rng(2);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t m = 1 + rng.index(50);
    std::vector<double> p(m);
    for (double& q : p) {
      // mix of small values, exact grid points and ties
      const double u = rng.uniform();
      q = u < 0.3 ? 0.2 * rng.uniform() : u < 0.4 ? 0.1 * static_cast<double>(rng.index(m + 1)) / m : rng.uniform();
    }
    const double alpha = 0.05 + 0.3 * rng.uniform();
    ASSERT_EQ(bh_procedure(p, alpha), brute_force_bh(p, alpha)) << "trial " << t;
  }
}

TEST(AuxiliaryPValue, IndicatorCases) {
  Matrix x(2, 1);
  x << 0.0, 2.0;
  const CalibrationSet calib(x, {1.0, 3.0});
  const KernelSpec k(KernelFamily::gaussian, 1.0, 1);
  const Vector xj = Vector::Constant(1, 1.0), xt = Vector::Constant(1, 0.7);
  const auto pj = localized_p_value_at(calib, xj, 2.0, k, xt, 0.4);
  EXPECT_DOUBLE_EQ(auxiliary_p_value(pj, 2.0, 2.5), pj.value);
  EXPECT_DOUBLE_EQ(auxiliary_p_value(pj, 2.0, 2.0), pj.value);
  EXPECT_NEAR(auxiliary_p_value(pj, 2.0, 1.5), pj.value - 0.4 * k.weight(xj, xt) / pj.denominator_weight_sum, 1e-15);
  EXPECT_NEAR(auxiliary_p_value(pj, 2.0, 1.5), direct_aux(x, {1.0, 3.0}, xj, 2.0, k, xt, 0.4, false), 1e-15);
  EXPECT_NEAR(auxiliary_p_value(pj, 2.0, 9.0), direct_aux(x, {1.0, 3.0}, xj, 2.0, k, xt, 0.4, true), 1e-15);
}

TEST(PruningThreshold, FixedPoint) {
  const std::vector<std::size_t> initial = {0, 1, 2, 3};
  const std::vector<double> zeta = {0.1, 0.9, 0.5, 0.99};
  const std::vector<std::size_t> sizes = {4, 4, 4, 4};
  // c = {0.4, 3.6, 2, 3.96}: #{c <= 3} = 2, #{c <= 4} = 4 -> r* = 4
  EXPECT_EQ(pruning_threshold(initial, zeta, sizes), 4u);
  const std::vector<std::size_t> big = {10, 10, 10, 10};
  // c = {1, 9, 5, 9.9}: #{c <= 1} = 1, #{c <= 2} = 1 -> r* = 1
  EXPECT_EQ(pruning_threshold(initial, zeta, big), 1u);
  EXPECT_EQ(pruning_threshold(std::vector<std::size_t>{}, zeta, sizes), 0u);
}

namespace {

struct Instance {
  CalibrationSet calib;
  Matrix test_x;
  std::vector<double> scores;
  std::vector<bool> outlier;
};

Instance random_instance(std::uint64_t seed, std::size_t n, std::size_t m) {
  RandomStream rng(seed);
  Matrix cx(static_cast<Index>(n), 1), tx(static_cast<Index>(m), 1);
  std::vector<double> cv(n), tv(m);
  std::vector<bool> outlier(m);
  for (std::size_t i = 0; i < n; ++i) {
    cx(static_cast<Index>(i), 0) = rng.uniform();
    cv[i] = std::abs(rng.normal());
  }
  for (std::size_t j = 0; j < m; ++j) {
    tx(static_cast<Index>(j), 0) = rng.uniform();
    outlier[j] = rng.uniform() < 0.3;
    tv[j] = std::abs(rng.normal()) + (outlier[j] ? 3.0 : 0.0);
  }
  return {CalibrationSet(cx, cv), tx, tv, outlier};
}

}  // namespace

TEST(DetectOutliers, MatchesDirectDefinition) {
  const auto inst = random_instance(5, 60, 25);
  const KernelSpec k(KernelFamily::gaussian, 0.3, 1);
  const double alpha = 0.2;
  RandomStream rng(6), replay(6);
  const auto run = detect_outliers_from_scores(inst.calib, inst.test_x, inst.scores, alpha, k, rng);
  const std::size_t m = inst.scores.size();

  std::vector<Vector> xt(m);
  std::vector<double> xi(m), zeta(m);
  for (std::size_t j = 0; j < m; ++j) {
    xt[j] = k.sample(inst.test_x.row(static_cast<Index>(j)).transpose(), replay);
    xi[j] = replay.uniform();
  }
  for (double& z : zeta) z = replay.uniform();
  EXPECT_EQ(run.zeta, zeta);

  std::vector<double> cv(inst.calib.scores().begin(), inst.calib.scores().end());
  auto aux = [&](std::size_t l, std::size_t j) {  // p^{(j)}_{L,l}
    return direct_aux(inst.calib.covariates(), cv, inst.test_x.row(static_cast<Index>(l)).transpose(),
                      inst.scores[l], k, xt[l], xi[l], inst.scores[l] <= inst.scores[j]);
  };
  std::vector<std::size_t> sizes(m);
  std::vector<std::size_t> initial;
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<double> shadow(m);
    for (std::size_t l = 0; l < m; ++l) shadow[l] = l == j ? 0.0 : aux(l, j);
    sizes[j] = brute_force_bh(shadow, alpha).size();
    const double pj = aux(j, j);
    EXPECT_NEAR(run.p_values[j].value, pj, 1e-14);
    if (pj <= alpha * sizes[j] / m) initial.push_back(j);
  }
  EXPECT_EQ(run.aux_set_sizes, sizes);
  EXPECT_EQ(run.initial_set, initial);

  std::size_t r_star = 0;
  for (std::size_t r = 1; r <= initial.size(); ++r) {
    std::size_t count = 0;
    for (std::size_t j : initial) count += zeta[j] * sizes[j] <= r;
    if (count >= r) r_star = r;
  }
  EXPECT_EQ(run.r_star, r_star);
  std::vector<std::size_t> final_set;
  for (std::size_t j : initial) {
    if (zeta[j] * sizes[j] <= r_star) final_set.push_back(j);
  }
  EXPECT_EQ(run.final_set, final_set);
  EXPECT_FALSE(run.final_set.empty());
}

TEST(DetectOutliers, RunInvariants) {
  for (std::uint64_t seed = 10; seed < 30; ++seed) {
    const auto inst = random_instance(seed, 80, 40);
    const KernelSpec k(KernelFamily::gaussian, 0.25, 1);
    RandomStream rng(seed + 100);
    const double alpha = 0.1;
    const auto run = detect_outliers_from_scores(inst.calib, inst.test_x, inst.scores, alpha, k, rng);
    const std::size_t m = inst.scores.size();
    EXPECT_TRUE(std::includes(run.initial_set.begin(), run.initial_set.end(), run.final_set.begin(),
                              run.final_set.end()));
    for (std::size_t j : run.final_set) {
      EXPECT_LE(run.p_values[j].value, alpha * run.aux_set_sizes[j] / m);
      EXPECT_LE(run.zeta[j] * run.aux_set_sizes[j], static_cast<double>(run.r_star));
    }
    for (std::size_t s : run.aux_set_sizes) EXPECT_GE(s, 1u);
    // recompute r* from the final set alone
    EXPECT_EQ(pruning_threshold(run.final_set, run.zeta, run.aux_set_sizes), run.r_star);
    EXPECT_GE(run.final_set.size(), run.r_star);
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t l = 0; l < m; ++l) {
        const double a = auxiliary_p_value(run.p_values[j], inst.scores[j], inst.scores[l]);
        EXPECT_LE(a, run.p_values[j].value);
        if (inst.scores[j] <= inst.scores[l]) {
          EXPECT_EQ(a, run.p_values[j].value);
        } else {
          EXPECT_LT(a, run.p_values[j].value);
        }
      }
    }
  }
}

TEST(DetectOutliers, PruningInactiveWithZeroZeta) {
  // Constant weights and distinct scores: aux set sizes are all the BH count
  // of the zeroed vector; zeta = 0 keeps every initial rejection.
  const auto inst = random_instance(40, 50, 20);
  RandomStream rng(41);
  auto run = detect_outliers_from_scores(inst.calib, inst.test_x, inst.scores, 0.2, ConstantKernel{}, rng);
  std::vector<double> zero(run.zeta.size(), 0.0);
  EXPECT_EQ(pruning_threshold(run.initial_set, zero, run.aux_set_sizes), run.initial_set.size());
}

TEST(DetectOutliers, SingleTestPoint) {
  const auto inst = random_instance(50, 40, 1);
  for (std::uint64_t s = 0; s < 50; ++s) {
    RandomStream rng(s);
    const auto run = detect_outliers_from_scores(inst.calib, inst.test_x, inst.scores, 0.3,
                                                 KernelSpec(KernelFamily::gaussian, 0.2, 1), rng);
    EXPECT_EQ(run.aux_set_sizes[0], 1u);
    const bool expected = run.p_values[0].value <= 0.3;
    EXPECT_EQ(run.final_set.size(), expected ? 1u : 0u);
    EXPECT_EQ(run.r_star, expected ? 1u : 0u);
  }
}

TEST(DetectOutliers, GlobalNullFdr) {
  const double alpha = 0.1;
  const int reps = 200;
  double fdr = 0.0;
  OutlierDetectionConfig cfg;
  cfg.alpha = alpha;
  cfg.weighting_columns = {9};
  cfg.score.kind = OutlierScoreKind::linear_residual;
  for (int r = 0; r < reps; ++r) {
    RandomStream rng(derive_seed(77, static_cast<std::uint64_t>(r)));
    const auto clean = gen_a1(400, false, rng);
    const auto test = gen_a1(100, false, rng);
    const auto run = detect_outliers(clean.data, test.data, cfg, rng);
    fdr += fdp_and_power(run, test.is_outlier).fdp;
  }
  EXPECT_LE(fdr / reps, alpha + 0.02);
}

TEST(DetectOutliers, FindsPlantedOutliersAndIsDeterministic) {
  OutlierDetectionConfig cfg;
  cfg.alpha = 0.2;
  cfg.weighting_columns = {9};
  cfg.score.kind = OutlierScoreKind::linear_residual;
  auto once = [&](std::uint64_t seed) {
    RandomStream rng(seed);
    const auto clean = gen_a1(1000, false, rng);
    const auto test = gen_a1(200, true, rng);
    const auto run = detect_outliers(clean.data, test.data, cfg, rng);
    return std::pair{run.final_set, fdp_and_power(run, test.is_outlier)};
  };
  const auto [a, qa] = once(3);
  const auto [b, qb] = once(3);
  EXPECT_EQ(a, b);
  EXPECT_GT(qa.power, 0.1);
}

TEST(FdpAndPower, Examples) {
  const std::vector<bool> truth = {true, true, false, true};
  // inlier is index 2
  const auto q = fdp_and_power(std::vector<std::size_t>{1, 2}, truth);
  EXPECT_DOUBLE_EQ(q.fdp, 0.5);
  EXPECT_DOUBLE_EQ(q.power, 1.0 / 3.0);
  const auto none = fdp_and_power(std::vector<std::size_t>{}, truth);
  EXPECT_DOUBLE_EQ(none.fdp, 0.0);
  EXPECT_DOUBLE_EQ(none.power, 0.0);
  const auto exact = fdp_and_power(std::vector<std::size_t>{0, 1, 3}, truth);
  EXPECT_DOUBLE_EQ(exact.fdp, 0.0);
  EXPECT_DOUBLE_EQ(exact.power, 1.0);
  EXPECT_THROW(fdp_and_power(std::vector<std::size_t>{7}, truth), argument_error);
}

TEST(ConformalBH, UnweightedBaseline) {
  const std::vector<double> cal = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  // p = (#{V >= v} + 1) / 10: 0.1, 0.1, 1.0
  const auto r = conformal_bh(cal, std::vector<double>{100, 50, 0}, 0.2);
  EXPECT_EQ(r, (std::vector<std::size_t>{0, 1}));
}

TEST(OutlierScorer, FamilyDefaults) {
  OutlierScoreSpec spec;
  EXPECT_EQ(spec.effective_k(), 50u);
  spec.kind = OutlierScoreKind::knn_one_class;
  EXPECT_EQ(spec.effective_k(), 5u);
  Dataset unlabeled;
  unlabeled.covariates = Matrix::Zero(10, 2);
  unlabeled.responses = Matrix(10, 0);
  EXPECT_NO_THROW(OutlierScorer(spec, unlabeled));
  spec.kind = OutlierScoreKind::knn_cqr;
  EXPECT_THROW(OutlierScorer(spec, unlabeled), argument_error);
}
