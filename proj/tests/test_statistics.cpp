#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "betagas/sampler.hpp"
#include "betagas/statistics.hpp"
#include "oracles.hpp"

using namespace betagas;

namespace {

const EquilibriumMeasure& semicircle() {
  static const EquilibriumMeasure mu = equilibrium_measure(Potential::polynomial({0, 0, 0.5}, 2.0));
  return mu;
}

double bump6(double x) { return std::abs(x) < 1.0 ? std::pow(1.0 - x * x, 6) : 0.0; }
double dbump6(double x) { return std::abs(x) < 1.0 ? -12.0 * x * std::pow(1.0 - x * x, 5) : 0.0; }

}  // namespace

TEST(LinearStatistic, ZeroFunctionGivesZero) {
  const auto q = quantiles(semicircle(), 200);
  EXPECT_EQ(centered_linear_statistic(q.gamma, TestFunction::zero(), {0.0, 0.3}, semicircle(), 200), 0.0);
}

TEST(LinearStatistic, QuantileConfigurationIsSmall) {
  const auto q = quantiles(semicircle(), 200);
  const double m = centered_linear_statistic(q.gamma, TestFunction::bump(6), {0.0, 0.3}, semicircle(), 200);
  EXPECT_LE(std::abs(m), 5.0);
}

TEST(LinearStatistic, MeanTermMatchesRiemannOracle) {
  for (std::size_t N : {100u, 400u, 5000u}) {
    for (double alpha : {0.3, 0.5}) {
      const LinearStatistic stat(TestFunction::bump(6), {0.4, alpha}, semicircle(), N);
      const double w = std::pow(static_cast<double>(N), -alpha);
      const double oracle_v = static_cast<double>(N) *
          oracle::midpoint([&](double x) { return bump6((x - 0.4) / w) * oracle::semicircle(x, 2.0); },
                           0.4 - w, 0.4 + w, 200'000);
      EXPECT_NEAR(stat.mean_term(), oracle_v, 1e-8 * oracle_v);
    }
  }
}

TEST(LinearStatistic, WindowedSumEqualsFullSumExactly) {
  const LinearStatistic stat(TestFunction::bump(6), {-0.3, 0.3}, semicircle(), 300);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> jitter(0.0, 0.002);
  const auto q = quantiles(semicircle(), 300);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> c = q.gamma;
    for (auto& x : c) x += jitter(rng);
    std::sort(c.begin(), c.end());
    EXPECT_EQ(stat.window_sum(c), stat.full_sum(c));
  }
}

TEST(LinearStatistic, WindowLeavingBulkIsRejected) {
  EXPECT_THROW(LinearStatistic(TestFunction::bump(6), {1.9, 0.1}, semicircle(), 10), DomainError);
  EXPECT_THROW(LinearStatistic(TestFunction::bump(6), {2.5, 0.3}, semicircle(), 100), DomainError);
  EXPECT_THROW(LinearStatistic(TestFunction::bump(6), {0.0, 1.0}, semicircle(), 100), DomainError);
  const LinearStatistic ok(TestFunction::bump(6), {0.0, 0.3}, semicircle(), 100);
  EXPECT_THROW(ok(std::vector<double>(99, 0.0)), ShapeError);
}

TEST(SigmaF, ZeroFunction) { EXPECT_EQ(sigma_f_squared(TestFunction::zero(), 2.0), 0.0); }

TEST(SigmaF, Bump6MatchesRiemannOracle) {
  const double oracle_v = oracle::dirichlet_riemann(bump6, dbump6, 1.0, 4000) / (2.0 * 2.0 * oracle::pi * oracle::pi);
  EXPECT_NEAR(sigma_f_squared(TestFunction::bump(6), 2.0), oracle_v, 1e-5 * oracle_v);
}

TEST(SigmaF, Bump6MatchesFourierOracle) {
  // ∬((f(x) − f(y))/(x − y))² dx dy = ∫|ξ||f̂(ξ)|² dξ by Plancherel.
  const double fourier = oracle::dirichlet_fourier(bump6, 1.0, 400.0, 40000, 2000);
  const double sigma_fourier = fourier / (2.0 * 2.0 * oracle::pi * oracle::pi);
  const double s = sigma_f_squared(TestFunction::bump(6), 2.0);
  EXPECT_NEAR(s, sigma_fourier, 1e-5 * s);
}

TEST(SigmaF, ScaleAndTranslationInvariance) {
  const TestFunction f = TestFunction::poly_bump({1.0, 0.5, -0.3}, 7);
  const double s0 = sigma_f_squared(f, 2.0);
  for (double s : {2.0, 5.0}) EXPECT_NEAR(sigma_f_squared(f.scaled(s), 2.0), s0, 1e-8 * s0);
  for (double t : {0.3, -1.7}) EXPECT_NEAR(sigma_f_squared(f.shifted(t), 2.0), s0, 1e-8 * s0);
}

TEST(SigmaF, BetaScaling) {
  const TestFunction f = TestFunction::bump(8);
  const double ref = sigma_f_squared(f, 2.0) * 2.0;
  for (double beta : {0.5, 1.0, 4.0, 7.3}) EXPECT_NEAR(sigma_f_squared(f, beta) * beta, ref, 1e-10 * ref);
}

TEST(SigmaF, PositiveOnBuiltInFamily) {
  for (int k : {6, 7, 8, 12}) EXPECT_GT(sigma_f_squared(TestFunction::bump(k), 1.0), 0.0);
  EXPECT_GT(sigma_f_squared(TestFunction::poly_bump({0.0, 1.0}, 6), 1.0), 0.0);
  EXPECT_GT(sigma_f_squared(TestFunction::poly_bump({1.0, 0.0, 2.0}, 9), 1.0), 0.0);
}

TEST(SigmaF, RefinementConverges) {
  const auto r = sigma_f_squared_detail(TestFunction::bump(6).shifted(0.37), 2.0);
  EXPECT_LE(r.refinement_change, 1e-9);
}

TEST(GaussianTargets, KnownValues) {
  EXPECT_EQ(gaussian_targets(1.0, 4), (std::vector<double>{0, 1, 0, 3}));
  EXPECT_EQ(gaussian_targets(0.0, 6), (std::vector<double>(6, 0.0)));
  EXPECT_EQ(gaussian_targets(2.0, 6)[5], 120.0);
  EXPECT_THROW(gaussian_targets(-1.0, 4), RejectedInput);
  EXPECT_THROW(gaussian_targets(1.0, 0), RejectedInput);
}

TEST(MomentReport, IdenticalConfigurationsHaveZeroCentralMoments) {
  const auto q = quantiles(semicircle(), 100);
  SampleBatch b;
  b.N = 100;
  b.beta = 2.0;
  b.meta.thinning = 1;
  for (int s = 0; s < 40; ++s) b.data.insert(b.data.end(), q.gamma.begin(), q.gamma.end());
  const auto r = moment_report(b, TestFunction::bump(6), {0.0, 0.3}, semicircle());
  const double m1 = centered_linear_statistic(q.gamma, TestFunction::bump(6), {0.0, 0.3}, semicircle(), 100);
  EXPECT_DOUBLE_EQ(r.m[0], m1);
  for (int k = 2; k <= 4; ++k) EXPECT_EQ(r.m[static_cast<std::size_t>(k - 1)], 0.0);
  EXPECT_EQ(r.se[1], 0.0);
  EXPECT_EQ(r.target[1], r.sigma_f2);
}

TEST(MomentReport, InsufficientData) {
  std::vector<double> v(39, 1.0);
  EXPECT_THROW(moments_from_values(v, 1.0, 4, 2), InsufficientData);
  EXPECT_NO_THROW(moments_from_values(std::vector<double>(40, 1.0), 1.0, 4, 2));
}

TEST(MomentReport, GaussianValuesGiveSmallZScores) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> z(0.0, 1.5);
  std::vector<double> v(20000);
  for (auto& x : v) x = z(rng);
  const auto r = moments_from_values(v, 2.25, 4);
  for (int k = 1; k <= 4; ++k) EXPECT_LE(std::abs(r.z[static_cast<std::size_t>(k - 1)]), 4.0) << k;
  EXPECT_GT(r.se[3], 0.0);
}

TEST(MomentReport, CsvAndJsonLayout) {
  std::vector<double> v(100);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sin(static_cast<double>(i));
  const auto r = moments_from_values(v, 0.5, 4);
  const std::string csv = to_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "k,m_k,se_k,target_k,z_k");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  const auto j = to_json(r);
  EXPECT_EQ(j["moments"].size(), 4u);
  EXPECT_EQ(j["moments"][1]["target"].get<double>(), 0.5);
}

TEST(CrossSampler, MesoscopicStatisticDistributionAgrees) {
  const std::size_t N = 200;
  const LinearStatistic stat(TestFunction::bump(6), {0.0, 0.3}, semicircle(), N);
  const auto t = tridiag_hermite_sample(N, 2.0, 1500, 31);
  SamplerSettings st;
  st.n_samples = 1500;
  st.burn_in = 500;
  st.thinning = 20;
  st.seed = 32;
  const auto m = mcmc_sample(GasConfig{N, Potential::polynomial({0, 0, 0.5}, 2.0)}, st);
  const auto vt = statistic_values(t, stat);
  const auto vm = statistic_values(m, stat);
  const double d = oracle::ks_two_sample(vt, vm);
  EXPECT_GT(oracle::ks_pvalue(d, 1500, 1500), 0.01) << d;
}

TEST(CrossSampler, MacroscopicMomentsAgree) {
  // f(x) = x² + x³/3, a macroscopic polynomial statistic Σ f(λ_i).
  const std::size_t N = 40;
  auto stat = [](std::span<const double> c) {
    double s = 0.0;
    for (double x : c) s += x * x + x * x * x / 3.0;
    return s;
  };
  const auto t = tridiag_hermite_sample(N, 2.0, 4000, 41);
  SamplerSettings st;
  st.n_samples = 4000;
  st.burn_in = 500;
  st.thinning = 10;
  st.seed = 42;
  const auto m = mcmc_sample(GasConfig{N, Potential::polynomial({0, 0, 0.5}, 2.0)}, st);
  std::vector<double> vt, vm;
  for (std::size_t s = 0; s < 4000; ++s) {
    vt.push_back(stat(t.config(s)));
    vm.push_back(stat(m.config(s)));
  }
  const auto rt = moments_from_values(vt, 0.0, 4);
  const auto rm = moments_from_values(vm, 0.0, 4);
  for (std::size_t k = 0; k < 4; ++k)
    EXPECT_LE(std::abs(rt.m[k] - rm.m[k]), 4.0 * std::hypot(rt.se[k], rm.se[k])) << "k=" << k + 1;
}

TEST(CrossSampler, ExactSamplerVarianceNearLimit) {
  // Independent draws from the tridiagonal model at N = 400.
  const std::size_t N = 400;
  const auto t = tridiag_hermite_sample(N, 2.0, 2000, 51);
  const auto r = moment_report(t, TestFunction::bump(6), {0.0, 0.3}, semicircle());
  EXPECT_LE(std::abs(r.m[1] - r.sigma_f2), 4.0 * r.se[1]) << r.m[1] << " vs " << r.sigma_f2;
  EXPECT_LE(std::abs(r.m[0]), 4.0 * r.se[0]);
}
