#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "betagas/loop_eqs.hpp"

using namespace betagas;

namespace {

const MasterOperator& gaussian_op() {
  static const MasterOperator op(Potential::polynomial({0, 0, 0.5}, 2.0),
                                 equilibrium_measure(Potential::polynomial({0, 0, 0.5}, 2.0)));
  return op;
}

MasterOperator make_op(std::vector<double> coeffs, double beta) {
  const Potential p = Potential::polynomial(std::move(coeffs), beta);
  return MasterOperator(p, equilibrium_measure(p));
}

std::vector<double> jittered_quantiles(const EquilibriumMeasure& mu, std::size_t N, double rel, std::mt19937_64& rng) {
  std::vector<double> c = quantiles(mu, N).gamma;
  const double spacing = (mu.b() - mu.a()) / static_cast<double>(N);
  std::normal_distribution<double> z(0.0, rel * spacing);
  for (auto& x : c) x += z(rng);
  std::sort(c.begin(), c.end());
  return c;
}

SmoothFn sin2() {
  return SmoothFn([](double x, int k) { return k == 0 ? std::sin(2.0 * x) : 2.0 * std::cos(2.0 * x); }, 1);
}

SmoothFn gauss() {
  return SmoothFn([](double x, int k) { return (k == 0 ? 1.0 : -2.0 * x) * std::exp(-x * x); }, 1);
}

SmoothFn cosine() {
  return SmoothFn([](double x, int k) { return k == 0 ? std::cos(x) : -std::sin(x); }, 1);
}

}  // namespace

TEST(F1Direct, HandComputedThreeParticles) {
  // h(x) = x makes every difference quotient 1, so Σ_{i,j} = 9.
  const std::vector<double> c{0.1, 0.2, 0.5};
  const SmoothFn h = SmoothFn::polynomial({0.0, 1.0});
  EXPECT_NEAR(F1_direct(c, h, Potential::polynomial({0, 0, 0.5}, 2.0), 3), 3.0 - 0.30, 1e-14);
  EXPECT_NEAR(F1_direct(c, h, Potential::polynomial({0, 0, 0.5}, 1.0), 3), 1.5 - 0.30 + 0.5, 1e-14);
  // h(x) = x², V(x) = x²/2, β = 2: DD_ij = x_i + x_j, Σ_{i,j} = 2·3·0.8.
  EXPECT_NEAR(F1_direct(c, SmoothFn::polynomial({0.0, 0.0, 1.0}), Potential::polynomial({0, 0, 0.5}, 2.0), 3),
              4.8 / 3.0 - (0.001 + 0.008 + 0.125), 1e-14);
}

TEST(F1Direct, ConstantTestFunction) {
  const Potential pot = Potential::polynomial({0, 0, 0.5, 0, 0.25}, 2.0);
  const std::vector<double> c{-1.2, -0.4, 0.3, 0.9, 1.5};
  double sum_dv = 0.0;
  for (double x : c) sum_dv += pot.dV(x);
  EXPECT_NEAR(F1_direct(c, SmoothFn::constant(1.7), pot, 5), -1.7 * sum_dv, 1e-13);
  EXPECT_EQ(F1_direct(c, SmoothFn::zero(), pot, 5), 0.0);
}

TEST(F1Direct, LinearInH) {
  const Potential pot = Potential::polynomial({0, 0.1, 0.5, 0, 0.1}, 1.0);
  std::mt19937_64 rng(7);
  const auto c = jittered_quantiles(equilibrium_measure(pot), 60, 0.3, rng);
  const SmoothFn h1 = SmoothFn::polynomial({0.3, -1.0, 0.2, 0.7});
  const SmoothFn h2 = sin2();
  const double a = 1.7, b = -0.6;
  const double lhs = F1_direct(c, linear_combination(a, h1, b, h2), pot, 60);
  const double rhs = a * F1_direct(c, h1, pot, 60) + b * F1_direct(c, h2, pot, 60);
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(rhs)));
}

TEST(F1Direct, PermutationInvariant) {
  const Potential pot = Potential::polynomial({0, 0, 0.5}, 2.0);
  std::mt19937_64 rng(9);
  auto c = jittered_quantiles(equilibrium_measure(pot), 80, 0.3, rng);
  const SmoothFn h = gauss();
  const double ref = F1_direct(c, h, pot, 80);
  for (int t = 0; t < 5; ++t) {
    std::shuffle(c.begin(), c.end(), rng);
    EXPECT_NEAR(F1_direct(c, h, pot, 80), ref, 1e-12 * std::max(1.0, std::abs(ref)));
  }
}

TEST(F1Direct, BetaCoefficientSign) {
  // h(x) = x, V = x²/2: F_1 = (β/2)N − Σx² + (1 − β/2), so dF_1/dβ = (N − 1)/2 > 0.
  const std::vector<double> c{-0.5, 0.1, 0.2, 0.9};
  const SmoothFn h = SmoothFn::polynomial({0.0, 1.0});
  const double f1 = F1_direct(c, h, Potential::polynomial({0, 0, 0.5}, 1.0), 4);
  const double f3 = F1_direct(c, h, Potential::polynomial({0, 0, 0.5}, 3.0), 4);
  EXPECT_NEAR(f3 - f1, 2.0 * 1.5, 1e-13);
}

TEST(F1Direct, ShapeMismatch) {
  EXPECT_THROW(F1_direct(std::vector<double>{0.1, 0.2}, SmoothFn::zero(), Potential::polynomial({0, 0, 0.5}, 2.0), 3),
               ShapeError);
}

TEST(LoopIdentity, DirectEqualsRecenteredOnRandomConfigurations) {
  const std::size_t N = 200;
  struct Case {
    std::vector<double> coeffs;
    double beta;
    MesoWindow window;
  };
  const std::vector<Case> cases{{{0, 0, 0.5}, 2.0, {0.0, 0.3}},
                                {{0, 0, 0.5}, 1.0, {0.5, 0.5}},
                                {{0, 0.2, 0.5, 0.1, 0.25}, 4.0, {-0.2, 0.3}}};
  std::mt19937_64 rng(11);
  for (const auto& cs : cases) {
    const MasterOperator op = make_op(cs.coeffs, cs.beta);
    const LoopContext ctx(op, xi_inverse_meso(op, TestFunction::bump(6), cs.window, N), N);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      const auto c = jittered_quantiles(op.measure(), N, t % 2 == 0 ? 0.3 : 2.0, rng);
      const double d = ctx.F1_direct(c);
      const double r = ctx.F1_recentered(c);
      worst = std::max(worst, std::abs(d - r) / std::max(std::abs(d), std::abs(r)));
    }
    EXPECT_LE(worst, 1e-6) << "beta=" << cs.beta;
  }
}

TEST(LoopIdentity, ZeroSourceGivesZero) {
  const std::size_t N = 50;
  const LoopContext ctx(gaussian_op(), xi_inverse_meso(gaussian_op(), TestFunction::zero(), {0.0, 0.3}, N), N);
  const auto c = quantiles(gaussian_op().measure(), N).gamma;
  EXPECT_EQ(ctx.F1_direct(c), 0.0);
  EXPECT_EQ(ctx.F1_recentered(c), 0.0);
}

TEST(Recurrence, FirstOrderIsDirect) {
  const Potential pot = Potential::polynomial({0, 0, 0.5}, 2.0);
  const std::vector<double> c{-0.9, -0.1, 0.4, 1.3};
  const SmoothFn h = cosine();
  EXPECT_EQ(Fk_recursive(c, {h, {}}, pot, 4, {}), F1_direct(c, h, pot, 4));
}

TEST(Recurrence, SecondOrderFormula) {
  const Potential pot = Potential::polynomial({0, 0, 0.5}, 1.0);
  const std::vector<double> c{-0.9, -0.1, 0.4, 1.3};
  const SmoothFn h = cosine();
  const SmoothFn g = SmoothFn::polynomial({0.0, 0.0, 1.0});
  const double mean = 1.1;
  double m = -mean, ln = 0.0;
  for (double x : c) {
    m += x * x;
    ln += std::cos(x) * 2.0 * x / 4.0;
  }
  const double want = F1_direct(c, h, pot, 4) * m + ln;
  EXPECT_NEAR(Fk_recursive(c, {h, {g}}, pot, 4, {{mean}}), want, 1e-14);
  // Third order: F_3 = F_2 M̃(g) + M̃(g) L_N(h g′).
  EXPECT_NEAR(Fk_recursive(c, {h, {g, g}}, pot, 4, {{mean, mean}}), want * m + m * ln, 1e-13);
}

TEST(Recurrence, ZeroInsertionsVanish) {
  const Potential pot = Potential::polynomial({0, 0, 0.5}, 2.0);
  const std::vector<double> c{-0.9, -0.1, 0.4, 1.3};
  const SmoothFn h = cosine();
  const auto F = Fk_all(c, {h, {SmoothFn::zero(), SmoothFn::zero()}}, pot, 4, {{0.0, 0.0}});
  EXPECT_EQ(F[1], 0.0);
  EXPECT_EQ(F[2], 0.0);
}

TEST(Recurrence, MissingMeansRejected) {
  const Potential pot = Potential::polynomial({0, 0, 0.5}, 2.0);
  const std::vector<double> c{-0.9, -0.1, 0.4, 1.3};
  EXPECT_THROW(Fk_recursive(c, {SmoothFn::zero(), {SmoothFn::zero()}}, pot, 4, {}), ConfigError);
}

TEST(LoopTest, ExactSamplerSmoke) {
  const std::size_t N = 200;
  const auto batch = tridiag_hermite_sample(N, 2.0, 1200, 61);
  const auto rep = loop_test(batch, TestFunction::bump(6), {0.0, 0.3}, gaussian_op(), 3);
  ASSERT_EQ(rep.rows.size(), 3u);
  EXPECT_EQ(rep.n_recentring, 600u);
  for (const auto& row : rep.rows) {
    EXPECT_GT(row.se, 0.0);
    EXPECT_LE(std::abs(row.z), 4.0) << "k=" << row.k;
  }
  EXPECT_LE(rep.identity_residual, 1e-6 * std::max(1.0, rep.identity_scale));
  const std::string csv = to_csv(rep);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "k,mean,se,z");
  EXPECT_EQ(to_json(rep)["orders"].size(), 3u);
}

TEST(LoopTest, TooFewSamples) {
  const auto batch = tridiag_hermite_sample(50, 2.0, 999, 3);
  EXPECT_THROW(loop_test(batch, TestFunction::bump(6), {0.0, 0.3}, gaussian_op(), 2), InsufficientData);
}
