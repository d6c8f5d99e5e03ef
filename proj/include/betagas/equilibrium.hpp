#pragma once

// Equilibrium measure of a one-cut, off-critical potential.
//
// With the log-gas weight ∏|λ_i − λ_j|^β e^{−N Σ V(λ_i)}, the equilibrium
// measure satisfies β·PV∫ dμ_V(y)/(x − y) = V′(x) on its support [a, b].
// For a single interval, bounded density at both edges and unit mass give
//   (i)  ∫_a^b V′(y)/σ(y) dy = 0,
//   (ii) ∫_a^b y·V′(y)/σ(y) dy = βπ,
// and the density is S(x)σ(x) with
//   S(x) = (1/(βπ²)) ∫_a^b (V′(y) − V′(x)) / (σ(y)(y − x)) dy.

#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "betagas/core_fn.hpp"
#include "betagas/errors.hpp"

namespace betagas {

// ---------------------------------------------------------------------------
// Potential

class Potential {
 public:
  /// V given as a C^p callable (p >= 6) together with β.
  Potential(SmoothFn V, double beta) : V_(std::move(V)), beta_(beta) { validate(); }

  /// V(x) = Σ c_j x^j.
  static Potential polynomial(std::vector<double> coeffs, double beta) {
    Potential p(SmoothFn::polynomial(coeffs), beta);
    p.poly_ = Polynomial(std::move(coeffs));
    return p;
  }

  const SmoothFn& V() const { return V_; }
  double beta() const { return beta_; }
  double confinement_margin() const { return margin_; }
  const std::optional<Polynomial>& poly() const { return poly_; }

  double operator()(double x) const { return V_(x); }
  double dV(double x) const { return V_.derivative(x, 1); }
  double d2V(double x) const { return V_.derivative(x, 2); }

  /// V′ as a standalone function.
  SmoothFn dV_fn() const {
    SmoothFn v = V_;
    return SmoothFn([v](double x, int order) { return v.derivative(x, order + 1); }, V_.smoothness() - 1);
  }

 private:
  void validate() {
    if (!(beta_ > 0.0) || !std::isfinite(beta_)) throw RejectedInput("Potential: beta must be > 0");
    if (V_.smoothness() < 6) throw RejectedInput("Potential: V must be at least C^6");
    // Growth condition liminf V(x)/(β log|x|) > 1, probed at |x| = 1e2, 1e3, 1e4.
    margin_ = std::numeric_limits<double>::infinity();
    for (double r : {1e2, 1e3, 1e4}) {
      for (double x : {r, -r}) {
        const double ratio = V_(x) / (beta_ * std::log(r));
        margin_ = std::min(margin_, ratio - 1.0);
      }
    }
    if (!(margin_ > 0.0))
      throw RejectedInput("Potential: growth condition V(x)/(beta log|x|) > 1 violated (margin " +
                          std::to_string(margin_) + ")");
  }

  SmoothFn V_;
  double beta_;
  double margin_ = 0.0;
  std::optional<Polynomial> poly_;
};

// ---------------------------------------------------------------------------
// Endpoints

struct EndpointOptions {
  std::optional<Interval> init;  // default [−2√β, 2√β]
  int max_iterations = 200;
  double tolerance = 1e-10;
  double damping = 0.5;          // backtracking factor
  int n_nodes = 256;
};

struct EndpointResiduals {
  double mass_balance;  // ∫ V′/σ
  double normalization; // ∫ y V′/σ − βπ
};

/// Residuals of the two endpoint equations at (a, b).
inline EndpointResiduals endpoint_residuals(const Potential& pot, double a, double b, int n_nodes = 256) {
  const ChebyshevGrid grid({a, b}, n_nodes);
  double r1 = 0.0;
  double r2 = 0.0;
  const auto xs = grid.nodes();
  const auto w = grid.weights();
  for (std::size_t j = 0; j < xs.size(); ++j) {
    const double dv = pot.dV(xs[j]);
    r1 += w[j] * dv;
    r2 += w[j] * xs[j] * dv;
  }
  return {r1, r2 - pot.beta() * kPi};
}

/// Support [a, b] of μ_V by damped Newton on the endpoint equations.
inline Interval solve_endpoints(const Potential& pot, const EndpointOptions& opt = {}) {
  const double beta = pot.beta();
  const Interval init = opt.init.value_or(Interval{-2.0 * std::sqrt(beta), 2.0 * std::sqrt(beta)});
  if (!(init.lo < init.hi)) throw RejectedInput("solve_endpoints: initial interval must have lo < hi");
  const int n = opt.n_nodes;
  const double tol = opt.tolerance * std::max(1.0, beta * kPi);

  // Unknowns (mid, half); y_j = mid − half·cos φ_j so ∂y/∂mid = 1, ∂y/∂half = −cos φ_j.
  std::vector<double> cosphi(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) cosphi[static_cast<std::size_t>(j)] = std::cos((2.0 * j + 1.0) * kPi / (2.0 * n));
  const double w = kPi / n;

  auto residual = [&](double mid, double half) {
    std::array<double, 2> r{0.0, 0.0};
    for (double c : cosphi) {
      const double y = mid - half * c;
      const double dv = pot.dV(y);
      r[0] += w * dv;
      r[1] += w * y * dv;
    }
    r[1] -= beta * kPi;
    return r;
  };
  auto norm = [](const std::array<double, 2>& r) { return std::max(std::abs(r[0]), std::abs(r[1])); };

  double mid = init.mid();
  double half = init.half();
  auto r = residual(mid, half);
  for (int it = 0; it < opt.max_iterations; ++it) {
    if (norm(r) <= tol) return {mid - half, mid + half};
    double j11 = 0.0, j12 = 0.0, j21 = 0.0, j22 = 0.0;
    for (double c : cosphi) {
      const double y = mid - half * c;
      const double dv = pot.dV(y);
      const double d2v = pot.d2V(y);
      j11 += w * d2v;
      j12 += w * (-c) * d2v;
      j21 += w * (dv + y * d2v);
      j22 += w * (-c) * (dv + y * d2v);
    }
    const double det = j11 * j22 - j12 * j21;
    if (!std::isfinite(det) || det == 0.0) break;
    const double dmid = -(j22 * r[0] - j12 * r[1]) / det;
    const double dhalf = -(-j21 * r[0] + j11 * r[1]) / det;

    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 60; ++ls, t *= opt.damping) {
      const double m2 = mid + t * dmid;
      const double h2 = half + t * dhalf;
      if (!(h2 > 0.0)) continue;
      const auto r2 = residual(m2, h2);
      if (std::isfinite(norm(r2)) && norm(r2) < norm(r)) {
        mid = m2;
        half = h2;
        r = r2;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  if (norm(r) <= tol) return {mid - half, mid + half};
  throw NoOneCutSolution("solve_endpoints: Newton did not converge (residual " + std::to_string(norm(r)) +
                         "); potential may be multi-cut or critical");
}

// ---------------------------------------------------------------------------
// Equilibrium measure

/// Nodes and weights with Σ w_j g(y_j) ≈ ∫ g dμ_V.
struct MeasureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  double integrate(const auto& g) const {
    double acc = 0.0;
    for (std::size_t j = 0; j < nodes.size(); ++j) acc += weights[j] * g(nodes[j]);
    return acc;
  }
};

class EquilibriumMeasure {
 public:
  EquilibriumMeasure(double a, double b, ChebSeries S, double beta)
      : a_(a), b_(b), beta_(beta), S_(std::move(S)), dS_(S_.derivative()) {
    total_mass_ = cdf_at_angle(kPi);
  }

  double a() const { return a_; }
  double b() const { return b_; }
  Interval support() const { return {a_, b_}; }
  double beta() const { return beta_; }
  double total_mass() const { return total_mass_; }
  const ChebSeries& S_series() const { return S_; }

  double S(double x) const { return S_(x); }
  double dS(double x) const { return dS_(x); }
  SmoothFn S_fn() const {
    auto s = std::make_shared<const ChebInterp>(S_, 3);
    return SmoothFn([s](double x, int order) { return (*s)(x, order); }, 3, support());
  }

  double sigma(double x) const {
    const double v = (b_ - x) * (x - a_);
    return v > 0.0 ? std::sqrt(v) : 0.0;
  }
  SmoothFn sigma_fn() const {
    const double a = a_, b = b_;
    return SmoothFn([a, b](double x, int order) {
      const double v = (b - x) * (x - a);
      if (v <= 0.0) return 0.0;
      const double s = std::sqrt(v);
      if (order == 0) return s;
      if (order == 1) return (a + b - 2.0 * x) / (2.0 * s);
      throw RejectedInput("sigma: only first derivative provided");
    }, 1, Interval{a, b});
  }

  /// ρ_V(x) = S(x)σ(x); zero off the support.
  double density(double x) const {
    if (x <= a_ || x >= b_) return 0.0;
    return S_(x) * sigma(x);
  }

  /// Angle φ ∈ [0, π] with x = mid − half·cos φ.
  double angle(double x) const {
    const double mid = 0.5 * (a_ + b_), half = 0.5 * (b_ - a_);
    return std::acos(std::clamp((mid - x) / half, -1.0, 1.0));
  }

  /// μ_V([a, x(φ)]) in closed form from the Chebyshev coefficients of S.
  double cdf_at_angle(double phi) const {
    const double half = 0.5 * (b_ - a_);
    auto I = [phi](int m) { return m == 0 ? phi : std::sin(m * phi) / m; };
    const auto& c = S_.coeffs();
    double acc = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) {
      const int ki = static_cast<int>(k);
      const double sgn = (k % 2 == 0) ? 1.0 : -1.0;
      acc += sgn * c[k] * (0.5 * I(ki) - 0.25 * (I(ki + 2) + I(std::abs(ki - 2))));
    }
    return half * half * acc;
  }

  double cdf(double x) const {
    if (x <= a_) return 0.0;
    if (x >= b_) return total_mass_;
    return cdf_at_angle(angle(x));
  }

  SmoothFn cdf_fn() const {
    auto self = std::make_shared<const EquilibriumMeasure>(*this);
    return SmoothFn([self](double x, int order) {
      if (order == 0) return self->cdf(x);
      return self->density(x);
    }, 1, support());
  }

  /// μ_V-weighted version of a σ-weighted grid on [a, b].
  template <SigmaQuadrature Grid>
  MeasureRule measure_rule(const Grid& grid) const {
    MeasureRule r;
    const auto xs = grid.nodes();
    const auto w = grid.weights();
    r.nodes.assign(xs.begin(), xs.end());
    r.weights.resize(xs.size());
    for (std::size_t j = 0; j < xs.size(); ++j) {
      const double s2 = (b_ - xs[j]) * (xs[j] - a_);
      r.weights[j] = w[j] * S_(xs[j]) * s2;
    }
    return r;
  }

  /// θ-panel breakpoints graded toward the endpoint nearest to an exterior x.
  std::vector<double> exterior_theta_breaks(double x) const {
    const double half = 0.5 * (b_ - a_);
    const bool right = x > b_;
    const double d = right ? x - b_ : a_ - x;
    double s = std::min(kPi / 4.0, 0.25 * std::sqrt(2.0 * d / half));
    std::vector<double> th{0.0, kPi};
    const double s_min = s;
    for (double t = s_min; t < kPi / 2.0; t *= 2.0) th.push_back(right ? kPi - t : t);
    for (int m = 1; m < 4; ++m) th.push_back(kPi * m / 4.0);
    std::sort(th.begin(), th.end());
    return th;
  }

  /// Graded μ_V rule for integrals against 1/(x − y) with x outside [a, b].
  MeasureRule exterior_rule(double x, int order = 16) const {
    return measure_rule(CompositeGrid::from_theta_breaks(support(), exterior_theta_breaks(x), order));
  }

  /// Stieltjes-type integrals ∫ dμ_V(y)/(x − y)^m, m = 1, 2, for x ∉ [a, b].
  double stieltjes(double x, int power = 1) const {
    if (x >= a_ && x <= b_) throw DomainError("stieltjes: x inside the support");
    const MeasureRule r = exterior_rule(x);
    return r.integrate([x, power](double y) { return power == 1 ? 1.0 / (x - y) : 1.0 / ((x - y) * (x - y)); });
  }

 private:
  double a_, b_, beta_;
  ChebSeries S_;
  ChebSeries dS_;
  double total_mass_ = 0.0;
};

inline constexpr int kDefaultGridSize = 256;
inline constexpr int kPositivityProbes = 512;

/// (min S, max |S|) on the interval of `series`: probes, then a bracketed
/// minimization around the smallest probe to catch interior double zeros.
inline std::pair<double, double> positivity_extrema(const ChebSeries& series) {
  const double a = series.interval().lo, b = series.interval().hi;
  double smax = 0.0;
  double smin = std::numeric_limits<double>::infinity();
  int imin = 0;
  const double dx = (b - a) / (kPositivityProbes - 1);
  for (int i = 0; i < kPositivityProbes; ++i) {
    const double v = series(a + i * dx);
    smax = std::max(smax, std::abs(v));
    if (v < smin) {
      smin = v;
      imin = i;
    }
  }
  const double lo = a + std::max(0, imin - 1) * dx;
  const double hi = a + std::min(kPositivityProbes - 1, imin + 1) * dx;
  const auto best = boost::math::tools::brent_find_minima([&](double x) { return series(x); }, lo, hi, 40);
  return {std::min(smin, best.second), smax};
}

/// S on a Chebyshev grid from the subtracted principal value of V′.
inline EquilibriumMeasure compute_density(const Potential& pot, double a, double b,
                                          int n_nodes = kDefaultGridSize) {
  if (!(a < b)) throw RejectedInput("compute_density: need a < b");
  const auto res = endpoint_residuals(pot, a, b, n_nodes);
  if (std::abs(res.mass_balance) > 1e-8 * std::max(1.0, pot.beta() * kPi) ||
      std::abs(res.normalization) > 1e-8 * std::max(1.0, pot.beta() * kPi))
    throw RejectedInput("compute_density: (a, b) do not satisfy the endpoint equations");

  const ChebyshevGrid grid({a, b}, n_nodes);
  const SmoothFn dv = pot.dV_fn();
  const double pref = 1.0 / (pot.beta() * kPi * kPi);
  std::vector<double> s(static_cast<std::size_t>(n_nodes));
  for (int j = 0; j < n_nodes; ++j) s[static_cast<std::size_t>(j)] = pref * subtracted_pv(dv, grid.nodes()[static_cast<std::size_t>(j)], grid);
  ChebSeries series = ChebSeries::from_gauss_samples(grid.interval(), s).chopped(1e-15);

  const auto [smin, smax] = positivity_extrema(series);
  if (!(smin > 1e-12 * smax))
    throw CriticalityError("compute_density: S(x) = " + std::to_string(smin) +
                           " is not positive on [a, b]; potential is critical or multi-cut");

  return EquilibriumMeasure(a, b, std::move(series), pot.beta());
}

/// Solve endpoints and density in one call.
inline EquilibriumMeasure equilibrium_measure(const Potential& pot, const EndpointOptions& opt = {}) {
  const Interval ab = solve_endpoints(pot, opt);
  return compute_density(pot, ab.lo, ab.hi, opt.n_nodes);
}

/// max over interior probes of |β·PV∫ρ_V(y)/(x − y) dy − V′(x)|.
inline double equilibrium_residual(const Potential& pot, const EquilibriumMeasure& mu, int n_probes = 64) {
  const ChebyshevGrid grid(mu.support(), kDefaultGridSize);
  const double a = mu.a(), b = mu.b();
  const EquilibriumMeasure m = mu;
  // g = S·σ² is smooth, and PV∫ dy/(σ(y)(y − x)) = 0 inside, so the Hilbert
  // transform reduces to the subtracted integral of g.
  const SmoothFn g([m, a, b](double y, int order) {
    const double s2 = (b - y) * (y - a);
    if (order == 0) return m.S(y) * s2;
    return m.dS(y) * s2 + m.S(y) * (a + b - 2.0 * y);
  }, 1);
  double worst = 0.0;
  for (double x : chebyshev_gauss_nodes(mu.support(), n_probes)) {
    const double hilbert = -subtracted_pv(g, x, grid);
    worst = std::max(worst, std::abs(pot.beta() * hilbert - pot.dV(x)));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Quantiles

struct Quantiles {
  std::size_t N = 0;
  std::vector<double> gamma;  // γ_1 … γ_N
};

/// Angle φ ∈ [phi_lo, π] with μ_V([a, x(φ)]) = p: safeguarded Newton in φ.
inline double quantile_angle(const EquilibriumMeasure& mu, double p, double phi_lo = 0.0) {
  const double mid = 0.5 * (mu.a() + mu.b()), half = 0.5 * (mu.b() - mu.a());
  double lo = phi_lo, hi = kPi;
  double phi = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = mu.cdf_at_angle(phi) - p;
    if (std::abs(f) <= 1e-15) break;
    if (f > 0.0) hi = phi; else lo = phi;
    const double x = mid - half * std::cos(phi);
    const double dens = mu.S(x) * half * half * std::sin(phi) * std::sin(phi);
    double next = dens > 0.0 ? phi - f / dens : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (hi - lo < 1e-16) break;
    phi = next;
  }
  return phi;
}

/// x with μ_V([a, x]) = p, p ∈ [0, 1].
inline double quantile(const EquilibriumMeasure& mu, double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw RejectedInput("quantile: level must lie in [0, 1]");
  if (p == 0.0) return mu.a();
  if (p == 1.0) return mu.b();
  return 0.5 * (mu.a() + mu.b()) - 0.5 * (mu.b() - mu.a()) * std::cos(quantile_angle(mu, p));
}

/// γ_i with μ_V([a, γ_i]) = i/N, and γ_N = b.
inline Quantiles quantiles(const EquilibriumMeasure& mu, std::size_t N) {
  if (N < 1) throw RejectedInput("quantiles: N must be >= 1");
  Quantiles q;
  q.N = N;
  q.gamma.resize(N);
  const double mid = 0.5 * (mu.a() + mu.b()), half = 0.5 * (mu.b() - mu.a());
  double phi = 0.0;
  for (std::size_t i = 1; i < N; ++i) {
    phi = quantile_angle(mu, static_cast<double>(i) / static_cast<double>(N), phi);
    q.gamma[i - 1] = mid - half * std::cos(phi);
  }
  q.gamma[N - 1] = mu.b();
  return q;
}

// ---------------------------------------------------------------------------
// Off-criticality

struct OffcriticalReport {
  bool pass = false;
  double min_excess = 0.0;
  double collar = 1e-6;
  std::vector<std::pair<double, double>> probes;  // (x, ε(x))
};

/// G(x) = β∫dμ_V(y)/(x − y) − V′(x) for x outside the support.
inline double exterior_force(const Potential& pot, const EquilibriumMeasure& mu, double x) {
  return pot.beta() * mu.stieltjes(x) - pot.dV(x);
}

/// ε(x) = V(x) − β∫log|x − y| dμ_V(y) − C for x outside the support, as the
/// integral of −G from the nearest endpoint (ε vanishes on the support).
/// t = edge ± s² removes the square-root behaviour of G at the edge.
inline double effective_excess(const Potential& pot, const EquilibriumMeasure& mu, double x) {
  if (x >= mu.a() && x <= mu.b()) return 0.0;
  const bool right = x > mu.b();
  const double edge = right ? mu.b() : mu.a();
  const double smax = std::sqrt(std::abs(x - edge));
  const GaussRule& gl = gauss_legendre(24);
  double acc = 0.0;
  const int panels = 4;
  for (int p = 0; p < panels; ++p) {
    const double s0 = smax * p / panels, s1 = smax * (p + 1) / panels;
    for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
      const double s = 0.5 * (s0 + s1) + 0.5 * (s1 - s0) * gl.nodes[q];
      const double t = right ? edge + s * s : edge - s * s;
      acc += 0.5 * (s1 - s0) * gl.weights[q] * exterior_force(pot, mu, t) * 2.0 * s;
    }
  }
  // dε/dx = −G; right: ε = −∫_b^x G, left: ε = ∫_x^a G = ∫ G(a − s²) 2s ds.
  return right ? -acc : acc;
}

/// Checks that V − β∫log|· − y|dμ_V is minimized on the support only.
inline OffcriticalReport offcritical_check(const Potential& pot, const EquilibriumMeasure& mu,
                                           int probes_per_side = 48, double collar = 1e-6) {
  OffcriticalReport rep;
  rep.collar = collar;
  rep.min_excess = std::numeric_limits<double>::infinity();
  const double reach = 2.0 * (mu.b() - mu.a());
  for (int side = 0; side < 2; ++side) {
    for (int i = 0; i < probes_per_side; ++i) {
      const double d = collar * std::pow(reach / collar, static_cast<double>(i) / (probes_per_side - 1));
      const double x = side == 0 ? mu.a() - d : mu.b() + d;
      const double e = effective_excess(pot, mu, x);
      rep.probes.emplace_back(x, e);
      rep.min_excess = std::min(rep.min_excess, e);
    }
  }
  rep.pass = rep.min_excess > 0.0;
  return rep;
}

}  // namespace betagas
