#pragma once

// The master operator
//   Ξh(x) = β ∫ (h(x) − h(y))/(x − y) dμ_V(y) − V′(x) h(x)
// and its inverse modulo constants.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "betagas/core_fn.hpp"
#include "betagas/equilibrium.hpp"
#include "betagas/errors.hpp"
#include "betagas/meso.hpp"

namespace betagas {

class MasterOperator {
 public:
  MasterOperator(Potential pot, EquilibriumMeasure mu)
      : pot_(std::move(pot)), mu_(std::move(mu)),
        default_rule_(mu_.measure_rule(ChebyshevGrid(mu_.support(), kDefaultGridSize))) {
    const auto res = endpoint_residuals(pot_, mu_.a(), mu_.b());
    const double tol = 1e-8 * std::max(1.0, pot_.beta() * kPi);
    if (std::abs(res.mass_balance) > tol || std::abs(res.normalization) > tol ||
        pot_.beta() != mu_.beta())
      throw RejectedInput("MasterOperator: measure is not the equilibrium measure of this potential");
  }

  const Potential& potential() const { return pot_; }
  const EquilibriumMeasure& measure() const { return mu_; }
  double beta() const { return pot_.beta(); }
  const MeasureRule& default_rule() const { return default_rule_; }

  MeasureRule rule_for(std::span<const double> breaks, int order) const {
    return mu_.measure_rule(CompositeGrid::from_x_breaks(mu_.support(), breaks, order));
  }

 private:
  Potential pot_;
  EquilibriumMeasure mu_;
  MeasureRule default_rule_;
};

/// Ξh(x) with the μ_V integral taken over `rule`.
inline double apply_xi(const MasterOperator& op, const SmoothFn& h, double x, const MeasureRule& rule) {
  const double tol = kDiagonalTolerance * (op.measure().b() - op.measure().a());
  const double hx = h(x);
  double acc = 0.0;
  for (std::size_t j = 0; j < rule.nodes.size(); ++j) {
    const double dy = x - rule.nodes[j];
    const double dd = std::abs(dy) < tol ? h.derivative(x, 1) : (hx - h(rule.nodes[j])) / dy;
    acc += rule.weights[j] * dd;
  }
  return op.beta() * acc - op.potential().dV(x) * hx;
}

inline double apply_xi(const MasterOperator& op, const SmoothFn& h, double x) {
  return apply_xi(op, h, x, op.default_rule());
}

struct InverseOptions {
  std::vector<double> breaks;        // panel layout on [a, b]; empty → angular_breaks
  int nodes_per_panel = 24;
  int quad_order = 32;
  int n_ck_probes = 16;
  std::vector<double> extra_probes;  // added to the round-trip probe set
  double roundtrip_tol = 1e-6;       // × (1 + ‖k‖∞)
  bool enforce_roundtrip = true;
};

/// h = Ξ⁻¹(k): piecewise Chebyshev on the support, the exterior formula off it.
class InverseResult {
 public:
  struct State {
    Potential pot;
    EquilibriumMeasure mu;
    SmoothFn k;
    PanelInterp h;
    std::vector<double> theta_breaks;
    double c_k = 0.0;
    double ck_spread = 0.0;
    double roundtrip_deviation = 0.0;
    double k_sup = 0.0;
  };

  explicit InverseResult(std::shared_ptr<const State> st) : st_(std::move(st)) {}

  double c_k() const { return st_->c_k; }
  double ck_spread() const { return st_->ck_spread; }
  double roundtrip_deviation() const { return st_->roundtrip_deviation; }
  double k_sup() const { return st_->k_sup; }
  const PanelInterp& on_support() const { return st_->h; }
  const SmoothFn& source() const { return st_->k; }
  const EquilibriumMeasure& measure() const { return st_->mu; }

  double operator()(double x) const { return derivative(x, 0); }

  /// Orders 0..3 on the support, 0..1 off it.
  double derivative(double x, int order) const {
    const auto& mu = st_->mu;
    if (x >= mu.a() && x <= mu.b()) {
      if (order < 0 || order > st_->h.max_order()) throw RejectedInput("InverseResult: derivative order too high");
      return st_->h(x, order);
    }
    if (order > 1) throw RejectedInput("InverseResult: only h and h′ are available off the support");
    return exterior(x, order);
  }

  /// G(x) = β∫dμ_V/(x − y) − V′(x), the exterior denominator.
  double exterior_denominator(double x) const { return exterior_force(st_->pot, st_->mu, x); }

  SmoothFn as_fn() const {
    InverseResult self = *this;
    return SmoothFn([self](double x, int order) { return self.derivative(x, order); }, 1);
  }

  SmoothFn on_support_fn() const {
    auto st = st_;
    return SmoothFn([st](double x, int order) { return st->h(x, order); }, st_->h.max_order(),
                    st_->mu.support());
  }

 private:
  double exterior(double x, int order) const {
    const auto& mu = st_->mu;
    const auto& pot = st_->pot;
    const double beta = pot.beta();
    const double edge = x < mu.a() ? mu.a() : mu.b();
    const double h_edge = st_->h(edge);
    if (std::abs(x - edge) < 1e-13 * (mu.b() - mu.a())) return order == 0 ? h_edge : st_->h(edge, 1);
    std::vector<double> th = mu.exterior_theta_breaks(x);
    th.insert(th.end(), st_->theta_breaks.begin(), st_->theta_breaks.end());
    std::sort(th.begin(), th.end());
    th.erase(std::unique(th.begin(), th.end(), [](double p, double q) { return q - p < 1e-12; }), th.end());
    const MeasureRule r = mu.measure_rule(CompositeGrid::from_theta_breaks(mu.support(), th, kExteriorOrder));
    double i1 = 0.0, g1 = 0.0, i2 = 0.0, g2 = 0.0;
    for (std::size_t j = 0; j < r.nodes.size(); ++j) {
      const double inv = 1.0 / (x - r.nodes[j]);
      const double dh = st_->h(r.nodes[j]) - h_edge;
      i1 += r.weights[j] * dh * inv;
      g1 += r.weights[j] * inv;
      if (order == 1) {
        i2 += r.weights[j] * dh * inv * inv;
        g2 += r.weights[j] * inv * inv;
      }
    }
    const double B = beta * i1 + h_edge * pot.dV(x) + st_->k(x) + st_->c_k;
    const double G = beta * g1 - pot.dV(x);
    const double q = B / G;
    if (order == 0) return h_edge + q;
    const double dB = -beta * i2 + h_edge * pot.d2V(x) + st_->k.derivative(x, 1);
    const double dG = -beta * g2 - pot.d2V(x);
    return (dB - q * dG) / G;
  }

  static constexpr int kExteriorOrder = 24;

  std::shared_ptr<const State> st_;
};

/// Ξ⁻¹(k) with h on the support from the subtracted principal value,
/// c_k from the probe average of Ξh − k.
inline InverseResult invert_xi(const MasterOperator& op, const SmoothFn& k, const InverseOptions& opt = {}) {
  const auto& mu = op.measure();
  const Interval sup = mu.support();
  const double beta = op.beta();
  const auto [smin, smax] = positivity_extrema(mu.S_series());
  if (!(smin > 1e-12 * smax))
    throw CriticalityError("invert_xi: S(x) = " + std::to_string(smin) + " is below the positivity floor");
  std::vector<double> breaks = opt.breaks.empty() ? angular_breaks(sup) : opt.breaks;
  const CompositeGrid grid = CompositeGrid::from_x_breaks(sup, breaks, opt.quad_order);

  auto st = std::make_shared<InverseResult::State>(InverseResult::State{op.potential(), mu, k, {}, {grid.theta_breaks().begin(), grid.theta_breaks().end()}, 0.0, 0.0, 0.0, 0.0});
  st->h = PanelInterp(breaks, opt.nodes_per_panel, [&](double x) {
    const double s = mu.S(x);
    if (!(s > 0.0)) throw CriticalityError("invert_xi: S(" + std::to_string(x) + ") is not positive");
    return -subtracted_pv(k, x, grid) / (beta * kPi * kPi * s);
  });

  const MeasureRule rule = mu.measure_rule(grid);
  InverseResult result(st);
  const SmoothFn h = result.on_support_fn();

  double mean = 0.0, lo = 0.0, hi = 0.0;
  const auto ck_probes = chebyshev_gauss_nodes(sup, opt.n_ck_probes);
  for (std::size_t i = 0; i < ck_probes.size(); ++i) {
    const double d = apply_xi(op, h, ck_probes[i], rule) - k(ck_probes[i]);
    mean += d;
    lo = i == 0 ? d : std::min(lo, d);
    hi = i == 0 ? d : std::max(hi, d);
  }
  st->c_k = mean / static_cast<double>(ck_probes.size());
  st->ck_spread = hi - lo;

  std::vector<double> probes = chebyshev_gauss_nodes(sup, 64);
  for (double x : opt.extra_probes) probes.push_back(x);
  double dev = 0.0, ksup = 0.0;
  for (double x : probes) {
    if (!sup.contains_open(x)) continue;
    const double kx = k(x);
    ksup = std::max(ksup, std::abs(kx));
    dev = std::max(dev, std::abs(apply_xi(op, h, x, rule) - kx - st->c_k));
  }
  for (std::size_t p = 0; p + 1 < breaks.size(); ++p)
    for (double x : chebyshev_gauss_nodes({breaks[p], breaks[p + 1]}, 8)) ksup = std::max(ksup, std::abs(k(x)));
  st->roundtrip_deviation = dev;
  st->k_sup = ksup;
  if (opt.enforce_roundtrip && dev > opt.roundtrip_tol * (1.0 + ksup))
    throw AccuracyError("invert_xi: round-trip deviation " + std::to_string(dev) + " exceeds tolerance " +
                        std::to_string(opt.roundtrip_tol * (1.0 + ksup)));
  return result;
}

inline constexpr double kMesoRoundtripTolerance = 1e-5;

/// Ξ⁻¹(f̃) on panels graded around the window E ± M N^{−α}.
inline InverseResult xi_inverse_meso(const MasterOperator& op, const TestFunction& f, const MesoWindow& window,
                                     std::size_t N, InverseOptions opt = {}) {
  if (N < 1) throw RejectedInput("xi_inverse_meso: N must be >= 1");
  const auto& mu = op.measure();
  if (!(window.E > mu.a() && window.E < mu.b()))
    throw DomainError("xi_inverse_meso: E=" + std::to_string(window.E) + " is outside the bulk");
  const double w = window.width(N);
  const double M = f.radius();
  if (opt.breaks.empty()) opt.breaks = mesoscopic_breaks(mu.support(), window.E, w, M);
  opt.roundtrip_tol = kMesoRoundtripTolerance;
  for (int j = -32; j <= 32; ++j) opt.extra_probes.push_back(window.E + 2.0 * M * w * j / 32.0);
  return invert_xi(op, rescaled(f, window, N), opt);
}

// ---------------------------------------------------------------------------
// Growth diagnostics for ‖Ξ⁻¹(f̃)^{(p)}‖

struct BoundRow {
  std::size_t N = 0;
  std::array<double, 4> sup{};     // sup |h^{(p)}| over the support, p = 0..3
  double decay_ratio = 0.0;        // h′(x₁)/h′(x₂), (x₁ − E) = 2(x₂ − E)
};

struct BoundReport {
  std::vector<BoundRow> rows;
  std::array<double, 4> slope{};   // fitted d log sup / d log N, p = 0..3
  bool decay_pass = true;
  double alpha = 0.0;
};

inline BoundReport bound_diagnostics(const MasterOperator& op, const TestFunction& f, const MesoWindow& window,
                                     std::span<const std::size_t> N_list) {
  if (N_list.size() < 4) throw RejectedInput("bound_diagnostics: need at least 4 values of N");
  BoundReport rep;
  rep.alpha = window.alpha;
  const double M = f.radius();
  for (std::size_t N : N_list) {
    const InverseResult inv = xi_inverse_meso(op, f, window, N);
    BoundRow row;
    row.N = N;
    const auto br = inv.on_support().breaks();
    for (std::size_t p = 0; p + 1 < br.size(); ++p) {
      for (int i = 0; i <= 64; ++i) {
        const double x = br[p] + (br[p + 1] - br[p]) * i / 64.0;
        for (int o = 0; o <= 3; ++o) row.sup[static_cast<std::size_t>(o)] = std::max(row.sup[static_cast<std::size_t>(o)], std::abs(inv.derivative(x, o)));
      }
    }
    const double w = window.width(N);
    const double x2 = window.E + 1.5 * (M + 1.0) * w;
    const double x1 = window.E + 3.0 * (M + 1.0) * w;
    const double d2 = inv.derivative(x2, 1);
    row.decay_ratio = d2 == 0.0 ? 0.0 : inv.derivative(x1, 1) / d2;
    if (d2 != 0.0 && !(row.decay_ratio >= 0.25 / 3.0 && row.decay_ratio <= 0.25 * 3.0)) rep.decay_pass = false;
    rep.rows.push_back(row);
  }
  std::vector<double> ns, ys;
  for (const auto& r : rep.rows) ns.push_back(static_cast<double>(r.N));
  for (int p = 0; p <= 3; ++p) {
    ys.clear();
    bool all_zero = true;
    for (const auto& r : rep.rows) {
      ys.push_back(r.sup[static_cast<std::size_t>(p)]);
      all_zero = all_zero && r.sup[static_cast<std::size_t>(p)] == 0.0;
    }
    rep.slope[static_cast<std::size_t>(p)] = all_zero ? 0.0 : loglog_slope(ns, ys);
  }
  return rep;
}

}  // namespace betagas
