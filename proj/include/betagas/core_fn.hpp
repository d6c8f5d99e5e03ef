#pragma once

// Smooth-function carriers, Chebyshev machinery and the 1/σ-weighted
// quadrature kernels shared by every other module.
//
// All σ-weighted rules live in the angle variable: with
//   y = mid − half·cos θ,  θ ∈ [0, π],
// one has dy / √((hi − y)(y − lo)) = dθ, so ∫ g(y)/σ(y) dy = ∫_0^π g(y(θ)) dθ
// and the endpoint singularity of the weight disappears.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "betagas/errors.hpp"

namespace betagas {

inline constexpr double kPi = std::numbers::pi;

/// Smoothness order used for analytic functions (polynomials, constants).
inline constexpr int kSmoothnessInfinite = 1 << 20;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  double mid() const { return 0.5 * (lo + hi); }
  double half() const { return 0.5 * (hi - lo); }
  bool contains_open(double x) const { return x > lo && x < hi; }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

// ---------------------------------------------------------------------------
// Summation

/// Pairwise (tree) summation; round-off grows like log n instead of n.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 32) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t h = v.size() / 2;
  return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

// ---------------------------------------------------------------------------
// Polynomials

class Polynomial {
 public:
  Polynomial() : c_{0.0} {}
  explicit Polynomial(std::vector<double> coeffs) : c_(std::move(coeffs)) {
    if (c_.empty()) c_.push_back(0.0);
  }

  const std::vector<double>& coeffs() const { return c_; }
  int degree() const { return static_cast<int>(c_.size()) - 1; }

  double operator()(double x) const {
    double acc = 0.0;
    for (auto it = c_.rbegin(); it != c_.rend(); ++it) acc = acc * x + *it;
    return acc;
  }

  /// Value of the order-th derivative at x.
  double derivative(double x, int order) const {
    if (order == 0) return (*this)(x);
    const int n = degree();
    if (order > n) return 0.0;
    double acc = 0.0;
    for (int j = n; j >= order; --j) {
      double falling = 1.0;
      for (int m = 0; m < order; ++m) falling *= static_cast<double>(j - m);
      acc = acc * x + falling * c_[static_cast<std::size_t>(j)];
    }
    return acc;
  }

  Polynomial derivative() const {
    if (c_.size() <= 1) return Polynomial({0.0});
    std::vector<double> d(c_.size() - 1);
    for (std::size_t j = 1; j < c_.size(); ++j) d[j - 1] = static_cast<double>(j) * c_[j];
    return Polynomial(std::move(d));
  }

  friend Polynomial operator*(const Polynomial& p, const Polynomial& q) {
    std::vector<double> r(p.c_.size() + q.c_.size() - 1, 0.0);
    for (std::size_t i = 0; i < p.c_.size(); ++i)
      for (std::size_t j = 0; j < q.c_.size(); ++j) r[i + j] += p.c_[i] * q.c_[j];
    return Polynomial(std::move(r));
  }

 private:
  std::vector<double> c_;
};

// ---------------------------------------------------------------------------
// SmoothFn

/// A C^p function of one real variable given by an evaluator for the value
/// and its derivatives up to order p.
class SmoothFn {
 public:
  /// evaluator(x, order) returns the order-th derivative at x.
  using Evaluator = std::function<double(double, int)>;

  SmoothFn() : SmoothFn([](double, int) { return 0.0; }, kSmoothnessInfinite) {}

  SmoothFn(Evaluator eval, int smoothness, std::optional<Interval> support_hint = std::nullopt)
      : eval_(std::move(eval)), smoothness_(smoothness), support_(support_hint) {
    if (smoothness_ < 0) throw RejectedInput("SmoothFn: negative smoothness order");
  }

  double operator()(double x) const { return eval_(x, 0); }

  double derivative(double x, int order) const {
    if (order < 0 || order > smoothness_)
      throw RejectedInput("SmoothFn: derivative of order " + std::to_string(order) +
                          " requested from a C^" + std::to_string(smoothness_) + " function");
    return eval_(x, order);
  }

  int smoothness() const { return smoothness_; }
  const std::optional<Interval>& support_hint() const { return support_; }

  static SmoothFn zero() { return SmoothFn(); }

  static SmoothFn constant(double c) {
    return SmoothFn([c](double, int order) { return order == 0 ? c : 0.0; }, kSmoothnessInfinite);
  }

  static SmoothFn polynomial(std::vector<double> coeffs) {
    auto p = std::make_shared<const Polynomial>(std::move(coeffs));
    return SmoothFn([p](double x, int order) { return p->derivative(x, order); },
                    kSmoothnessInfinite);
  }

 private:
  Evaluator eval_;
  int smoothness_;
  std::optional<Interval> support_;
};

/// a·f + b·g, with smoothness min(p_f, p_g).
inline SmoothFn linear_combination(double a, const SmoothFn& f, double b, const SmoothFn& g) {
  return SmoothFn([a, f, b, g](double x, int order) {
    return a * f.derivative(x, order) + b * g.derivative(x, order);
  }, std::min(f.smoothness(), g.smoothness()));
}

inline SmoothFn scaled(double a, const SmoothFn& f) {
  return SmoothFn([a, f](double x, int order) { return a * f.derivative(x, order); },
                  f.smoothness(), f.support_hint());
}

// ---------------------------------------------------------------------------
// Gauss–Legendre

struct GaussRule {
  std::vector<double> nodes;    // ascending, in (−1, 1)
  std::vector<double> weights;
};

namespace detail {

inline GaussRule compute_gauss_legendre(int n) {
  GaussRule r;
  r.nodes.resize(static_cast<std::size_t>(n));
  r.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    {
      // Recompute derivative at the converged node for the weight.
      double p0 = 1.0;
      double p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (z * p1 - p0) / (z * z - 1.0);
    }
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    const auto lo = static_cast<std::size_t>(i);
    const auto hi = static_cast<std::size_t>(n - 1 - i);
    r.nodes[lo] = -z;
    r.nodes[hi] = z;
    r.weights[lo] = w;
    r.weights[hi] = w;
  }
  if (n % 2 == 1) r.nodes[static_cast<std::size_t>(n / 2)] = 0.0;
  return r;
}

}  // namespace detail

/// Gauss–Legendre rule on [−1, 1]; cached per order.
inline const GaussRule& gauss_legendre(int n) {
  if (n < 1) throw RejectedInput("gauss_legendre: order must be >= 1");
  static std::mutex mu;
  static std::map<int, std::unique_ptr<GaussRule>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<GaussRule>(detail::compute_gauss_legendre(n));
  return *slot;
}

// ---------------------------------------------------------------------------
// Chebyshev series

/// Ascending Chebyshev–Gauss points of an interval: mid − half·cos((2j+1)π/2n).
inline std::vector<double> chebyshev_gauss_nodes(Interval iv, int n) {
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j)
    x[static_cast<std::size_t>(j)] = iv.mid() - iv.half() * std::cos((2.0 * j + 1.0) * kPi / (2.0 * n));
  return x;
}

/// Truncated Chebyshev expansion Σ c_k T_k((x − mid)/half) on an interval.
class ChebSeries {
 public:
  ChebSeries() = default;
  ChebSeries(Interval iv, std::vector<double> coeffs) : iv_(iv), c_(std::move(coeffs)) {}

  /// Interpolant through values at the ascending Chebyshev–Gauss nodes of iv.
  static ChebSeries from_gauss_samples(Interval iv, std::span<const double> values) {
    const int n = static_cast<int>(values.size());
    std::vector<double> c(values.size(), 0.0);
    for (int j = 0; j < n; ++j) {
      // t_j = −cos φ_j; accumulate T_k(t_j) by the three-term recurrence.
      const double t = -std::cos((2.0 * j + 1.0) * kPi / (2.0 * n));
      const double f = values[static_cast<std::size_t>(j)];
      double tkm1 = 1.0;
      double tk = t;
      c[0] += f;
      if (n > 1) c[1] += f * t;
      for (int k = 2; k < n; ++k) {
        const double tkp1 = 2.0 * t * tk - tkm1;
        c[static_cast<std::size_t>(k)] += f * tkp1;
        tkm1 = tk;
        tk = tkp1;
      }
    }
    for (auto& ck : c) ck *= 2.0 / n;
    c[0] *= 0.5;
    return ChebSeries(iv, std::move(c));
  }

  const Interval& interval() const { return iv_; }
  const std::vector<double>& coeffs() const { return c_; }

  double operator()(double x) const {
    const double t = (x - iv_.mid()) / iv_.half();
    double b1 = 0.0;
    double b2 = 0.0;
    for (std::size_t k = c_.size(); k-- > 1;) {
      const double b0 = 2.0 * t * b1 - b2 + c_[k];
      b2 = b1;
      b1 = b0;
    }
    return t * b1 - b2 + (c_.empty() ? 0.0 : c_[0]);
  }

  /// Coefficient-space derivative.
  ChebSeries derivative() const {
    const std::size_t n = c_.size();
    if (n <= 1) return ChebSeries(iv_, {0.0});
    std::vector<double> d(n, 0.0);
    d[n - 1] = 0.0;
    d[n - 2] = 2.0 * static_cast<double>(n - 1) * c_[n - 1];
    for (std::size_t k = n - 2; k >= 1; --k) {
      d[k - 1] = (k + 1 < n ? d[k + 1] : 0.0) + 2.0 * static_cast<double>(k) * c_[k];
    }
    d[0] *= 0.5;
    d.pop_back();
    const double s = 1.0 / iv_.half();
    for (auto& v : d) v *= s;
    return ChebSeries(iv_, std::move(d));
  }

  /// Drops trailing coefficients below rel_tol·max|c|.
  ChebSeries chopped(double rel_tol) const {
    double cmax = 0.0;
    for (double v : c_) cmax = std::max(cmax, std::abs(v));
    std::size_t keep = c_.size();
    while (keep > 1 && std::abs(c_[keep - 1]) <= rel_tol * cmax) --keep;
    return ChebSeries(iv_, std::vector<double>(c_.begin(), c_.begin() + static_cast<std::ptrdiff_t>(keep)));
  }

 private:
  Interval iv_{};
  std::vector<double> c_;
};

// ---------------------------------------------------------------------------
// Quadrature grids for ∫ g(y)/σ(y) dy

/// Anything that carries nodes and weights approximating ∫_lo^hi g(y)/σ(y) dy.
template <class G>
concept SigmaQuadrature = requires(const G& g) {
  { g.interval() } -> std::convertible_to<Interval>;
  { g.nodes() } -> std::convertible_to<std::span<const double>>;
  { g.weights() } -> std::convertible_to<std::span<const double>>;
};

/// Chebyshev–Gauss points with the π/n weights of the 1/σ-weighted rule.
class ChebyshevGrid {
 public:
  ChebyshevGrid(Interval iv, int n_nodes) : iv_(iv), n_(n_nodes) {
    if (!(iv.lo < iv.hi) || !std::isfinite(iv.lo) || !std::isfinite(iv.hi))
      throw RejectedInput("ChebyshevGrid: need finite lo < hi");
    if (n_nodes < 4) throw RejectedInput("ChebyshevGrid: need at least 4 nodes");
    nodes_ = chebyshev_gauss_nodes(iv, n_nodes);
    weights_.assign(nodes_.size(), kPi / n_nodes);
  }

  const Interval& interval() const { return iv_; }
  int size() const { return n_; }
  std::span<const double> nodes() const { return nodes_; }
  std::span<const double> weights() const { return weights_; }

 private:
  Interval iv_;
  int n_;
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

/// Composite Gauss–Legendre rule in the angle variable. Panels are given
/// either as θ-breakpoints or as x-breakpoints (mapped through the cosine).
class CompositeGrid {
 public:
  static CompositeGrid from_theta_breaks(Interval iv, std::vector<double> thetas, int order) {
    return CompositeGrid(iv, std::move(thetas), order);
  }

  static CompositeGrid from_x_breaks(Interval iv, std::span<const double> xs, int order) {
    std::vector<double> th;
    th.reserve(xs.size() + 2);
    th.push_back(0.0);
    for (double x : xs) {
      if (x <= iv.lo || x >= iv.hi) continue;
      th.push_back(std::acos(std::clamp((iv.mid() - x) / iv.half(), -1.0, 1.0)));
    }
    th.push_back(kPi);
    return CompositeGrid(iv, std::move(th), order);
  }

  const Interval& interval() const { return iv_; }
  std::span<const double> nodes() const { return nodes_; }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> theta_breaks() const { return thetas_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  CompositeGrid(Interval iv, std::vector<double> thetas, int order) : iv_(iv), thetas_(std::move(thetas)) {
    if (!(iv.lo < iv.hi)) throw RejectedInput("CompositeGrid: need lo < hi");
    std::sort(thetas_.begin(), thetas_.end());
    thetas_.erase(std::unique(thetas_.begin(), thetas_.end(),
                              [](double p, double q) { return std::abs(p - q) < 1e-15; }),
                  thetas_.end());
    const GaussRule& gl = gauss_legendre(order);
    for (std::size_t p = 0; p + 1 < thetas_.size(); ++p) {
      const double t0 = thetas_[p];
      const double t1 = thetas_[p + 1];
      const double hm = 0.5 * (t1 - t0);
      const double cm = 0.5 * (t1 + t0);
      for (std::size_t q = 0; q < gl.nodes.size(); ++q) {
        const double th = cm + hm * gl.nodes[q];
        nodes_.push_back(iv.mid() - iv.half() * std::cos(th));
        weights_.push_back(hm * gl.weights[q]);
      }
    }
  }

  Interval iv_;
  std::vector<double> thetas_;
  std::vector<double> nodes_;
  std::vector<double> weights_;
};

/// ∫_lo^hi g(y)/σ(y) dy by the grid's weighted rule.
template <SigmaQuadrature Grid>
double weighted_quad(const SmoothFn& g, const Grid& grid) {
  const auto nodes = grid.nodes();
  const auto w = grid.weights();
  double acc = 0.0;
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    const double v = g(nodes[j]);
    if (!std::isfinite(v)) throw NumericError("weighted_quad: non-finite integrand", nodes[j]);
    acc += w[j] * v;
  }
  return acc;
}

/// Relative (to interval width) distance below which a divided difference is
/// replaced by the derivative.
inline constexpr double kDiagonalTolerance = 1e-8;

/// ∫ (g(y) − g(x)) / (σ(y)(y − x)) dy for x strictly inside the interval.
template <SigmaQuadrature Grid>
double subtracted_pv(const SmoothFn& g, double x, const Grid& grid) {
  const Interval iv = grid.interval();
  if (!iv.contains_open(x))
    throw DomainError("subtracted_pv: x=" + std::to_string(x) + " outside the open interval");
  const double tol = kDiagonalTolerance * iv.width();
  const double gx = g(x);
  const auto nodes = grid.nodes();
  const auto w = grid.weights();
  double acc = 0.0;
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    const double dy = nodes[j] - x;
    const double dd = std::abs(dy) < tol ? g.derivative(x, 1) : (g(nodes[j]) - gx) / dy;
    if (!std::isfinite(dd)) throw NumericError("subtracted_pv: non-finite integrand", nodes[j]);
    acc += w[j] * dd;
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Interpolants

/// Chebyshev interpolant with spectral derivatives up to order min(3, n − 1).
class ChebInterp {
 public:
  ChebInterp(std::span<const double> samples, const ChebyshevGrid& grid) {
    if (static_cast<int>(samples.size()) != grid.size())
      throw RejectedInput("cheb_interpolate: " + std::to_string(samples.size()) +
                          " samples for a grid of " + std::to_string(grid.size()) + " nodes");
    for (std::size_t j = 0; j < samples.size(); ++j)
      if (!std::isfinite(samples[j]))
        throw RejectedInput("cheb_interpolate: non-finite sample at node " + std::to_string(j));
    max_order_ = std::min(3, grid.size() - 1);
    series_.push_back(ChebSeries::from_gauss_samples(grid.interval(), samples));
    for (int p = 1; p <= max_order_; ++p) series_.push_back(series_.back().derivative());
  }

  explicit ChebInterp(ChebSeries s, int max_order = 3) : max_order_(max_order) {
    series_.push_back(std::move(s));
    for (int p = 1; p <= max_order_; ++p) series_.push_back(series_.back().derivative());
  }

  int max_order() const { return max_order_; }
  const ChebSeries& series(int order = 0) const { return series_.at(static_cast<std::size_t>(order)); }
  double operator()(double x, int order = 0) const { return series_[static_cast<std::size_t>(order)](x); }

  SmoothFn as_fn() const {
    auto self = std::make_shared<const ChebInterp>(*this);
    return SmoothFn([self](double x, int order) { return (*self)(x, order); }, max_order_,
                    series_.front().interval());
  }

 private:
  int max_order_ = 0;
  std::vector<ChebSeries> series_;
};

inline SmoothFn cheb_interpolate(std::span<const double> samples, const ChebyshevGrid& grid) {
  return ChebInterp(samples, grid).as_fn();
}

/// Piecewise Chebyshev interpolant: one Chebyshev–Gauss series per panel with
/// coefficient-space derivatives. Points outside the panels use the nearest
/// end panel.
class PanelInterp {
 public:
  PanelInterp() = default;

  PanelInterp(std::vector<double> breaks, int nodes_per_panel,
              const std::function<double(double)>& fn, int max_order = 3)
      : breaks_(std::move(breaks)), max_order_(max_order) {
    if (breaks_.size() < 2) throw RejectedInput("PanelInterp: need at least one panel");
    if (nodes_per_panel < 4) throw RejectedInput("PanelInterp: need at least 4 nodes per panel");
    for (std::size_t p = 0; p + 1 < breaks_.size(); ++p) {
      if (!(breaks_[p] < breaks_[p + 1])) throw RejectedInput("PanelInterp: breakpoints must increase");
      const Interval iv{breaks_[p], breaks_[p + 1]};
      const auto xs = chebyshev_gauss_nodes(iv, nodes_per_panel);
      std::vector<double> v(xs.size());
      for (std::size_t j = 0; j < xs.size(); ++j) {
        v[j] = fn(xs[j]);
        if (!std::isfinite(v[j])) throw NumericError("PanelInterp: non-finite sample", xs[j]);
      }
      std::vector<ChebSeries> ders;
      ders.push_back(ChebSeries::from_gauss_samples(iv, v));
      for (int o = 1; o <= max_order_; ++o) ders.push_back(ders.back().derivative());
      panels_.push_back(std::move(ders));
    }
  }

  Interval domain() const { return {breaks_.front(), breaks_.back()}; }
  std::span<const double> breaks() const { return breaks_; }
  int max_order() const { return max_order_; }
  bool empty() const { return panels_.empty(); }

  double operator()(double x, int order = 0) const {
    return panels_[panel_index(x)][static_cast<std::size_t>(order)](x);
  }

  std::size_t panel_index(double x) const {
    auto it = std::upper_bound(breaks_.begin() + 1, breaks_.end() - 1, x);
    return static_cast<std::size_t>(it - (breaks_.begin() + 1));
  }

 private:
  std::vector<double> breaks_;
  int max_order_ = 0;
  std::vector<std::vector<ChebSeries>> panels_;
};

/// Least-squares slope of log y against log x; NaN if any y is not positive.
inline double loglog_slope(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(y[i] > 0.0)) return std::numeric_limits<double>::quiet_NaN();
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx; sy += ly; sxx += lx * lx; sxy += lx * ly;
  }
  const double dn = static_cast<double>(n);
  return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

}  // namespace betagas
