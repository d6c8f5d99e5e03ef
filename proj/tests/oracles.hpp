#pragma once

// Brute-force reference computations used only by the tests. None of these
// go through the library's quadrature or interpolation code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

inline constexpr double pi = std::numbers::pi;

/// Midpoint rule for ∫_lo^hi g.
inline double midpoint(const std::function<double(double)>& g, double lo, double hi, std::size_t n) {
  const double h = (hi - lo) / static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += g(lo + (static_cast<double>(i) + 0.5) * h);
  return acc * h;
}

/// PV ∫_a^b ρ(y)/(x − y) dy by pairing points symmetric about x.
inline double pv_symmetric(const std::function<double(double)>& rho, double x, double a, double b, std::size_t n) {
  const double d = std::min(x - a, b - x);
  double acc = midpoint([&](double u) { return (rho(x - u) - rho(x + u)) / u; }, 0.0, d, n);
  if (x - d > a + 1e-15) acc += midpoint([&](double y) { return rho(y) / (x - y); }, a, x - d, n);
  if (x + d < b - 1e-15) acc += midpoint([&](double y) { return rho(y) / (x - y); }, x + d, b, n);
  return acc;
}

/// Semicircle density of radius R.
inline double semicircle(double x, double R) {
  const double v = R * R - x * x;
  return v > 0.0 ? 2.0 / (pi * R * R) * std::sqrt(v) : 0.0;
}

/// Closed-form semicircle CDF.
inline double semicircle_cdf(double x, double R) {
  if (x <= -R) return 0.0;
  if (x >= R) return 1.0;
  const double t = x / R;
  return 0.5 + (t * std::sqrt(1.0 - t * t) + std::asin(t)) / pi;
}

/// Double integral ∬_{ℝ²} ((f(x) − f(y))/(x − y))² for supp f ⊂ [−M, M]: an
/// n×n midpoint sum over the square (diagonal cells use f′) plus the exterior
/// strips, where the inner integral is exact: ∫_{|y|>M} dy/(x−y)² = 2M/(M²−x²).
inline double dirichlet_riemann(const std::function<double(double)>& f, const std::function<double(double)>& df,
                                double M, std::size_t n) {
  const double h = 2.0 * M / static_cast<double>(n);
  std::vector<double> xs(n), fs(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs[i] = -M + (static_cast<double>(i) + 0.5) * h;
    fs[i] = f(xs[i]);
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double q = i == j ? df(xs[i]) : (fs[i] - fs[j]) / (xs[i] - xs[j]);
      row += q * q;
    }
    sq += row;
  }
  sq *= h * h;
  const double tail = midpoint([&](double x) { const double v = f(x); return v * v * 2.0 * M / (M * M - x * x); }, -M, M, 20 * n);
  return sq + 2.0 * tail;
}

/// ∫ |ξ| |f̂(ξ)|² dξ with f̂(ξ) = ∫ f e^{−iξx} dx, for even f.
inline double dirichlet_fourier(const std::function<double(double)>& f, double M, double xi_max,
                                std::size_t n_xi, std::size_t n_x) {
  const double dxi = xi_max / static_cast<double>(n_xi);
  double acc = 0.0;
  for (std::size_t k = 0; k < n_xi; ++k) {
    const double xi = (static_cast<double>(k) + 0.5) * dxi;
    const double fh = midpoint([&](double x) { return f(x) * std::cos(xi * x); }, -M, M, n_x);
    acc += xi * fh * fh;
  }
  return 2.0 * acc * dxi;
}

/// Kolmogorov survival function Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}.
inline double kolmogorov_q(double lambda) {
  if (lambda < 0.2) return 1.0;
  double s = 0.0;
  for (int k = 1; k < 200; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-18) break;
  }
  return std::clamp(s, 0.0, 1.0);
}

/// Two-sample KS statistic.
inline double ks_two_sample(std::vector<double> x, std::vector<double> y) {
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] <= v) ++i;
    while (j < y.size() && y[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
  }
  return d;
}

/// Asymptotic p-value of a two-sample KS distance with effective sizes n, m.
inline double ks_pvalue(double d, double n, double m) {
  const double ne = n * m / (n + m);
  const double s = std::sqrt(ne);
  return kolmogorov_q((s + 0.12 + 0.11 / s) * d);
}

}  // namespace oracle
