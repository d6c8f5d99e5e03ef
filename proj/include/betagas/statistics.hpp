#pragma once

// Mesoscopic linear statistics, the limiting variance σ_f², and moment
// estimation with batch-means error bars.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <limits>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "betagas/core_fn.hpp"
#include "betagas/equilibrium.hpp"
#include "betagas/errors.hpp"
#include "betagas/meso.hpp"
#include "betagas/sampler.hpp"
#include "json.hpp"

namespace betagas {

inline constexpr int kLinearStatisticNodes = 400;

/// M_N(f̃) = Σ f(N^α(λ_i − E)) − N ∫ f(N^α(x − E)) dμ_V(x), with the
/// integral term computed once.
class LinearStatistic {
 public:
  LinearStatistic(TestFunction f, MesoWindow window, const EquilibriumMeasure& mu, std::size_t N)
      : f_(std::move(f)), window_(window), N_(N) {
    if (N_ < 1) throw RejectedInput("LinearStatistic: N must be >= 1");
    window_.validate(mu);
    const double w = window_.width(N_);
    const double M = f_.radius();
    lo_ = window_.E - M * w;
    hi_ = window_.E + M * w;
    if (!(lo_ > mu.a() && hi_ < mu.b()))
      throw DomainError("LinearStatistic: window [" + std::to_string(lo_) + ", " + std::to_string(hi_) +
                        "] leaves the bulk (" + std::to_string(mu.a()) + ", " + std::to_string(mu.b()) + ") at N=" +
                        std::to_string(N_));
    // u = N^α (x − E): N ∫ f̃ dμ_V = N^{1−α} ∫_{−M}^{M} f(u) ρ_V(E + u N^{−α}) du.
    const GaussRule& g = gauss_legendre(kLinearStatisticNodes);
    std::vector<double> terms(g.nodes.size());
    for (std::size_t j = 0; j < g.nodes.size(); ++j) {
      const double u = M * g.nodes[j];
      terms[j] = M * g.weights[j] * f_(u) * mu.density(window_.E + u * w);
    }
    mean_term_ = static_cast<double>(N_) * w * pairwise_sum(terms);
  }

  /// Σ_i f̃(λ_i) over the indices inside the window, ascending.
  double window_sum(std::span<const double> config) const {
    const auto first = std::lower_bound(config.begin(), config.end(), lo_);
    const auto last = std::upper_bound(first, config.end(), hi_);
    return sum_range(first, last);
  }

  /// The same sum over every index.
  double full_sum(std::span<const double> config) const { return sum_range(config.begin(), config.end()); }

  double operator()(std::span<const double> config) const {
    if (config.size() != N_) throw ShapeError("LinearStatistic: configuration length " + std::to_string(config.size()) +
                                              " != N=" + std::to_string(N_));
    return window_sum(config) - mean_term_;
  }

  double mean_term() const { return mean_term_; }
  std::size_t N() const { return N_; }

 private:
  template <class It>
  double sum_range(It first, It last) const {
    const double s = std::pow(static_cast<double>(N_), window_.alpha);
    double acc = 0.0;
    for (auto it = first; it != last; ++it) acc += f_(s * (*it - window_.E));
    return acc;
  }

  TestFunction f_;
  MesoWindow window_;
  std::size_t N_;
  double lo_ = 0.0, hi_ = 0.0;
  double mean_term_ = 0.0;
};

inline double centered_linear_statistic(std::span<const double> config, const TestFunction& f, const MesoWindow& window,
                                        const EquilibriumMeasure& mu, std::size_t N) {
  return LinearStatistic(f, window, mu, N)(config);
}

// ---------------------------------------------------------------------------
// σ_f²

struct SigmaResult {
  double value = 0.0;
  double refinement_change = 0.0;  // relative change at the last doubling
  int panels = 0;
};

namespace detail {

// ∬_{ℝ²} ((f(x) − f(y))/(x − y))² dx dy for supp f ⊂ [lo, hi]: the square by
// composite Gauss–Legendre, plus both exterior strips, where
// ∫_{y ∉ [lo, hi]} dy/(x − y)² = 1/(x − lo) + 1/(hi − x).
inline double dirichlet_integral(const TestFunction& f, int panels, int order) {
  const Interval sup = f.support();
  const GaussRule& g = gauss_legendre(order);
  std::vector<double> x, w;
  const double h = sup.width() / panels;
  for (int p = 0; p < panels; ++p)
    for (std::size_t j = 0; j < g.nodes.size(); ++j) {
      x.push_back(sup.lo + h * (p + 0.5 * (g.nodes[j] + 1.0)));
      w.push_back(0.5 * h * g.weights[j]);
    }
  const std::size_t n = x.size();
  std::vector<double> fx(n), dfx(n);
  for (std::size_t i = 0; i < n; ++i) {
    fx[i] = f(x[i]);
    dfx[i] = f.derivative(x[i], 1);
  }
  std::vector<double> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double q = std::abs(dx) < 1e-8 ? dfx[i] : (fx[i] - fx[j]) / dx;
      row += w[j] * q * q;
    }
    const double tail = 2.0 * fx[i] * fx[i] * (1.0 / (x[i] - sup.lo) + 1.0 / (sup.hi - x[i]));
    rows[i] = w[i] * (row + tail);
  }
  return pairwise_sum(rows);
}

}  // namespace detail

/// σ_f² = (1/(2βπ²)) ∬ ((f(x) − f(y))/(x − y))² dx dy, panels doubled until
/// the relative change is ≤ 1e−9.
inline SigmaResult sigma_f_squared_detail(const TestFunction& f, double beta) {
  if (!(beta > 0.0)) throw RejectedInput("sigma_f_squared: beta must be > 0");
  constexpr int kOrder = 20;
  SigmaResult r;
  r.panels = 4;
  double prev = detail::dirichlet_integral(f, r.panels, kOrder);
  while (true) {
    const double next = detail::dirichlet_integral(f, 2 * r.panels, kOrder);
    r.panels *= 2;
    r.refinement_change = next == prev ? 0.0 : std::abs(next - prev) / std::max(std::abs(next), 1e-300);
    prev = next;
    if (r.refinement_change <= 1e-9) break;
    if (r.panels >= 128) {
      if (r.refinement_change > 1e-6)
        throw AccuracyError("sigma_f_squared: relative refinement change " + std::to_string(r.refinement_change) +
                            " above 1e-6 at " + std::to_string(r.panels) + " panels");
      break;
    }
  }
  r.value = prev / (2.0 * beta * kPi * kPi);
  return r;
}

inline double sigma_f_squared(const TestFunction& f, double beta) { return sigma_f_squared_detail(f, beta).value; }

/// [E Z^1, …, E Z^{k_max}] for Z ~ N(0, σ²).
inline std::vector<double> gaussian_targets(double sigma2, int k_max) {
  if (!(sigma2 >= 0.0)) throw RejectedInput("gaussian_targets: sigma2 must be >= 0");
  if (k_max < 1) throw RejectedInput("gaussian_targets: k_max must be >= 1");
  std::vector<double> g(static_cast<std::size_t>(k_max), 0.0);
  double even = 1.0;  // (k − 1)!! σ^k
  for (int k = 2; k <= k_max; k += 2) {
    even *= static_cast<double>(k - 1) * sigma2;
    g[static_cast<std::size_t>(k - 1)] = even;
  }
  return g;
}

// ---------------------------------------------------------------------------
// Moments

inline constexpr std::size_t kBatches = 20;

/// Mean of the per-sample values and its batch-means standard error.
struct Estimate {
  double mean = 0.0;
  double se = 0.0;
};

/// 20 contiguous batches; the first n mod 20 samples are dropped so batches are equal.
inline Estimate batch_means(std::span<const double> v) {
  if (v.size() < kBatches) throw InsufficientData("batch_means: need at least 20 values, got " + std::to_string(v.size()));
  const std::size_t per = v.size() / kBatches;
  const std::size_t skip = v.size() - per * kBatches;
  std::vector<double> means(kBatches);
  for (std::size_t b = 0; b < kBatches; ++b) means[b] = pairwise_sum(v.subspan(skip + b * per, per)) / static_cast<double>(per);
  Estimate e;
  e.mean = pairwise_sum(means) / static_cast<double>(kBatches);
  double ss = 0.0;
  for (double m : means) ss += (m - e.mean) * (m - e.mean);
  e.se = std::sqrt(ss / static_cast<double>(kBatches - 1) / static_cast<double>(kBatches));
  return e;
}

struct MomentReport {
  int k_max = 4;
  std::size_t n_samples = 0;
  std::size_t N = 0;
  double sigma_f2 = 0.0;
  double mean_statistic = 0.0;   // un-recentered mean of M_N(f̃)
  std::vector<double> m;         // m_1 un-recentered, m_k (k ≥ 2) central
  std::vector<double> se;
  std::vector<double> target;
  std::vector<double> z;         // (m_k − target_k)/se_k; 0 when both numerator and se vanish
};

inline MomentReport moments_from_values(std::span<const double> values, double sigma2, int k_max,
                                        std::size_t thinning = 1) {
  if (k_max < 1) throw RejectedInput("moment_report: k_max must be >= 1");
  const std::size_t need = kBatches * std::max<std::size_t>(1, thinning);
  if (values.size() < need)
    throw InsufficientData("moment_report: " + std::to_string(values.size()) + " retained samples, need at least " +
                           std::to_string(need));
  MomentReport r;
  r.k_max = k_max;
  r.n_samples = values.size();
  r.sigma_f2 = sigma2;
  r.target = gaussian_targets(sigma2, k_max);
  r.mean_statistic = pairwise_sum(values) / static_cast<double>(values.size());
  std::vector<double> pk(values.size());
  for (int k = 1; k <= k_max; ++k) {
    for (std::size_t i = 0; i < values.size(); ++i)
      pk[i] = k == 1 ? values[i] : std::pow(values[i] - r.mean_statistic, k);
    const Estimate e = batch_means(pk);
    r.m.push_back(e.mean);
    r.se.push_back(e.se);
    const double d = e.mean - r.target[static_cast<std::size_t>(k - 1)];
    r.z.push_back(e.se > 0.0 ? d / e.se : (d == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), d)));
  }
  return r;
}

inline std::vector<double> statistic_values(const SampleBatch& batch, const LinearStatistic& stat) {
  if (batch.size() == 0) throw InsufficientData("moment_report: empty batch");
  if (batch.N != stat.N()) throw ShapeError("moment_report: batch N=" + std::to_string(batch.N) +
                                            " but statistic built for N=" + std::to_string(stat.N()));
  std::vector<double> v(batch.size());
  for (std::size_t s = 0; s < batch.size(); ++s) v[s] = stat(batch.config(s));
  return v;
}

inline MomentReport moment_report(const SampleBatch& batch, const TestFunction& f, const MesoWindow& window,
                                  const EquilibriumMeasure& mu, int k_max = 4) {
  if (batch.beta != mu.beta()) throw ShapeError("moment_report: batch beta differs from the measure's beta");
  const LinearStatistic stat(f, window, mu, batch.N);
  MomentReport r = moments_from_values(statistic_values(batch, stat), sigma_f_squared(f, mu.beta()), k_max,
                                       batch.meta.thinning);
  r.N = batch.N;
  return r;
}

namespace detail {

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline std::string fmt17(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

inline nlohmann::json to_json(const MomentReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (int k = 1; k <= r.k_max; ++k) {
    const auto i = static_cast<std::size_t>(k - 1);
    rows.push_back({{"k", k}, {"m", r.m[i]}, {"se", r.se[i]}, {"target", r.target[i]},
                    {"z", detail::finite_or_null(r.z[i])}});
  }
  return {{"N", r.N}, {"n_samples", r.n_samples}, {"k_max", r.k_max}, {"sigma_f2", r.sigma_f2},
          {"mean_statistic", r.mean_statistic}, {"moments", rows}};
}

/// Columns k, m_k, se_k, target_k, z_k.
inline std::string to_csv(const MomentReport& r) {
  std::ostringstream os;
  os << "k,m_k,se_k,target_k,z_k\n";
  for (int k = 1; k <= r.k_max; ++k) {
    const auto i = static_cast<std::size_t>(k - 1);
    os << k << ',' << detail::fmt17(r.m[i]) << ',' << detail::fmt17(r.se[i]) << ',' << detail::fmt17(r.target[i]) << ','
       << detail::fmt17(r.z[i]) << '\n';
  }
  return os.str();
}

}  // namespace betagas
