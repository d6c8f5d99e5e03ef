#pragma once

// Loop-equation functionals F_k on configurations, with L_N = (1/N) Σ δ_{λ_i}
// and M_N = Σ δ_{λ_i} − N μ_V:
//   F_1 = (β/2N) Σ_{i,j} (h(λ_i) − h(λ_j))/(λ_i − λ_j) − Σ h V′(λ_i) + (1 − β/2) L_N(h′)
//   F_{k+1} = F_k M̃_N(h_k) + (∏_{l<k} M̃_N(h_l)) L_N(h h_k′)
// where the diagonal of the difference quotient is h′.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "betagas/core_fn.hpp"
#include "betagas/equilibrium.hpp"
#include "betagas/errors.hpp"
#include "betagas/master_operator.hpp"
#include "betagas/meso.hpp"
#include "betagas/sampler.hpp"
#include "betagas/statistics.hpp"
#include "json.hpp"

namespace betagas {

namespace detail {

/// Σ_{i,j} (h_i − h_j)/(x_i − x_j) with h′ on the diagonal and the mean of
/// h′ for pairs closer than tol; row sums then a tree sum.
inline double pair_sum(std::span<const double> x, std::span<const double> h, std::span<const double> dh, double tol) {
  const std::size_t n = x.size();
  std::vector<double> rows(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = x[i] - x[j];
      r += std::abs(d) < tol ? 0.5 * (dh[i] + dh[j]) : (h[i] - h[j]) / d;
    }
    rows[i] = dh[i] + 2.0 * r;
  }
  return pairwise_sum(rows);
}

}  // namespace detail

inline double F1_direct(std::span<const double> config, const SmoothFn& h, const Potential& pot, std::size_t N) {
  if (config.size() != N) throw ShapeError("F1_direct: configuration length differs from N");
  const double beta = pot.beta();
  std::vector<double> hv(N), dh(N), hvp(N);
  for (std::size_t i = 0; i < N; ++i) {
    hv[i] = h(config[i]);
    dh[i] = h.derivative(config[i], 1);
    hvp[i] = hv[i] * pot.dV(config[i]);
  }
  const double span = config.empty() ? 1.0 : std::max(1.0, config.back() - config.front());
  const double dn = static_cast<double>(N);
  return beta / (2.0 * dn) * detail::pair_sum(config, hv, dh, kDiagonalTolerance * span) - pairwise_sum(hvp) +
         (1.0 - beta / 2.0) / dn * pairwise_sum(dh);
}

inline double F1_direct(std::span<const double> config, const InverseResult& h, const Potential& pot, std::size_t N) {
  return F1_direct(config, h.as_fn(), pot, N);
}

/// Configuration-independent pieces of the recentered form, built once per (h, μ_V).
class LoopContext {
 public:
  LoopContext(const MasterOperator& op, InverseResult h, std::size_t N)
      : pot_(op.potential()), mu_(op.measure()), h_(std::move(h)), N_(N),
        rule_(op.rule_for(h_.on_support().breaks(), 32)) {
    if (N_ < 1) throw RejectedInput("LoopContext: N must be >= 1");
    const std::size_t m = rule_.nodes.size();
    hy_.resize(m);
    dhy_.resize(m);
    std::vector<double> kw(m);
    for (std::size_t j = 0; j < m; ++j) {
      hy_[j] = h_(rule_.nodes[j]);
      dhy_[j] = h_.derivative(rule_.nodes[j], 1);
      kw[j] = rule_.weights[j] * h_.source()(rule_.nodes[j]);
    }
    k_mean_ = pairwise_sum(kw);
    // ∬ DD dμ_V dμ_V over the same rule.
    std::vector<double> rows(m);
    const double tol = kDiagonalTolerance * (mu_.b() - mu_.a());
    for (std::size_t i = 0; i < m; ++i) {
      double r = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        const double d = rule_.nodes[i] - rule_.nodes[j];
        r += rule_.weights[j] * (std::abs(d) < tol ? dhy_[i] : (hy_[i] - hy_[j]) / d);
      }
      rows[i] = rule_.weights[i] * r;
    }
    double_integral_ = pairwise_sum(rows);
  }

  const InverseResult& h() const { return h_; }
  const Potential& potential() const { return pot_; }
  std::size_t N() const { return N_; }
  double double_integral() const { return double_integral_; }

  /// M_N(k) + (1 − β/2) L_N(h′) + (β/2N) ∬ DD dM_N dM_N.
  double F1_recentered(std::span<const double> config) const {
    if (config.size() != N_) throw ShapeError("F1_recentered: configuration length differs from N");
    const double beta = pot_.beta();
    const double dn = static_cast<double>(N_);
    const SmoothFn& k = h_.source();
    std::vector<double> hv(N_), dh(N_), kv(N_), cross(N_);
    for (std::size_t i = 0; i < N_; ++i) {
      hv[i] = h_(config[i]);
      dh[i] = h_.derivative(config[i], 1);
      kv[i] = k(config[i]);
    }
    const double tol = kDiagonalTolerance * (mu_.b() - mu_.a());
    for (std::size_t i = 0; i < N_; ++i) {
      double c = 0.0;
      for (std::size_t j = 0; j < rule_.nodes.size(); ++j) {
        const double d = config[i] - rule_.nodes[j];
        c += rule_.weights[j] * (std::abs(d) < tol ? 0.5 * (dh[i] + dhy_[j]) : (hv[i] - hy_[j]) / d);
      }
      cross[i] = c;
    }
    const double span = std::max(1.0, config.back() - config.front());
    const double pairs = detail::pair_sum(config, hv, dh, kDiagonalTolerance * span);
    const double bilinear = pairs - 2.0 * dn * pairwise_sum(cross) + dn * dn * double_integral_;
    const double m_k = pairwise_sum(kv) - dn * k_mean_;
    return m_k + (1.0 - beta / 2.0) / dn * pairwise_sum(dh) + beta / (2.0 * dn) * bilinear;
  }

  double F1_direct(std::span<const double> config) const { return betagas::F1_direct(config, h_, pot_, N_); }

 private:
  Potential pot_;
  EquilibriumMeasure mu_;
  InverseResult h_;
  std::size_t N_;
  MeasureRule rule_;
  std::vector<double> hy_, dhy_;
  double k_mean_ = 0.0;
  double double_integral_ = 0.0;
};

/// F_k(h, h_1, …, h_{k−1}); order = 1 + insertions.size().
struct LoopFunctional {
  SmoothFn h;
  std::vector<SmoothFn> insertions;

  int order() const { return 1 + static_cast<int>(insertions.size()); }
};

/// E[Σ_i h_l(λ_i)] for each insertion, estimated on a separate batch.
struct RecenteringMeans {
  std::vector<double> mean_sum;
};

/// [F_1, …, F_k] by the recurrence, with M̃_N(h_l) = Σ h_l(λ_i) − mean_sum[l].
inline std::vector<double> Fk_all(std::span<const double> config, const LoopFunctional& fn, const Potential& pot,
                                  std::size_t N, const RecenteringMeans& means) {
  if (means.mean_sum.size() != fn.insertions.size())
    throw ConfigError("Fk_recursive: " + std::to_string(fn.insertions.size()) + " insertions but " +
                      std::to_string(means.mean_sum.size()) + " recentring means");
  std::vector<double> F{F1_direct(config, fn.h, pot, N)};
  if (fn.insertions.empty()) return F;
  std::vector<double> hv(N);
  for (std::size_t i = 0; i < N; ++i) hv[i] = fn.h(config[i]);
  double prod = 1.0;
  std::vector<double> tmp(N);
  for (std::size_t l = 0; l < fn.insertions.size(); ++l) {
    const SmoothFn& g = fn.insertions[l];
    for (std::size_t i = 0; i < N; ++i) tmp[i] = g(config[i]);
    const double mt = pairwise_sum(tmp) - means.mean_sum[l];
    for (std::size_t i = 0; i < N; ++i) tmp[i] = hv[i] * g.derivative(config[i], 1);
    const double ln = pairwise_sum(tmp) / static_cast<double>(N);
    F.push_back(F.back() * mt + prod * ln);
    prod *= mt;
  }
  return F;
}

inline double Fk_recursive(std::span<const double> config, const LoopFunctional& fn, const Potential& pot,
                           std::size_t N, const RecenteringMeans& means) {
  return Fk_all(config, fn, pot, N, means).back();
}

// ---------------------------------------------------------------------------
// Empirical check of E[F_k] = 0

struct LoopRow {
  int k = 0;
  double mean = 0.0, se = 0.0, z = 0.0;
  // F_k − (M̃^k − (k − 1) σ_f² M̃^{k−2})
  double induction_mean = 0.0, induction_se = 0.0;
};

struct LoopReport {
  std::size_t N = 0;
  std::size_t n_recentring = 0, n_evaluation = 0;
  double sigma_f2 = 0.0;
  double c_k = 0.0;
  double identity_residual = 0.0;  // max |F1_direct − F1_recentered| over the evaluation half
  double identity_scale = 0.0;     // max |F1_direct| over the same samples
  std::vector<LoopRow> rows;
};

inline constexpr std::size_t kMinLoopHalf = 500;

/// First half estimates E[Σ f̃(λ_i)]; second half evaluates F_1..F_{k_max}
/// with h = Ξ⁻¹(f̃) and all insertions f̃.
inline LoopReport loop_test(const SampleBatch& batch, const TestFunction& f, const MesoWindow& window,
                            const MasterOperator& op, int k_max = 3) {
  if (k_max < 1) throw RejectedInput("loop_test: k_max must be >= 1");
  const std::size_t half = batch.size() / 2;
  if (half < kMinLoopHalf)
    throw InsufficientData("loop_test: " + std::to_string(half) + " samples per half, need at least " +
                           std::to_string(kMinLoopHalf));
  if (batch.beta != op.beta()) throw ShapeError("loop_test: batch beta differs from the operator's beta");
  const std::size_t N = batch.N;
  const InverseResult inv = xi_inverse_meso(op, f, window, N);
  const LoopContext ctx(op, inv, N);
  const SmoothFn ft = rescaled(f, window, N);
  const LinearStatistic stat(f, window, op.measure(), N);

  LoopReport rep;
  rep.N = N;
  rep.n_recentring = half;
  rep.n_evaluation = batch.size() - half;
  rep.sigma_f2 = sigma_f_squared(f, op.beta());
  rep.c_k = inv.c_k();

  std::vector<double> sums(half);
  for (std::size_t s = 0; s < half; ++s) sums[s] = stat.window_sum(batch.config(s));
  const double mean_sum = pairwise_sum(sums) / static_cast<double>(half);

  LoopFunctional fn{inv.as_fn(), std::vector<SmoothFn>(static_cast<std::size_t>(k_max - 1), ft)};
  const RecenteringMeans means{std::vector<double>(static_cast<std::size_t>(k_max - 1), mean_sum)};
  const auto K = static_cast<std::size_t>(k_max);
  std::vector<std::vector<double>> F(K), D(K);
  for (std::size_t s = half; s < batch.size(); ++s) {
    const auto c = batch.config(s);
    const auto fk = Fk_all(c, fn, op.potential(), N, means);
    const double mt = stat.window_sum(c) - mean_sum;
    for (std::size_t k = 1; k <= K; ++k) {
      F[k - 1].push_back(fk[k - 1]);
      const double lower = k >= 2 ? static_cast<double>(k - 1) * rep.sigma_f2 * std::pow(mt, static_cast<double>(k - 2)) : 0.0;
      D[k - 1].push_back(fk[k - 1] - (std::pow(mt, static_cast<double>(k)) - lower));
    }
    const double direct = fk[0];
    rep.identity_residual = std::max(rep.identity_residual, std::abs(direct - ctx.F1_recentered(c)));
    rep.identity_scale = std::max(rep.identity_scale, std::abs(direct));
  }
  for (std::size_t k = 1; k <= K; ++k) {
    const Estimate e = batch_means(F[k - 1]);
    const Estimate d = batch_means(D[k - 1]);
    rep.rows.push_back({static_cast<int>(k), e.mean, e.se, e.se > 0.0 ? e.mean / e.se : 0.0, d.mean, d.se});
  }
  return rep;
}

inline nlohmann::json to_json(const LoopReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"k", row.k}, {"mean", row.mean}, {"se", row.se}, {"z", row.z},
                    {"induction_mean", row.induction_mean}, {"induction_se", row.induction_se}});
  return {{"N", r.N}, {"n_recentring", r.n_recentring}, {"n_evaluation", r.n_evaluation}, {"sigma_f2", r.sigma_f2},
          {"c_k", r.c_k}, {"identity_residual", r.identity_residual}, {"identity_scale", r.identity_scale},
          {"orders", rows}};
}

/// Columns k, mean, se, z.
inline std::string to_csv(const LoopReport& r) {
  std::ostringstream os;
  os << "k,mean,se,z\n" << std::setprecision(17);
  for (const auto& row : r.rows) os << row.k << ',' << row.mean << ',' << row.se << ',' << row.z << '\n';
  return os.str();
}

}  // namespace betagas
