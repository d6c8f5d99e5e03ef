#pragma once

// Samplers for the β-log gas
//   ∏_{i<j} |λ_i − λ_j|^β exp(−N Σ V(λ_i)),
// batch storage, and the rigidity statistic.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <lapacke.h>

#include "betagas/core_fn.hpp"
#include "betagas/equilibrium.hpp"
#include "betagas/errors.hpp"
#include "json.hpp"

namespace betagas {

/// SplitMix64 output function over a counter; one stream per (seed, stream id).
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(mix(seed ^ mix(stream + 0x632BE59BD9B4E019ULL))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix(key_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  std::uint64_t counter() const { return counter_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

struct GasConfig {
  std::size_t N = 0;
  Potential potential;

  double beta() const { return potential.beta(); }

  void validate() const {
    if (N < 2) throw RejectedInput("GasConfig: N must be >= 2");
  }
};

/// burn_in and thinning count sweeps; one sweep is N single-coordinate updates.
struct SamplerSettings {
  std::size_t n_samples = 1000;
  std::size_t burn_in = 1000;
  std::size_t thinning = 1;
  double step_scale = 1.0;
  std::size_t n_chains = 1;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  double target_acceptance = 0.3;

  void validate() const {
    if (n_samples < 1) throw RejectedInput("sampler: n_samples must be >= 1");
    if (thinning < 1) throw RejectedInput("sampler: thinning must be >= 1");
    if (n_chains < 1) throw RejectedInput("sampler: n_chains must be >= 1");
    if (!(step_scale > 0.0) || !std::isfinite(step_scale)) throw RejectedInput("sampler: step_scale must be > 0");
    if (!(target_acceptance > 0.0 && target_acceptance < 1.0))
      throw RejectedInput("sampler: target_acceptance must lie in (0, 1)");
  }
};

struct ChainMeta {
  std::size_t index = 0;
  std::size_t n_samples = 0;
  double acceptance_rate = 0.0;  // after burn-in
  double step_scale = 0.0;       // frozen value after adaptation
  std::uint64_t collisions = 0;
  double burn_in_drift = 0.0;    // relative drift of mean log-density over the last 20% of burn-in
  std::string warning;
};

struct BatchMeta {
  std::string sampler = "mcmc";
  std::size_t burn_in = 0;
  std::size_t thinning = 0;
  std::size_t n_chains = 0;
  std::vector<ChainMeta> chains;
};

/// Sorted configurations, stored row-major.
struct SampleBatch {
  std::size_t N = 0;
  double beta = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> data;
  BatchMeta meta;

  std::size_t size() const { return N == 0 ? 0 : data.size() / N; }
  std::span<const double> config(std::size_t s) const { return {data.data() + s * N, N}; }

  void validate() const {
    if (N == 0 || data.size() % N != 0) throw ShapeError("SampleBatch: data size is not a multiple of N");
    for (std::size_t s = 0; s < size(); ++s) {
      const auto c = config(s);
      for (std::size_t i = 0; i < N; ++i) {
        if (!std::isfinite(c[i])) throw NumericError("SampleBatch: non-finite eigenvalue", c[i]);
        if (i > 0 && !(c[i] > c[i - 1])) throw NumericError("SampleBatch: configuration not strictly increasing", c[i]);
      }
    }
  }
};

/// β Σ_{i<j} log|λ_i − λ_j| − N Σ V(λ_i).
inline double log_density(const Potential& pot, std::span<const double> lambda) {
  const std::size_t n = lambda.size();
  double pair = 0.0, conf = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    conf += pot(lambda[i]);
    for (std::size_t j = i + 1; j < n; ++j) pair += std::log(std::abs(lambda[i] - lambda[j]));
  }
  return pot.beta() * pair - static_cast<double>(n) * conf;
}

/// Single-site random-walk Metropolis on the gas.
class MetropolisChain {
 public:
  MetropolisChain(const GasConfig& cfg, std::vector<double> init, std::vector<double> steps, std::uint64_t seed,
                  std::uint64_t stream)
      : pot_(cfg.potential), N_(cfg.N), lambda_(std::move(init)), steps_(std::move(steps)), rng_(seed, stream) {
    cfg.validate();
    if (lambda_.size() != N_ || steps_.size() != N_) throw ShapeError("MetropolisChain: init/steps must have length N");
    v_.resize(N_);
    for (std::size_t i = 0; i < N_; ++i) v_[i] = pot_(lambda_[i]);
    log_pi_ = betagas::log_density(pot_, lambda_);
  }

  /// One proposal for coordinate i; returns whether it was accepted.
  bool update(std::size_t i) {
    const double x = lambda_[i];
    const double y = x + scale_ * steps_[i] * normal_(rng_);
    const double vy = pot_(y);
    const double lr = log_ratio(i, y);
    ++proposals_;
    if (lr == -std::numeric_limits<double>::infinity() && collided_) {
      ++collisions_;
      return false;
    }
    const double log_alpha = lr - static_cast<double>(N_) * (vy - v_[i]);
    if (std::log(rng_.uniform()) < log_alpha) {
      lambda_[i] = y;
      v_[i] = vy;
      log_pi_ += log_alpha;
      ++accepted_;
      return true;
    }
    return false;
  }

  void sweep() {
    for (std::size_t i = 0; i < N_; ++i) update(i);
  }

  std::span<const double> state() const { return lambda_; }
  std::vector<double> sorted_state() const {
    std::vector<double> s = lambda_;
    std::sort(s.begin(), s.end());
    return s;
  }

  double scale() const { return scale_; }
  void set_scale(double s) { scale_ = s; }
  std::uint64_t proposals() const { return proposals_; }
  std::uint64_t accepted() const { return accepted_; }
  std::uint64_t collisions() const { return collisions_; }
  void reset_counters() { proposals_ = accepted_ = 0; }
  /// Running log π(λ), updated by accepted moves.
  double log_density() const { return log_pi_; }

 private:
  static constexpr std::size_t kBlock = 32;

  // β Σ_{j≠i} log|y − λ_j| / |x − λ_j| as sums of logs of blocked products.
  double log_ratio(std::size_t i, double y) {
    collided_ = false;
    const double x = lambda_[i];
    double total = 0.0;
    std::size_t j = 0;
    while (j < N_) {
      const std::size_t end = std::min(N_, j + kBlock);
      double prod = 1.0;
      for (std::size_t m = j; m < end; ++m) {
        if (m == i) continue;
        const double dy = y - lambda_[m];
        if (dy == 0.0) {
          collided_ = true;
          return -std::numeric_limits<double>::infinity();
        }
        prod *= dy / (x - lambda_[m]);
      }
      if (std::isnormal(prod)) {
        total += std::log(std::abs(prod));
      } else {
        for (std::size_t m = j; m < end; ++m)
          if (m != i) total += std::log(std::abs(y - lambda_[m])) - std::log(std::abs(x - lambda_[m]));
      }
      j = end;
    }
    return pot_.beta() * total;
  }

  Potential pot_;
  std::size_t N_;
  std::vector<double> lambda_;
  std::vector<double> steps_;
  std::vector<double> v_;
  CounterRng rng_;
  std::normal_distribution<double> normal_;
  double scale_ = 1.0;
  double log_pi_ = 0.0;
  bool collided_ = false;
  std::uint64_t proposals_ = 0, accepted_ = 0, collisions_ = 0;
};

/// Midpoint quantiles μ_V([a, x_i]) = (i − ½)/N and half the local spacing around them.
inline std::pair<std::vector<double>, std::vector<double>> quantile_start(const EquilibriumMeasure& mu, std::size_t N) {
  std::vector<double> x(N), step(N);
  const double dn = static_cast<double>(N);
  for (std::size_t i = 0; i < N; ++i) x[i] = quantile(mu, (static_cast<double>(i) + 0.5) / dn);
  for (std::size_t i = 0; i < N; ++i) {
    const double lo = quantile(mu, std::max(0.0, static_cast<double>(i) - 0.5) / dn);
    const double hi = quantile(mu, std::min(dn, static_cast<double>(i) + 1.5) / dn);
    step[i] = 0.5 * (hi - lo);
  }
  return {x, step};
}

namespace detail {

struct ChainOutput {
  std::vector<double> data;
  ChainMeta meta;
};

inline ChainOutput run_chain(const GasConfig& cfg, const SamplerSettings& st, const std::vector<double>& init,
                             const std::vector<double>& steps, std::size_t chain, std::size_t n_samples) {
  MetropolisChain mc(cfg, init, steps, st.seed, chain);
  mc.set_scale(st.step_scale);
  ChainOutput out;
  out.meta.index = chain;
  out.meta.n_samples = n_samples;

  // Robbins–Monro on log(scale) every 10 sweeps during burn-in, frozen afterwards.
  std::vector<double> trace;
  trace.reserve(st.burn_in);
  double log_s = std::log(st.step_scale);
  std::size_t rounds = 0;
  for (std::size_t s = 0; s < st.burn_in; ++s) {
    mc.sweep();
    trace.push_back(mc.log_density());
    if ((s + 1) % 10 == 0) {
      const double acc = static_cast<double>(mc.accepted()) / static_cast<double>(mc.proposals());
      log_s += (acc - st.target_acceptance) / std::sqrt(static_cast<double>(++rounds));
      mc.set_scale(std::exp(log_s));
      mc.reset_counters();
    }
  }
  if (trace.size() >= 10) {
    const std::size_t n = trace.size(), tenth = n / 10;
    double late = 0.0, early = 0.0;
    for (std::size_t i = n - tenth; i < n; ++i) late += trace[i];
    for (std::size_t i = n - 2 * tenth; i < n - tenth; ++i) early += trace[i];
    late /= static_cast<double>(tenth);
    early /= static_cast<double>(tenth);
    out.meta.burn_in_drift = std::abs(late - early) / std::max(1.0, 0.5 * std::abs(late + early));
  }
  mc.reset_counters();

  out.data.reserve(n_samples * cfg.N);
  for (std::size_t k = 0; k < n_samples; ++k) {
    for (std::size_t t = 0; t < st.thinning; ++t) mc.sweep();
    const auto s = mc.sorted_state();
    out.data.insert(out.data.end(), s.begin(), s.end());
  }
  out.meta.step_scale = mc.scale();
  out.meta.collisions = mc.collisions();
  out.meta.acceptance_rate = mc.proposals() ? static_cast<double>(mc.accepted()) / static_cast<double>(mc.proposals()) : 0.0;
  if (out.meta.acceptance_rate < 0.05 || out.meta.acceptance_rate > 0.9)
    out.meta.warning = "acceptance rate " + std::to_string(out.meta.acceptance_rate) + " outside [0.05, 0.9]";
  if (out.meta.burn_in_drift > 0.01) {
    if (!out.meta.warning.empty()) out.meta.warning += "; ";
    out.meta.warning += "log-density still drifting at end of burn-in";
  }
  return out;
}

}  // namespace detail

/// Thinned post-burn-in states of n_chains independent chains, merged in chain order.
inline SampleBatch mcmc_sample(const GasConfig& cfg, const SamplerSettings& st) {
  cfg.validate();
  st.validate();
  const EquilibriumMeasure mu = equilibrium_measure(cfg.potential);
  const auto [init, steps] = quantile_start(mu, cfg.N);

  std::vector<std::size_t> share(st.n_chains, st.n_samples / st.n_chains);
  for (std::size_t c = 0; c < st.n_samples % st.n_chains; ++c) ++share[c];

  std::vector<detail::ChainOutput> outs(st.n_chains);
  std::vector<std::exception_ptr> errs(st.n_chains);
  const std::size_t n_threads = std::clamp<std::size_t>(st.threads, 1, st.n_chains);
  auto worker = [&](std::size_t t) {
    for (std::size_t c = t; c < st.n_chains; c += n_threads) {
      try {
        outs[c] = detail::run_chain(cfg, st, init, steps, c, share[c]);
      } catch (...) {
        errs[c] = std::current_exception();
      }
    }
  };
  if (n_threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errs)
    if (e) std::rethrow_exception(e);

  SampleBatch batch;
  batch.N = cfg.N;
  batch.beta = cfg.beta();
  batch.seed = st.seed;
  batch.meta = {"mcmc", st.burn_in, st.thinning, st.n_chains, {}};
  batch.data.reserve(st.n_samples * cfg.N);
  for (auto& o : outs) {
    batch.data.insert(batch.data.end(), o.data.begin(), o.data.end());
    batch.meta.chains.push_back(std::move(o.meta));
  }
  batch.validate();
  return batch;
}

/// Eigenvalues of the tridiagonal β-Hermite model, rescaled to V = x²/2 so
/// that the support edges are the endpoints of solve_endpoints.
inline SampleBatch tridiag_hermite_sample(std::size_t N, double beta, std::size_t n_samples, std::uint64_t seed) {
  if (N < 2) throw RejectedInput("tridiag_hermite_sample: N must be >= 2");
  if (!(beta > 0.0)) throw RejectedInput("tridiag_hermite_sample: beta must be > 0");
  if (n_samples < 1) throw RejectedInput("tridiag_hermite_sample: n_samples must be >= 1");
  const Interval ab = solve_endpoints(Potential::polynomial({0.0, 0.0, 0.5}, beta));
  // The unscaled spectrum fills [−√(2βN), √(2βN)].
  const double scale = ab.hi / std::sqrt(2.0 * beta * static_cast<double>(N));

  CounterRng rng(seed, 0);
  std::normal_distribution<double> normal;
  SampleBatch batch;
  batch.N = N;
  batch.beta = beta;
  batch.seed = seed;
  batch.meta = {"tridiagonal", 0, 1, 1, {ChainMeta{0, n_samples, 1.0, 0.0, 0, 0.0, ""}}};
  batch.data.resize(N * n_samples);
  std::vector<double> d(N), e(N - 1);
  for (std::size_t s = 0; s < n_samples; ++s) {
    for (std::size_t i = 0; i < N; ++i) d[i] = normal(rng);
    for (std::size_t i = 0; i + 1 < N; ++i) {
      std::chi_squared_distribution<double> chi2(beta * static_cast<double>(N - 1 - i));
      e[i] = std::sqrt(chi2(rng) / 2.0);
    }
    const lapack_int info = LAPACKE_dsterf(static_cast<lapack_int>(N), d.data(), e.data());
    if (info != 0) throw NumericError("tridiag_hermite_sample: dsterf did not converge", static_cast<double>(info));
    for (std::size_t i = 0; i < N; ++i) batch.data[s * N + i] = scale * d[i];
  }
  batch.validate();
  return batch;
}

// ---------------------------------------------------------------------------
// Rigidity

struct RigidityReport {
  std::size_t N = 0;
  std::vector<double> r;  // max_i N^{2/3} î^{1/3} |λ_i − γ_i| per configuration
  double q10 = 0.0, median = 0.0, q90 = 0.0;
};

inline double empirical_quantile(std::vector<double> v, double p) {
  if (v.empty()) throw InsufficientData("empirical_quantile: empty sample");
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(v.size() - 1, lo + 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// î = min(i, N + 1 − i) with 1-based i.
inline double rigidity_of(std::span<const double> lambda, const Quantiles& q) {
  const std::size_t N = lambda.size();
  if (q.N != N || q.gamma.size() != N) throw ShapeError("rigidity_statistic: quantiles built for a different N");
  const double n23 = std::pow(static_cast<double>(N), 2.0 / 3.0);
  double r = 0.0;
  for (std::size_t i = 1; i <= N; ++i) {
    const double ihat = static_cast<double>(std::min(i, N + 1 - i));
    r = std::max(r, n23 * std::cbrt(ihat) * std::abs(lambda[i - 1] - q.gamma[i - 1]));
  }
  return r;
}

inline RigidityReport rigidity_statistic(const SampleBatch& batch, const Quantiles& q) {
  if (q.N != batch.N) throw ShapeError("rigidity_statistic: batch N=" + std::to_string(batch.N) +
                                       " but quantiles N=" + std::to_string(q.N));
  RigidityReport rep;
  rep.N = batch.N;
  for (std::size_t s = 0; s < batch.size(); ++s) rep.r.push_back(rigidity_of(batch.config(s), q));
  rep.q10 = empirical_quantile(rep.r, 0.1);
  rep.median = empirical_quantile(rep.r, 0.5);
  rep.q90 = empirical_quantile(rep.r, 0.9);
  return rep;
}

/// Slope of log median(r) against log N.
inline double rigidity_exponent(std::span<const RigidityReport> reps) {
  if (reps.size() < 2) throw InsufficientData("rigidity_exponent: need at least two sizes");
  std::vector<double> ns, med;
  for (const auto& r : reps) {
    ns.push_back(static_cast<double>(r.N));
    med.push_back(r.median);
  }
  return loglog_slope(ns, med);
}

// ---------------------------------------------------------------------------
// Batch files: "BGAS1\0\0\0", u64 N, f64 beta, u64 n_samples, u64 seed, then
// row-major f64 data; chain metadata in a JSON sidecar.

inline nlohmann::json to_json(const BatchMeta& m) {
  nlohmann::json chains = nlohmann::json::array();
  for (const auto& c : m.chains)
    chains.push_back({{"index", c.index}, {"n_samples", c.n_samples}, {"acceptance_rate", c.acceptance_rate},
                      {"step_scale", c.step_scale}, {"collisions", c.collisions},
                      {"burn_in_drift", c.burn_in_drift}, {"warning", c.warning}});
  return {{"sampler", m.sampler}, {"burn_in", m.burn_in}, {"thinning", m.thinning},
          {"n_chains", m.n_chains}, {"chains", chains}};
}

inline BatchMeta batch_meta_from_json(const nlohmann::json& j) {
  BatchMeta m;
  m.sampler = j.at("sampler").get<std::string>();
  m.burn_in = j.at("burn_in").get<std::size_t>();
  m.thinning = j.at("thinning").get<std::size_t>();
  m.n_chains = j.at("n_chains").get<std::size_t>();
  for (const auto& c : j.at("chains"))
    m.chains.push_back({c.at("index").get<std::size_t>(), c.at("n_samples").get<std::size_t>(),
                        c.at("acceptance_rate").get<double>(), c.at("step_scale").get<double>(),
                        c.at("collisions").get<std::uint64_t>(), c.at("burn_in_drift").get<double>(),
                        c.at("warning").get<std::string>()});
  return m;
}

inline constexpr std::array<char, 8> kBatchMagic{'B', 'G', 'A', 'S', '1', '\0', '\0', '\0'};

inline void write_batch(const SampleBatch& b, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("write_batch: cannot open " + path.string());
  const std::uint64_t N = b.N, n = b.size(), seed = b.seed;
  os.write(kBatchMagic.data(), kBatchMagic.size());
  os.write(reinterpret_cast<const char*>(&N), sizeof N);
  os.write(reinterpret_cast<const char*>(&b.beta), sizeof b.beta);
  os.write(reinterpret_cast<const char*>(&n), sizeof n);
  os.write(reinterpret_cast<const char*>(&seed), sizeof seed);
  os.write(reinterpret_cast<const char*>(b.data.data()), static_cast<std::streamsize>(b.data.size() * sizeof(double)));
  if (!os) throw ConfigError("write_batch: write failed for " + path.string());
  std::ofstream js(path.string() + ".json");
  js << to_json(b.meta).dump(2) << '\n';
}

inline SampleBatch read_batch(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("read_batch: cannot open " + path.string());
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kBatchMagic) throw ShapeError("read_batch: bad magic in " + path.string());
  std::uint64_t N = 0, n = 0, seed = 0;
  SampleBatch b;
  is.read(reinterpret_cast<char*>(&N), sizeof N);
  is.read(reinterpret_cast<char*>(&b.beta), sizeof b.beta);
  is.read(reinterpret_cast<char*>(&n), sizeof n);
  is.read(reinterpret_cast<char*>(&seed), sizeof seed);
  if (!is || N == 0) throw ShapeError("read_batch: truncated header in " + path.string());
  b.N = N;
  b.seed = seed;
  b.data.resize(N * n);
  is.read(reinterpret_cast<char*>(b.data.data()), static_cast<std::streamsize>(b.data.size() * sizeof(double)));
  if (!is) throw ShapeError("read_batch: truncated data in " + path.string());
  if (is.peek() != std::char_traits<char>::eof()) throw ShapeError("read_batch: trailing bytes in " + path.string());
  const std::filesystem::path side = path.string() + ".json";
  if (std::filesystem::exists(side)) {
    std::ifstream js(side);
    b.meta = batch_meta_from_json(nlohmann::json::parse(js));
  }
  return b;
}

}  // namespace betagas
