#pragma once

// Config-driven experiment runner: validation, task orchestration, artifacts.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <openssl/evp.h>

#include "betagas/equilibrium.hpp"
#include "betagas/errors.hpp"
#include "betagas/loop_eqs.hpp"
#include "betagas/master_operator.hpp"
#include "betagas/meso.hpp"
#include "betagas/sampler.hpp"
#include "betagas/statistics.hpp"
#include "json.hpp"

namespace betagas {

#ifdef BETAGAS_VERSION
inline constexpr const char* kArtifactVersion = BETAGAS_VERSION;
#else
inline constexpr const char* kArtifactVersion = "0.1.0";
#endif

inline constexpr const char* kConfigSchema = R"({
  "type": "object",
  "additionalProperties": false,
  "required": ["potential", "beta", "alpha", "E", "test_function", "sampler", "tasks"],
  "properties": {
    "potential": {
      "type": "object",
      "additionalProperties": false,
      "required": ["coeffs"],
      "properties": {"coeffs": {"type": "array", "minItems": 1, "items": {"type": "number"}}}
    },
    "beta": {"type": "number", "exclusiveMinimum": 0},
    "N": {"type": "integer", "minimum": 2},
    "N_list": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 2}},
    "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    "E": {"type": "number"},
    "test_function": {
      "type": "object",
      "additionalProperties": false,
      "required": ["family", "k"],
      "properties": {
        "family": {"enum": ["bump", "poly_bump"]},
        "k": {"type": "integer", "minimum": 6, "maximum": 64},
        "table": {"type": "array", "minItems": 1, "items": {"type": "number"}}
      }
    },
    "sampler": {
      "type": "object",
      "additionalProperties": false,
      "required": ["n_samples", "burn_in", "thinning", "seed"],
      "properties": {
        "kind": {"enum": ["mcmc", "tridiagonal"]},
        "n_samples": {"type": "integer", "minimum": 1},
        "burn_in": {"type": "integer", "minimum": 0},
        "thinning": {"type": "integer", "minimum": 1},
        "n_chains": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "step_scale": {"type": "number", "exclusiveMinimum": 0},
        "target_acceptance": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}
      }
    },
    "moments_k_max": {"type": "integer", "minimum": 1, "maximum": 8},
    "loops_k_max": {"type": "integer", "minimum": 1, "maximum": 6},
    "tasks": {
      "type": "array",
      "minItems": 1,
      "uniqueItems": true,
      "items": {"enum": ["equilibrium", "clt", "loops", "rigidity", "bounds"]}
    },
    "output_dir": {"type": "string"}
  }
})";

namespace detail {

/// Subset of JSON Schema: type, enum, required, properties, additionalProperties,
/// minimum/maximum (inclusive and exclusive), items, minItems, uniqueItems.
inline void validate_schema(const nlohmann::json& v, const nlohmann::json& s, const std::string& path) {
  const std::string where = path.empty() ? "/" : path;
  if (s.contains("type")) {
    const std::string t = s["type"];
    const bool ok = (t == "object" && v.is_object()) || (t == "array" && v.is_array()) ||
                    (t == "string" && v.is_string()) || (t == "number" && v.is_number()) ||
                    (t == "integer" && v.is_number_integer());
    if (!ok) throw ConfigError("schema: " + where + " must be of type " + t);
  }
  if (s.contains("enum") && std::find(s["enum"].begin(), s["enum"].end(), v) == s["enum"].end())
    throw ConfigError("schema: " + where + " has value " + v.dump() + ", allowed " + s["enum"].dump());
  if (v.is_number()) {
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError("schema: " + where + " must be finite");
    if (s.contains("minimum") && x < s["minimum"].get<double>())
      throw ConfigError("schema: " + where + " must be >= " + s["minimum"].dump());
    if (s.contains("maximum") && x > s["maximum"].get<double>())
      throw ConfigError("schema: " + where + " must be <= " + s["maximum"].dump());
    if (s.contains("exclusiveMinimum") && !(x > s["exclusiveMinimum"].get<double>()))
      throw ConfigError("schema: " + where + " must be > " + s["exclusiveMinimum"].dump());
    if (s.contains("exclusiveMaximum") && !(x < s["exclusiveMaximum"].get<double>()))
      throw ConfigError("schema: " + where + " must be < " + s["exclusiveMaximum"].dump());
  }
  if (v.is_array()) {
    if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>())
      throw ConfigError("schema: " + where + " needs at least " + s["minItems"].dump() + " items");
    if (s.value("uniqueItems", false)) {
      for (std::size_t i = 0; i < v.size(); ++i)
        for (std::size_t j = i + 1; j < v.size(); ++j)
          if (v[i] == v[j]) throw ConfigError("schema: " + where + " has duplicate item " + v[i].dump());
    }
    if (s.contains("items"))
      for (std::size_t i = 0; i < v.size(); ++i) validate_schema(v[i], s["items"], path + "/" + std::to_string(i));
  }
  if (v.is_object()) {
    if (s.contains("required"))
      for (const auto& r : s["required"])
        if (!v.contains(r.get<std::string>())) throw ConfigError("schema: " + where + " is missing required key " + r.dump());
    const auto props = s.value("properties", nlohmann::json::object());
    for (const auto& [key, val] : v.items()) {
      if (props.contains(key)) validate_schema(val, props[key], path + "/" + key);
      else if (!s.value("additionalProperties", true)) throw ConfigError("schema: unknown key " + path + "/" + key);
    }
  }
}

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw ConfigError("sha256: digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << text;
  if (!os) throw ConfigError("write failed for " + path.string());
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("invalid JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace detail

struct ExperimentConfig {
  std::vector<double> coeffs;
  double beta = 2.0;
  std::optional<std::size_t> N;
  std::vector<std::size_t> N_list;
  double alpha = 0.3;
  double E = 0.0;
  std::string family = "bump";
  int k = 6;
  std::vector<double> table;
  std::string sampler_kind = "mcmc";
  SamplerSettings sampler;
  int moments_k_max = 4;
  int loops_k_max = 3;
  std::vector<std::string> tasks;
  std::string output_dir = "betagas_out";

  Potential potential() const { return Potential::polynomial(coeffs, beta); }
  TestFunction test_function() const { return family == "bump" ? TestFunction::bump(k) : TestFunction::poly_bump(table, k); }
  MesoWindow window() const { return {E, alpha}; }

  bool wants(const std::string& task) const { return std::find(tasks.begin(), tasks.end(), task) != tasks.end(); }

  /// Every numerics-relevant field with defaults filled in; output_dir is excluded.
  nlohmann::json canonical() const {
    nlohmann::json j;
    j["potential"] = {{"coeffs", coeffs}};
    j["beta"] = beta;
    if (N) j["N"] = *N;
    if (!N_list.empty()) j["N_list"] = N_list;
    j["alpha"] = alpha;
    j["E"] = E;
    j["test_function"] = {{"family", family}, {"k", k}};
    if (!table.empty()) j["test_function"]["table"] = table;
    j["sampler"] = {{"kind", sampler_kind}, {"n_samples", sampler.n_samples}, {"burn_in", sampler.burn_in},
                    {"thinning", sampler.thinning}, {"n_chains", sampler.n_chains}, {"seed", sampler.seed},
                    {"step_scale", sampler.step_scale}, {"target_acceptance", sampler.target_acceptance}};
    j["moments_k_max"] = moments_k_max;
    j["loops_k_max"] = loops_k_max;
    j["tasks"] = tasks;
    return j;
  }

  std::string hash() const { return detail::sha256_hex(canonical().dump()); }
};

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  detail::validate_schema(j, nlohmann::json::parse(kConfigSchema), "");
  ExperimentConfig c;
  c.coeffs = j["potential"]["coeffs"].get<std::vector<double>>();
  c.beta = j["beta"].get<double>();
  if (j.contains("N")) c.N = j["N"].get<std::size_t>();
  if (j.contains("N_list")) c.N_list = j["N_list"].get<std::vector<std::size_t>>();
  c.alpha = j["alpha"].get<double>();
  c.E = j["E"].get<double>();
  const auto& tf = j["test_function"];
  c.family = tf["family"].get<std::string>();
  c.k = tf["k"].get<int>();
  if (tf.contains("table")) c.table = tf["table"].get<std::vector<double>>();
  if (c.family == "poly_bump" && c.table.empty()) throw ConfigError("config: poly_bump needs a coefficient table");
  if (c.family == "bump" && !c.table.empty()) throw ConfigError("config: table is only valid with poly_bump");
  const auto& s = j["sampler"];
  c.sampler_kind = s.value("kind", "mcmc");
  c.sampler.n_samples = s["n_samples"].get<std::size_t>();
  c.sampler.burn_in = s["burn_in"].get<std::size_t>();
  c.sampler.thinning = s["thinning"].get<std::size_t>();
  c.sampler.n_chains = s.value("n_chains", std::size_t{1});
  c.sampler.seed = s["seed"].get<std::uint64_t>();
  c.sampler.step_scale = s.value("step_scale", 1.0);
  c.sampler.target_acceptance = s.value("target_acceptance", 0.3);
  c.moments_k_max = j.value("moments_k_max", 4);
  c.loops_k_max = j.value("loops_k_max", 3);
  c.tasks = j["tasks"].get<std::vector<std::string>>();
  if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();

  if ((c.wants("clt") || c.wants("loops")) && !c.N) throw ConfigError("config: tasks clt and loops need N");
  if (c.wants("rigidity") && c.N_list.size() < 2) throw ConfigError("config: rigidity needs N_list with >= 2 sizes");
  if (c.wants("bounds") && c.N_list.size() < 4) throw ConfigError("config: bounds needs N_list with >= 4 sizes");
  if (c.sampler_kind == "tridiagonal" && c.coeffs != std::vector<double>{0.0, 0.0, 0.5})
    throw ConfigError("config: the tridiagonal sampler requires potential coeffs [0, 0, 0.5]");
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) { return parse_config(detail::read_json(path)); }

// ---------------------------------------------------------------------------

class Experiment {
 public:
  Experiment(ExperimentConfig cfg, std::filesystem::path out, std::size_t threads)
      : cfg_(std::move(cfg)), out_(std::move(out)), threads_(std::max<std::size_t>(1, threads)) {
    cfg_.sampler.threads = threads_;
  }

  const ExperimentConfig& config() const { return cfg_; }
  const std::filesystem::path& out_dir() const { return out_; }

  /// Runs the named tasks (plus "sample" when clt or loops need it) and updates manifest.json.
  nlohmann::json run(const std::vector<std::string>& requested) {
    std::filesystem::create_directories(out_);
    load_manifest();
    const auto has = [&](const char* t) { return std::find(requested.begin(), requested.end(), t) != requested.end(); };
    for (const char* t : {"equilibrium", "sample", "clt", "loops", "rigidity", "bounds"}) {
      if (!has(t)) continue;
      const auto t0 = std::chrono::steady_clock::now();
      const std::vector<std::string> files = run_task(t);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      manifest_["tasks"][t] = {{"files", files}, {"seconds", secs}};
      detail::write_text(out_ / "manifest.json", manifest_.dump(2) + "\n");
    }
    return manifest_;
  }

  /// Tasks for the `all` subcommand: those in the config, in dependency order.
  std::vector<std::string> all_tasks() const {
    std::vector<std::string> t;
    if (cfg_.wants("equilibrium")) t.push_back("equilibrium");
    if (cfg_.wants("clt") || cfg_.wants("loops")) t.push_back("sample");
    for (const char* x : {"clt", "loops", "rigidity", "bounds"})
      if (cfg_.wants(x)) t.push_back(x);
    return t;
  }

 private:
  void load_manifest() {
    const std::string h = cfg_.hash();
    const auto path = out_ / "manifest.json";
    if (std::filesystem::exists(path)) {
      const auto old = detail::read_json(path);
      if (old.value("config_hash", "") == h && old.value("artifact_version", "") == kArtifactVersion) {
        manifest_ = old;
        return;
      }
    }
    manifest_ = {{"config_hash", h}, {"artifact_version", kArtifactVersion}, {"config", cfg_.canonical()},
                 {"tasks", nlohmann::json::object()}};
  }

  const Potential& potential() {
    if (!pot_) pot_ = cfg_.potential();
    return *pot_;
  }

  const EquilibriumMeasure& measure() {
    if (!mu_) mu_ = equilibrium_measure(potential());
    return *mu_;
  }

  const MasterOperator& op() {
    if (!op_) op_.emplace(potential(), measure());
    return *op_;
  }

  std::size_t need_N() const {
    if (!cfg_.N) throw ConfigError("config: this task needs N");
    return *cfg_.N;
  }

  SampleBatch draw(std::size_t N, std::uint64_t seed) const {
    if (cfg_.sampler_kind == "tridiagonal") return tridiag_hermite_sample(N, cfg_.beta, cfg_.sampler.n_samples, seed);
    SamplerSettings st = cfg_.sampler;
    st.seed = seed;
    return mcmc_sample(GasConfig{N, cfg_.potential()}, st);
  }

  const SampleBatch& batch() {
    if (batch_) return *batch_;
    const auto path = out_ / "samples.bgas";
    if (manifest_["tasks"].contains("sample") && std::filesystem::exists(path)) {
      batch_ = read_batch(path);
    } else {
      batch_ = draw(need_N(), cfg_.sampler.seed);
      write_batch(*batch_, path);
      manifest_["tasks"]["sample"] = {{"files", {"samples.bgas", "samples.bgas.json"}}, {"seconds", 0.0}};
    }
    return *batch_;
  }

  std::vector<std::string> run_task(const std::string& t) {
    if (t == "equilibrium") return task_equilibrium();
    if (t == "sample") {
      batch_ = draw(need_N(), cfg_.sampler.seed);
      write_batch(*batch_, out_ / "samples.bgas");
      return {"samples.bgas", "samples.bgas.json"};
    }
    if (t == "clt") return task_clt();
    if (t == "loops") return task_loops();
    if (t == "rigidity") return task_rigidity();
    if (t == "bounds") return task_bounds();
    throw ConfigError("unknown task " + t);
  }

  std::vector<std::string> task_equilibrium() {
    const auto& mu = measure();
    const double residual = equilibrium_residual(potential(), mu);
    const auto off = offcritical_check(potential(), mu);
    std::ostringstream csv;
    csv << "x,density,cdf\n";
    for (int i = 0; i <= 200; ++i) {
      const double x = mu.a() + (mu.b() - mu.a()) * i / 200.0;
      csv << detail::fmt17(x) << ',' << detail::fmt17(mu.density(x)) << ',' << detail::fmt17(mu.cdf(x)) << '\n';
    }
    detail::write_text(out_ / "equilibrium.csv", csv.str());
    const nlohmann::json j{{"a", mu.a()}, {"b", mu.b()}, {"total_mass", mu.total_mass()}, {"residual", residual},
                           {"offcritical", {{"pass", off.pass}, {"min_excess", off.min_excess}}}};
    detail::write_text(out_ / "equilibrium.json", j.dump(2) + "\n");
    return {"equilibrium.csv", "equilibrium.json"};
  }

  std::vector<std::string> task_clt() {
    const auto& b = batch();
    const auto rep = moment_report(b, cfg_.test_function(), cfg_.window(), measure(), cfg_.moments_k_max);
    detail::write_text(out_ / "moments.csv", to_csv(rep));
    detail::write_text(out_ / "moments.json", to_json(rep).dump(2) + "\n");
    return {"moments.csv", "moments.json"};
  }

  std::vector<std::string> task_loops() {
    const auto& b = batch();
    const auto rep = loop_test(b, cfg_.test_function(), cfg_.window(), op(), cfg_.loops_k_max);
    detail::write_text(out_ / "loops.csv", to_csv(rep));
    detail::write_text(out_ / "loops.json", to_json(rep).dump(2) + "\n");
    return {"loops.csv", "loops.json"};
  }

  std::vector<std::string> task_rigidity() {
    std::vector<RigidityReport> reps;
    std::ostringstream csv;
    csv << "N,q10,median,q90\n";
    for (std::size_t i = 0; i < cfg_.N_list.size(); ++i) {
      const std::size_t N = cfg_.N_list[i];
      CounterRng seeder(cfg_.sampler.seed, 0x52494749ULL + i);
      const auto b = draw(N, seeder());
      reps.push_back(rigidity_statistic(b, quantiles(measure(), N)));
      const auto& r = reps.back();
      csv << N << ',' << detail::fmt17(r.q10) << ',' << detail::fmt17(r.median) << ',' << detail::fmt17(r.q90) << '\n';
    }
    const double xi = rigidity_exponent(reps);
    detail::write_text(out_ / "rigidity.csv", csv.str());
    detail::write_text(out_ / "rigidity.json", nlohmann::json{{"exponent", xi}, {"N_list", cfg_.N_list}}.dump(2) + "\n");
    return {"rigidity.csv", "rigidity.json"};
  }

  std::vector<std::string> task_bounds() {
    const auto rep = bound_diagnostics(op(), cfg_.test_function(), cfg_.window(), cfg_.N_list);
    std::ostringstream csv;
    csv << "N,sup0,sup1,sup2,sup3,decay_ratio\n";
    for (const auto& r : rep.rows) {
      csv << r.N;
      for (double s : r.sup) csv << ',' << detail::fmt17(s);
      csv << ',' << detail::fmt17(r.decay_ratio) << '\n';
    }
    detail::write_text(out_ / "bounds.csv", csv.str());
    const nlohmann::json j{{"alpha", rep.alpha}, {"slope", rep.slope}, {"decay_pass", rep.decay_pass}};
    detail::write_text(out_ / "bounds.json", j.dump(2) + "\n");
    return {"bounds.csv", "bounds.json"};
  }

  ExperimentConfig cfg_;
  std::filesystem::path out_;
  std::size_t threads_;
  nlohmann::json manifest_;
  std::optional<Potential> pot_;
  std::optional<EquilibriumMeasure> mu_;
  std::optional<MasterOperator> op_;
  std::optional<SampleBatch> batch_;
};

// ---------------------------------------------------------------------------
// Report

struct CheckRow {
  std::string check;
  std::string clause;
  double value = 0.0;
  std::string threshold;
  bool pass = false;
};

/// Acceptance-style checks over the artifacts listed in out/manifest.json.
inline std::vector<CheckRow> report_checks(const std::filesystem::path& out) {
  const auto mpath = out / "manifest.json";
  if (!std::filesystem::exists(mpath)) throw ConfigError("report: missing " + mpath.string());
  const auto manifest = detail::read_json(mpath);
  for (const auto& [task, entry] : manifest.at("tasks").items())
    for (const auto& f : entry.at("files"))
      if (!std::filesystem::exists(out / f.get<std::string>()))
        throw ConfigError("report: task " + task + " lists missing file " + f.get<std::string>());
  const auto has = [&](const char* t) { return manifest["tasks"].contains(t); };
  std::vector<CheckRow> rows;
  if (has("equilibrium")) {
    const auto j = detail::read_json(out / "equilibrium.json");
    const double r = j["residual"].get<double>();
    rows.push_back({"equilibrium residual", "variational equality on the support", r, "<= 1e-6", r <= 1e-6});
    const double e = j["offcritical"]["min_excess"].get<double>();
    rows.push_back({"off-criticality", "strict inequality off the support", e, "> 0",
                    j["offcritical"]["pass"].get<bool>()});
  }
  if (has("clt")) {
    const auto j = detail::read_json(out / "moments.json");
    for (const auto& m : j["moments"]) {
      const int k = m["k"].get<int>();
      const double z = m["z"].is_null() ? INFINITY : m["z"].get<double>();
      const double lim = k == 4 ? 5.0 : 4.0;
      rows.push_back({"m_" + std::to_string(k), "mesoscopic CLT, moment " + std::to_string(k), z,
                      "|z| <= " + std::to_string(static_cast<int>(lim)), std::abs(z) <= lim});
    }
  }
  if (has("loops")) {
    const auto j = detail::read_json(out / "loops.json");
    for (const auto& r : j["orders"]) {
      const int k = r["k"].get<int>();
      const double z = r["z"].get<double>();
      rows.push_back({"F_" + std::to_string(k), "loop equation E[F_k] = 0", z, "|z| <= 4", std::abs(z) <= 4.0});
    }
    const double res = j["identity_residual"].get<double>();
    const double scale = std::max(1.0, j["identity_scale"].get<double>());
    rows.push_back({"F_1 identity", "recentered form of F_1", res / scale, "<= 1e-6", res <= 1e-6 * scale});
  }
  if (has("rigidity")) {
    const double xi = detail::read_json(out / "rigidity.json")["exponent"].get<double>();
    rows.push_back({"rigidity exponent", "eigenvalue rigidity", xi, "<= 0.25", xi <= 0.25});
  }
  if (has("bounds")) {
    const auto j = detail::read_json(out / "bounds.json");
    const double alpha = j["alpha"].get<double>();
    for (int p = 1; p <= 3; ++p) {
      const double s = j["slope"][static_cast<std::size_t>(p)].get<double>();
      const double lo = 0.5 * p * alpha, hi = 1.5 * p * alpha;
      std::ostringstream th;
      th << "in [" << lo << ", " << hi << "]";
      rows.push_back({"bound slope p=" + std::to_string(p), "derivative growth of the inverse", s, th.str(),
                      s >= lo && s <= hi});
    }
  }
  return rows;
}

inline void print_report(const std::vector<CheckRow>& rows, std::ostream& os) {
  os << std::left << std::setw(22) << "check" << std::setw(40) << "clause" << std::setw(16) << "value"
     << std::setw(18) << "threshold" << "result\n";
  for (const auto& r : rows) {
    std::ostringstream v;
    v << std::setprecision(6) << r.value;
    os << std::left << std::setw(22) << r.check << std::setw(40) << r.clause << std::setw(16) << v.str()
       << std::setw(18) << r.threshold << (r.pass ? "PASS" : "FAIL") << '\n';
  }
}

/// One-line JSON diagnostic for standard error.
inline std::string diagnostic(const Error& e) {
  return nlohmann::json{{"error", to_string(e.kind())}, {"exit_code", exit_code(e.kind())}, {"message", e.what()}}.dump();
}

}  // namespace betagas
