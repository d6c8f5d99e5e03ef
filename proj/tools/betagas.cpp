#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "betagas/experiment.hpp"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::size_t threads = 0;
  std::optional<std::uint64_t> seed;
};

betagas::Experiment make_experiment(const Options& o) {
  if (o.config.empty()) throw betagas::ConfigError("--config is required");
  betagas::ExperimentConfig cfg = betagas::load_config(o.config);
  if (o.seed) cfg.sampler.seed = *o.seed;
  const std::filesystem::path out = o.out.empty() ? std::filesystem::path(cfg.output_dir) : std::filesystem::path(o.out);
  const std::size_t threads = o.threads > 0 ? o.threads : std::max(1u, std::thread::hardware_concurrency());
  return betagas::Experiment(std::move(cfg), out, threads);
}

std::filesystem::path report_dir(const Options& o) {
  if (!o.out.empty()) return o.out;
  if (!o.config.empty()) return betagas::load_config(o.config).output_dir;
  throw betagas::ConfigError("report needs --out or --config");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo and quadrature harness for one-cut beta log gases"};
  app.require_subcommand(1);
  Options o;
  const std::vector<std::string> names{"equilibrium", "sample", "clt", "loops", "rigidity", "bounds", "report", "all"};
  for (const auto& name : names) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", o.config, "experiment config (JSON)");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--threads", o.threads, "worker threads (default: logical cores)");
    sub->add_option("--seed", o.seed, "override sampler.seed");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    if (cmd == "report") {
      const auto rows = betagas::report_checks(report_dir(o));
      betagas::print_report(rows, std::cout);
      return 0;
    }
    betagas::Experiment ex = make_experiment(o);
    const std::vector<std::string> tasks = cmd == "all" ? ex.all_tasks() : std::vector<std::string>{cmd};
    ex.run(tasks);
    if (cmd == "all") betagas::print_report(betagas::report_checks(ex.out_dir()), std::cout);
    std::cout << (ex.out_dir() / "manifest.json").string() << '\n';
    return 0;
  } catch (const betagas::Error& e) {
    std::cerr << betagas::diagnostic(e) << '\n';
    return betagas::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "internal"}, {"exit_code", 1}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
}
