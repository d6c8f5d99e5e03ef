#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "betagas/experiment.hpp"

using namespace betagas;
namespace fs = std::filesystem;

namespace {

nlohmann::json smoke_config() {
  return nlohmann::json::parse(R"({
    "potential": {"coeffs": [0, 0, 0.5]},
    "beta": 2,
    "N": 100,
    "alpha": 0.3,
    "E": 0.0,
    "test_function": {"family": "bump", "k": 6},
    "sampler": {"n_samples": 1000, "burn_in": 200, "thinning": 2, "seed": 5},
    "tasks": ["equilibrium", "clt", "loops"]
  })");
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("betagas_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j) {
  const fs::path p = dir / "config.json";
  std::ofstream(p) << j.dump(2);
  return p;
}

int run_cli(const std::string& args, const fs::path& stderr_file) {
  const std::string cmd = std::string(BETAGAS_CLI_PATH) + " " + args + " > /dev/null 2> " + stderr_file.string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Experiment run_all(const nlohmann::json& j, const fs::path& out) {
  Experiment ex(parse_config(j), out, 2);
  ex.run(ex.all_tasks());
  return ex;
}

}  // namespace

TEST(Config, AlphaOutOfRangeIsSchemaViolation) {
  auto j = smoke_config();
  j["alpha"] = 1.2;
  EXPECT_THROW(parse_config(j), ConfigError);
  const fs::path dir = scratch("alpha");
  EXPECT_EQ(run_cli("clt --config " + write_config(dir, j).string() + " --out " + (dir / "o").string(), dir / "err"), 2);
  const auto diag = nlohmann::json::parse(slurp(dir / "err"));
  EXPECT_EQ(diag["error"], "config");
  EXPECT_EQ(diag["exit_code"], 2);
}

TEST(Config, SeedIsMandatory) {
  auto j = smoke_config();
  j["sampler"].erase("seed");
  EXPECT_THROW(parse_config(j), ConfigError);
}

TEST(Config, UnknownKeysAndBadTypesRejected) {
  auto j = smoke_config();
  j["sampler"]["sede"] = 3;
  EXPECT_THROW(parse_config(j), ConfigError);
  j = smoke_config();
  j["N"] = 100.5;
  EXPECT_THROW(parse_config(j), ConfigError);
  j = smoke_config();
  j["tasks"] = {"clt", "clt"};
  EXPECT_THROW(parse_config(j), ConfigError);
  j = smoke_config();
  j["test_function"]["family"] = "poly_bump";
  EXPECT_THROW(parse_config(j), ConfigError);
  j = smoke_config();
  j["potential"]["coeffs"] = {0, 0, 0.5, 0, 0.25};
  j["sampler"]["kind"] = "tridiagonal";
  EXPECT_THROW(parse_config(j), ConfigError);
  j = smoke_config();
  j["tasks"] = {"bounds"};
  EXPECT_THROW(parse_config(j), ConfigError);
}

TEST(Config, HashCoversNumericFieldsOnly) {
  const auto base = parse_config(smoke_config());
  auto j = smoke_config();
  j["sampler"]["thinning"] = 3;
  EXPECT_NE(parse_config(j).hash(), base.hash());
  j = smoke_config();
  j["sampler"]["seed"] = 6;
  EXPECT_NE(parse_config(j).hash(), base.hash());
  j = smoke_config();
  j["potential"]["coeffs"] = {0, 0, 0.5000001};
  EXPECT_NE(parse_config(j).hash(), base.hash());
  j = smoke_config();
  j["output_dir"] = "elsewhere";
  EXPECT_EQ(parse_config(j).hash(), base.hash());
  j = smoke_config();
  j["sampler"]["step_scale"] = 1.0;
  EXPECT_EQ(parse_config(j).hash(), base.hash());
  EXPECT_EQ(base.hash().size(), 64u);
}

TEST(Run, SmokeManifestListsArtifacts) {
  const fs::path out = scratch("smoke");
  run_all(smoke_config(), out);
  const auto m = detail::read_json(out / "manifest.json");
  EXPECT_EQ(m["config_hash"], parse_config(smoke_config()).hash());
  EXPECT_EQ(m["artifact_version"], kArtifactVersion);
  const auto lists = [&](const char* task, const char* file) {
    const auto& f = m["tasks"][task]["files"];
    return std::find(f.begin(), f.end(), file) != f.end();
  };
  EXPECT_TRUE(lists("equilibrium", "equilibrium.csv"));
  EXPECT_TRUE(lists("clt", "moments.csv"));
  EXPECT_TRUE(lists("loops", "loops.csv"));
  EXPECT_TRUE(lists("sample", "samples.bgas"));
  for (const char* t : {"equilibrium", "sample", "clt", "loops"}) EXPECT_GE(m["tasks"][t]["seconds"].get<double>(), 0.0);
}

TEST(Run, IdenticalConfigGivesIdenticalCsv) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  Experiment ea(parse_config(smoke_config()), a, 1);
  ea.run(ea.all_tasks());
  Experiment eb(parse_config(smoke_config()), b, 4);
  eb.run(eb.all_tasks());
  for (const char* f : {"moments.csv", "loops.csv", "equilibrium.csv", "samples.bgas"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  EXPECT_FALSE(slurp(a / "moments.csv").empty());
}

TEST(Run, SubcommandsReuseTheSampleBatch) {
  const fs::path out = scratch("reuse");
  Experiment ex(parse_config(smoke_config()), out, 2);
  ex.run({"sample"});
  const auto t0 = fs::last_write_time(out / "samples.bgas");
  Experiment again(parse_config(smoke_config()), out, 2);
  again.run({"clt"});
  EXPECT_EQ(fs::last_write_time(out / "samples.bgas"), t0);
  EXPECT_TRUE(fs::exists(out / "moments.csv"));
}

TEST(Run, ExitCodesForNumericalAndDataFailures) {
  const fs::path dir = scratch("codes");
  auto j = smoke_config();
  j["potential"]["coeffs"] = {0, 0, -1, 0, 0.25};
  j["tasks"] = {"equilibrium"};
  EXPECT_EQ(run_cli("equilibrium --config " + write_config(dir, j).string() + " --out " + (dir / "a").string(),
                    dir / "err3"), 3);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "err3"))["error"], "criticality");
  j = smoke_config();
  j["sampler"]["n_samples"] = 600;
  j["sampler"]["burn_in"] = 10;
  EXPECT_EQ(run_cli("loops --config " + write_config(dir, j).string() + " --out " + (dir / "b").string(), dir / "err4"),
            4);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "err4"))["error"], "insufficient_data");
}

TEST(Report, PassingRunAndLoopRows) {
  const fs::path out = scratch("report");
  run_all(smoke_config(), out);
  const auto rows = report_checks(out);
  int loop_rows = 0;
  bool m2_pass = false;
  for (const auto& r : rows) {
    if (r.check.rfind("F_", 0) == 0 && r.check != "F_1 identity") ++loop_rows;
    if (r.check == "m_2") m2_pass = r.pass;
  }
  EXPECT_EQ(loop_rows, 3);
  EXPECT_TRUE(m2_pass);
  std::ostringstream os;
  print_report(rows, os);
  EXPECT_NE(os.str().find("PASS"), std::string::npos);
}

TEST(Report, MissingArtifactIsValidationFailure) {
  const fs::path out = scratch("missing");
  run_all(smoke_config(), out);
  fs::remove(out / "moments.csv");
  EXPECT_THROW(report_checks(out), ConfigError);
  EXPECT_EQ(run_cli("report --out " + out.string(), out / "err"), 2);
  EXPECT_THROW(report_checks(scratch("empty")), ConfigError);
}

TEST(Cli, SeedOverrideChangesSamples) {
  const fs::path dir = scratch("seed");
  const fs::path cfg = write_config(dir, smoke_config());
  ASSERT_EQ(run_cli("sample --config " + cfg.string() + " --out " + (dir / "a").string() + " --threads 2", dir / "e1"), 0);
  ASSERT_EQ(run_cli("sample --config " + cfg.string() + " --out " + (dir / "b").string() + " --seed 99", dir / "e2"), 0);
  EXPECT_NE(slurp(dir / "a" / "samples.bgas"), slurp(dir / "b" / "samples.bgas"));
  EXPECT_NE(detail::read_json(dir / "a" / "manifest.json")["config_hash"],
            detail::read_json(dir / "b" / "manifest.json")["config_hash"]);
}
