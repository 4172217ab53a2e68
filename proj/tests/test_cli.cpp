#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(::testing::TempDir()) / ("miw_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Result miw(const std::string& args, const fs::path& dir, const std::string& env = "") {
  const auto out = dir / "stdout.txt";
  const auto err = dir / "stderr.txt";
  const std::string cmd = env + " " + MIW_CLI_PATH + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

fs::path write_config(const fs::path& dir, const json& j, const std::string& name = "config.json") {
  const auto p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

json short_kernel_run() {
  return json::parse(R"({
    "mode": "kernel1d",
    "potential": {"kind": "harmonic", "omega": 1.0},
    "worlds": 12,
    "dt": 1e-3,
    "outer_iterations": 200,
    "stop": {"enabled": false},
    "trace_every": 20,
    "snapshot_every": 100
  })");
}

}  // namespace

TEST(Cli, RunWritesArtifacts) {
  const auto dir = scratch("run");
  const auto cfg = write_config(dir, short_kernel_run());
  const auto r = miw("run " + cfg.string() + " --out " + (dir / "out").string(), dir);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto trace = slurp(dir / "out" / "energy_trace.csv");
  EXPECT_EQ(trace.substr(0, trace.find('\n')), "iteration,t,E_kin,E_cls,E_qm,E_total,rel_err");
  EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 1 + 11);
  std::size_t snaps = 0;
  for (const auto& e : fs::directory_iterator(dir / "out" / "snapshots")) snaps += e.path().extension() == ".csv";
  EXPECT_EQ(snaps, 3u);
  const auto report = json::parse(slurp(dir / "out" / "report.json"));
  EXPECT_EQ(report["units"], "hbar_omega");
  EXPECT_EQ(report["termination"], "completed");
  EXPECT_EQ(report["oracle"]["exact"], 0.5);
  EXPECT_EQ(report["config"], short_kernel_run());
}

TEST(Cli, TraceIsByteIdenticalAcrossRunsAndThreads) {
  const auto dir = scratch("determinism");
  auto j = json::parse(R"({
    "mode": "kernel_voronoi_2d",
    "potential": {"kind": "harmonic", "omega": 1.0, "dimension": 2},
    "worlds": 36, "dt": 0.05, "outer_iterations": 40, "scheme": "reset",
    "init": {"kind": "random", "lower": -2.0, "upper": 2.0},
    "stop": {"enabled": false}, "seed": 17
  })");
  const auto cfg = write_config(dir, j);
  ASSERT_EQ(miw("run " + cfg.string() + " --out " + (dir / "a").string(), dir, "MIW_THREADS=1").code, 0);
  ASSERT_EQ(miw("run " + cfg.string() + " --out " + (dir / "b").string(), dir, "MIW_THREADS=1").code, 0);
  ASSERT_EQ(miw("run " + cfg.string() + " --out " + (dir / "c").string(), dir, "MIW_THREADS=4").code, 0);
  const auto a = slurp(dir / "a" / "energy_trace.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir / "b" / "energy_trace.csv"));
  EXPECT_EQ(a, slurp(dir / "c" / "energy_trace.csv"));
}

TEST(Cli, OutputDirFromConfig) {
  const auto dir = scratch("outdir");
  auto j = short_kernel_run();
  j["output_dir"] = (dir / "from_config").string();
  const auto cfg = write_config(dir, j);
  ASSERT_EQ(miw("run " + cfg.string(), dir).code, 0);
  EXPECT_TRUE(fs::exists(dir / "from_config" / "report.json"));
}

TEST(Cli, ConfigErrorsExitTwo) {
  const auto dir = scratch("config_errors");
  auto j = short_kernel_run();
  j["dt"] = -1.0;
  auto r = miw("run " + write_config(dir, j).string() + " --out " + (dir / "o").string(), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("dt"), std::string::npos) << r.err;

  j = short_kernel_run();
  j["colour"] = "blue";
  r = miw("run " + write_config(dir, j).string() + " --out " + (dir / "o").string(), dir);
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("colour"), std::string::npos) << r.err;

  r = miw("run " + (dir / "missing.json").string(), dir);
  EXPECT_EQ(r.code, 2);

  std::ofstream(dir / "broken.json") << "{ \"mode\": ";
  r = miw("run " + (dir / "broken.json").string(), dir);
  EXPECT_EQ(r.code, 2);
}

TEST(Cli, UsageErrorsExitTwo) {
  const auto dir = scratch("usage");
  EXPECT_EQ(miw("", dir).code, 2);
  EXPECT_EQ(miw("frobnicate", dir).code, 2);
  EXPECT_EQ(miw("oracle --levels 2", dir).code, 2);
  EXPECT_EQ(miw("compare", dir).code, 2);
  EXPECT_EQ(miw("--help", dir).code, 0);
}

TEST(Cli, RuntimeFailureExitsThreeWithPartialArtifacts) {
  const auto dir = scratch("runtime");
  const auto j = json::parse(R"({
    "mode": "miw1d",
    "potential": {"kind": "harmonic", "omega": 1000.0},
    "worlds": 4, "dt": 0.01, "outer_iterations": 100,
    "init": {"lower": -0.05, "upper": 0.05}
  })");
  const auto r = miw("run " + write_config(dir, j).string() + " --out " + (dir / "o").string(), dir);
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("reduce dt"), std::string::npos) << r.err;
  EXPECT_TRUE(fs::exists(dir / "o" / "energy_trace.csv"));
  const auto report = json::parse(slurp(dir / "o" / "report.json"));
  EXPECT_EQ(report["termination"], "error");
  EXPECT_TRUE(report["error"].is_string());
}

TEST(Cli, OracleClosedFormAndGrid) {
  const auto dir = scratch("oracle");
  auto r = miw("oracle --potential poschl_teller --lambda 6 --levels 3", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  auto j = json::parse(r.out);
  EXPECT_EQ(j["exact"], json({-18.0, -12.5, -8.0}));
  EXPECT_EQ(j["units"], "alpha^2 hbar^2/m");

  r = miw("oracle --potential harmonic --levels 2 --grid 2000 --domain -10 10", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  j = json::parse(r.out);
  EXPECT_NEAR(j["grid"][0].get<double>(), 0.5, 1e-4);
  EXPECT_NEAR(j["grid"][1].get<double>(), 1.5, 1e-4);

  r = miw("oracle --potential poschl_teller --lambda 5 -d 2 --levels 2 --grid 1000", dir);
  ASSERT_EQ(r.code, 0) << r.err;
  j = json::parse(r.out);
  EXPECT_EQ(j["exact"], json({-25.0, -20.5}));
  EXPECT_NEAR(j["grid"][1].get<double>(), -20.5, 1e-2);

  r = miw("oracle --potential poschl_teller --lambda 3 --levels 5", dir);
  EXPECT_EQ(r.code, 2);
}

TEST(Cli, CompareAgainstTolerance) {
  const auto dir = scratch("compare");
  const auto cfg = write_config(dir, short_kernel_run());
  ASSERT_EQ(miw("run " + cfg.string() + " --out " + (dir / "o").string(), dir).code, 0);
  const auto report = (dir / "o" / "report.json").string();
  EXPECT_EQ(miw("compare " + report + " --tol 100", dir).code, 0);
  EXPECT_EQ(miw("compare " + report + " --tol 1e-12", dir).code, 1);

  auto j = json::parse(slurp(report));
  j.erase("oracle");
  std::ofstream(dir / "no_oracle.json") << j.dump();
  EXPECT_EQ(miw("compare " + (dir / "no_oracle.json").string() + " --tol 1", dir).code, 2);
  EXPECT_EQ(miw("compare " + (dir / "absent.json").string() + " --tol 1", dir).code, 2);
}

TEST(Cli, ShippedConfigsParse) {
  const auto dir = scratch("shipped");
  for (const auto& e : fs::directory_iterator(MIW_CONFIG_DIR)) {
    auto j = json::parse(slurp(e.path()));
    j["outer_iterations"] = 3;
    j.erase("output_dir");
    const auto r = miw("run " + write_config(dir, j).string() + " --out " + (dir / e.path().stem()).string(), dir);
    EXPECT_EQ(r.code, 0) << e.path() << ": " << r.err;
  }
}
