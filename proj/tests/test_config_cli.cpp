#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gpepi/config.hpp"

using namespace gpepi;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> config_errors(const std::string& text) {
  try {
    parse_run_config(nlohmann::json::parse(text));
  } catch (const ConfigError& e) {
    return e.items();
  }
  return {};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Workspace : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gpepi_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  void write(const std::string& name, const std::string& text) { std::ofstream(dir_ / name) << text; }

  int run(const std::string& args) {
    const std::string cmd = "cd '" + dir_.string() + "' && '" GPEPI_CLI "' " + args + " > cli.log 2>&1";
    int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string log() { return slurp(dir_ / "cli.log"); }

  fs::path dir_;
};

const char* kPipeline = R"({
  "seed": 5,
  "workers": 1,
  "output_dir": "out",
  "data": {"farm_file": "sim/replicate_001/farms.csv", "date_mode": "days"},
  "simulate": {
    "layout": {"synthetic": {"count": 100, "side_km": 9}},
    "kernel": {"id": 6, "b0": 0.6, "b1": 2.0},
    "lambda": 4, "gamma": 0.8,
    "policy": {"mode": "simple_ring", "radius": 1.0},
    "min_infections": 8
  },
  "fit": {
    "chains": 2, "checkpoint_interval": 50,
    "grid": {"count": 32},
    "tuning": {"iterations": 150, "burn_in": 50, "thinning": 2, "audit_interval": 50}
  },
  "summarize": {"curve_knots": {"from": 0, "to": 4, "step": 1},
                "truth_file": "sim/replicate_001/truth.csv"},
  "predict": {"radii": [0, 1], "max_draws": 10}
})";

}  // namespace

TEST(Config, UnknownKeySuggestsTheClosestName) {
  auto errs = config_errors(R"({"sede": 3, "fit": {"tunning": {}}})");
  ASSERT_EQ(errs.size(), 2u);
  EXPECT_NE(errs[0].find("did you mean 'tuning'"), std::string::npos) << errs[0];
  EXPECT_NE(errs[1].find("did you mean 'seed'"), std::string::npos) << errs[1];
}

TEST(Config, AllProblemsAreReportedTogether) {
  auto errs = config_errors(R"({"workers": "four", "fit": {"chains": 0, "tuning": {"thinning": 0}}})");
  EXPECT_GE(errs.size(), 3u);
}

TEST(Config, DefaultsAndHashStability) {
  auto cfg = parse_run_config(nlohmann::json::object());
  EXPECT_FALSE(cfg.seed);
  EXPECT_EQ(cfg.predict.radii, (std::vector<double>{0.0, 1.0, 2.0}));
  auto a = nlohmann::json::parse(R"({"seed": 1, "workers": 2})");
  auto b = nlohmann::json::parse(R"({"workers": 2, "seed": 1})");
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_NE(config_hash(a), config_hash(nlohmann::json::parse(R"({"seed": 2, "workers": 2})")));
}

TEST_F(Workspace, PipelineRunsEndToEnd) {
  write("run.json", kPipeline);
  ASSERT_EQ(run("--config run.json --output-dir sim simulate"), 0) << log();
  for (auto f : {"replicate_001/farms.csv", "replicate_001/events.csv", "replicate_001/truth.csv",
                 "simulate_summary.csv", "manifest_simulate.json"})
    EXPECT_TRUE(fs::exists(dir_ / "sim" / f)) << f;
  ASSERT_EQ(run("--config run.json fit"), 0) << log();
  ASSERT_EQ(run("--config run.json summarize"), 0) << log();
  ASSERT_EQ(run("--config run.json predict"), 0) << log();
  for (auto f : {"chain_00.jsonl", "chain_01.jsonl", "fit_summary.json", "curve.csv", "scalars.csv",
                 "infection_probabilities.csv", "i_tilde.csv", "predictive.csv", "manifest_predict.json"})
    EXPECT_TRUE(fs::exists(dir_ / "out" / f)) << f;
  auto manifest = nlohmann::json::parse(slurp(dir_ / "out" / "manifest_fit.json"));
  EXPECT_EQ(manifest["seed"], 5);
  EXPECT_EQ(manifest["command"], "fit");
  const std::string predictive = slurp(dir_ / "out" / "predictive.csv");
  EXPECT_EQ(std::count(predictive.begin(), predictive.end(), '\n'), 3);
}

TEST_F(Workspace, RerunsAreByteIdentical) {
  write("run.json", kPipeline);
  ASSERT_EQ(run("--config run.json --output-dir sim simulate"), 0) << log();
  ASSERT_EQ(run("--config run.json --output-dir sim2 simulate"), 0) << log();
  EXPECT_EQ(slurp(dir_ / "sim/replicate_001/farms.csv"), slurp(dir_ / "sim2/replicate_001/farms.csv"));
  ASSERT_EQ(run("--config run.json --output-dir a fit"), 0) << log();
  ASSERT_EQ(run("--config run.json --output-dir b fit"), 0) << log();
  for (auto f : {"chain_00.jsonl", "chain_01.jsonl", "fit_summary.json"}) {
    const auto x = slurp(dir_ / "a" / f);
    EXPECT_FALSE(x.empty()) << f;
    EXPECT_EQ(x, slurp(dir_ / "b" / f)) << f;
  }
}

TEST_F(Workspace, MissingFarmFileFailsWithoutOutputs) {
  write("run.json", kPipeline);
  EXPECT_EQ(run("--config run.json fit"), 1);
  EXPECT_NE(log().find("sim/replicate_001/farms.csv"), std::string::npos) << log();
  EXPECT_FALSE(fs::exists(dir_ / "out"));
}

TEST_F(Workspace, ExitCodes) {
  write("bad.json", R"({"seed": 1, "fitt": {}})");
  EXPECT_EQ(run("--config bad.json fit"), 1);
  EXPECT_NE(log().find("did you mean 'fit'"), std::string::npos) << log();
  EXPECT_EQ(run("--config nowhere.json fit"), 1);
  write("noseed.json", R"({"simulate": {"layout": {"synthetic": {"count": 5, "side_km": 1}}}})");
  EXPECT_EQ(run("--config noseed.json simulate"), 1);
  EXPECT_NE(log().find("seed"), std::string::npos);
  EXPECT_EQ(run("--workers 0 validate"), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("--version"), 0);
  // an outbreak that never reaches the requested size is a runtime failure
  write("small.json", R"({"seed": 1, "simulate": {"layout": {"synthetic": {"count": 3, "side_km": 1}},
    "min_infections": 10, "max_attempts": 5}})");
  EXPECT_EQ(run("--config small.json simulate"), 2) << log();
}

TEST_F(Workspace, ValidateNegativeControlFails) {
  write("ok.json", R"({"output_dir": "v", "validate": {"likelihood_instances": 100, "delta_moves": 100,
    "identity_tuples": 10, "prior_sweeps": 1000}})");
  write("broken.json", R"({"output_dir": "v", "validate": {"likelihood_instances": 100, "delta_moves": 100,
    "identity_tuples": 10, "prior_sweeps": 1000, "perturb_likelihood": 1e-3}})");
  run("--config ok.json validate");
  const std::string ok = log();
  EXPECT_NE(ok.find("PASS likelihood-oracle"), std::string::npos) << ok;
  EXPECT_NE(ok.find("PASS delta-contract"), std::string::npos) << ok;
  EXPECT_NE(ok.find("PASS proposal-identity"), std::string::npos) << ok;
  EXPECT_EQ(run("--config broken.json validate"), 3);
  const std::string broken = log();
  EXPECT_NE(broken.find("FAIL likelihood-oracle"), std::string::npos) << broken;
  EXPECT_NE(broken.find("FAIL delta-contract"), std::string::npos) << broken;
  EXPECT_TRUE(fs::exists(dir_ / "v" / "validate_report.txt"));
}
