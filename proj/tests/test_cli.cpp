#include <gtest/gtest.h>
#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"

using namespace pt;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
 protected:
  fs::path dir;

  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir = fs::temp_directory_path() / (std::string("predictimand_cli_") + info->name());
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }

  std::string out(const std::string& name) const { return (dir / name).string(); }

  // Runs the CLI; stdout and stderr go to files in the test directory.
  int run(const std::string& args) {
    const std::string cmd = std::string(PREDICTIMAND_CLI) + " " + args + " >" + out("stdout.txt") + " 2>" +
                            out("stderr.txt");
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string stderr_text() const { return slurp(out("stderr.txt")); }

  static std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  // risk at `time` for `strategy` from a curves.csv
  static double curve_value(const std::string& path, const std::string& strategy, double time) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    double value = -1.0;
    while (std::getline(in, line)) {
      std::vector<std::string> f;
      std::stringstream ss(line);
      for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
      if (f.size() == 4 && f[0] == strategy && std::stod(f[2]) <= time) value = std::stod(f[3]);
    }
    return value;
  }
};

}  // namespace

TEST_F(Cli, FitWhileUntreatedWritesBothCauseModels) {
  ASSERT_EQ(run("fit --strategy while-untreated --data " + data_path("d4.csv") + " --out " + out("m")), 0);
  for (const char* f : {"model.json", "cause_event.json", "cause_treatment.json", "config.json"})
    EXPECT_TRUE(fs::exists(dir / "m" / f)) << f;
}

TEST_F(Cli, FitMissingStrategyIsUsageError) {
  EXPECT_EQ(run("fit --data " + data_path("d1.csv")), 2);
  EXPECT_NE(stderr_text().find("--strategy"), std::string::npos);
  EXPECT_NE(stderr_text().find("Usage"), std::string::npos);
}

TEST_F(Cli, UnknownStrategyAndScenarioAreUsageErrors) {
  EXPECT_EQ(run("fit --strategy policy --data " + data_path("d1.csv") + " --out " + out("m")), 2);
  EXPECT_EQ(run("simulate --scenario s9 --out " + out("s")), 2);
}

TEST_F(Cli, FitIpcwWritesWeightDiagnostics) {
  ASSERT_EQ(run("simulate --scenario s2 --n 300 --seed 2 --out " + out("sim")), 0);
  ASSERT_EQ(run("fit --strategy hypothetical --method censor-ipcw --weight-covariates z --tv-columns z --data " +
                out("sim/data.csv") + " --out " + out("m")),
            0)
      << stderr_text();
  EXPECT_TRUE(fs::exists(dir / "m" / "weight_diagnostics.json"));
  const auto d = nlohmann::json::parse(slurp(out("m/weight_diagnostics.json")));
  EXPECT_GT(d.at("ess").get<double>(), 0.0);
}

TEST_F(Cli, PredictD1ExponentialForm) {
  ASSERT_EQ(run("fit --strategy ignore --form exponential --data " + data_path("d1.csv") + " --out " + out("m")), 0);
  ASSERT_EQ(run("predict --model " + out("m/model.json") + " --profile x=1 --horizon 2 --out " + out("p")), 0)
      << stderr_text();
  // S(1) = exp(-H0(1) * sqrt 2) with H0(1) = (sqrt 2 - 1) / 2.
  const double expected = -std::expm1(-(std::sqrt(2.0) - 1.0) / 2.0 * std::sqrt(2.0));
  const double r1 = curve_value(out("p/curves.csv"), "ignore", 1.0);
  EXPECT_NEAR(r1, expected, 1e-9);
  EXPECT_NEAR(r1, 0.254, 1e-3);
  EXPECT_TRUE(fs::exists(dir / "p" / "report.json"));
}

TEST_F(Cli, PredictNullModelIsKaplanMeier) {
  ASSERT_EQ(run("fit --strategy ignore --data " + data_path("d3.csv") + " --out " + out("m")), 0)
      << stderr_text();
  ASSERT_EQ(run("predict --model " + out("m/model.json") + " --horizon 3 --out " + out("p")), 0) << stderr_text();
  EXPECT_NEAR(curve_value(out("p/curves.csv"), "ignore", 1.0), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(curve_value(out("p/curves.csv"), "ignore", 3.0), 1.0, 1e-12);
}

TEST_F(Cli, PredictIncompleteProfileIsDataError) {
  ASSERT_EQ(run("fit --strategy ignore --data " + data_path("d1.csv") + " --out " + out("m")), 0);
  EXPECT_EQ(run("predict --model " + out("m/model.json") + " --profile y=1 --horizon 2 --out " + out("p")), 3);
  const auto err = nlohmann::json::parse(slurp(out("p/error.json")));
  EXPECT_EQ(err.at("error"), "ProfileIncomplete");
  EXPECT_EQ(err.at("exit_code"), 3);
}

TEST_F(Cli, PredictWarnsBeyondLastEvent) {
  ASSERT_EQ(run("fit --strategy ignore --data " + data_path("d1.csv") + " --out " + out("m")), 0);
  ASSERT_EQ(run("predict --model " + out("m/model.json") + " --profile x=0 --horizon 9 --out " + out("p")), 0);
  EXPECT_NE(stderr_text().find("horizon beyond last event"), std::string::npos);
}

TEST_F(Cli, PredictAllStrategiesOverlay) {
  ASSERT_EQ(run("simulate --scenario s1 --n 300 --seed 4 --out " + out("sim")), 0);
  ASSERT_EQ(run("predict --all-strategies --data " + out("sim/data.csv") + " --horizon 5 --out " + out("p")), 0)
      << stderr_text();
  const auto csv = slurp(out("p/curves.csv"));
  for (const char* s : {"ignore,", "composite,", "while-untreated,", "hypothetical:censor,", "hypothetical:model,",
                        "hypothetical:censor-ipcw,", "hypothetical:model-iptw,"})
    EXPECT_NE(csv.find(std::string("\n") + s), std::string::npos) << s;
}

TEST_F(Cli, SimulateIsReproducible) {
  ASSERT_EQ(run("simulate --scenario s2 --n 400 --seed 7 --out " + out("a")), 0);
  ASSERT_EQ(run("simulate --scenario s2 --n 400 --seed 7 --out " + out("b")), 0);
  ASSERT_EQ(run("simulate --scenario s2 --n 400 --seed 7 --threads 3 --out " + out("c")), 0);
  const auto a = slurp(out("a/data.csv"));
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(out("b/data.csv")));
  EXPECT_EQ(a, slurp(out("c/data.csv")));
  EXPECT_EQ(slurp(out("a/scenario.json")), slurp(out("b/scenario.json")));
}

TEST_F(Cli, SimulateFromScenarioFile) {
  ASSERT_EQ(run("simulate --scenario " + data_path("s3.json") + " --n 100 --seed 1 --out " + out("a")), 0);
  ASSERT_EQ(run("simulate --scenario s3 --n 100 --seed 1 --out " + out("b")), 0);
  EXPECT_EQ(slurp(out("a/data.csv")), slurp(out("b/data.csv")));
}

TEST_F(Cli, MalformedScenarioReportsLine) {
  std::ofstream(out("bad.json")) << "{\n  \"name\": \"x\",\n  oops\n}\n";
  EXPECT_EQ(run("simulate --scenario " + out("bad.json") + " --out " + out("s")), 2);
  EXPECT_NE(stderr_text().find("line 3"), std::string::npos) << stderr_text();
  std::ofstream(out("unknown.json")) << "{\"name\": \"x\", \"admin\": 3}";
  EXPECT_EQ(run("simulate --scenario " + out("unknown.json") + " --out " + out("s")), 2);
  EXPECT_NE(stderr_text().find("/admin"), std::string::npos) << stderr_text();
}

TEST_F(Cli, ValidateExitCodeFollowsResult) {
  // Too small to meet the tight tolerances.
  EXPECT_EQ(run("validate --scenario s1 --n 100 --seeds 2 --out " + out("fail")), 1);
  EXPECT_NE(slurp(out("stdout.txt")).find("FAIL"), std::string::npos);
  // Loose tolerance passes.
  auto j = nlohmann::ordered_json::parse(slurp(data_path("s1.json")));
  for (auto& t : j["validation"]["targets"]) t["tolerance"] = 1.0;
  j["validation"]["truth_replications"] = 1000;
  std::ofstream(out("loose.json")) << j.dump(2);
  EXPECT_EQ(run("validate --scenario " + out("loose.json") + " --n 100 --seeds 2 --out " + out("pass")), 0)
      << stderr_text();
  const auto report = nlohmann::json::parse(slurp(out("pass/report.json")));
  EXPECT_TRUE(report.at("pass").get<bool>());
  EXPECT_TRUE(fs::exists(dir / "pass" / "truth.csv"));
}

TEST_F(Cli, ValidateIsReproducibleAcrossThreads) {
  ASSERT_EQ(run("validate --scenario s1 --n 200 --seeds 3 --threads 1 --out " + out("a")), 1);
  ASSERT_EQ(run("validate --scenario s1 --n 200 --seeds 3 --threads 3 --out " + out("b")), 1);
  EXPECT_EQ(slurp(out("a/report.json")), slurp(out("b/report.json")));
  EXPECT_EQ(slurp(out("a/truth.csv")), slurp(out("b/truth.csv")));
}

TEST_F(Cli, ConfigEchoReplays) {
  ASSERT_EQ(run("fit --strategy composite --tie breslow --data " + data_path("d1.csv") + " --out " + out("a")), 0);
  const auto echo = nlohmann::json::parse(slurp(out("a/config.json")));
  EXPECT_EQ(echo.at("subcommand"), "fit");
  ASSERT_EQ(run("--config " + out("a/config.json") + " --out " + out("b")), 0) << stderr_text();
  EXPECT_EQ(slurp(out("a/model.json")), slurp(out("b/model.json")));
}

TEST_F(Cli, WeightsSubcommandOutputs) {
  ASSERT_EQ(run("simulate --scenario s2 --n 300 --seed 5 --out " + out("sim")), 0);
  for (const char* mode : {"ipcw", "iptw"}) {
    const auto o = out(std::string("w_") + mode);
    ASSERT_EQ(run("weights --mode " + std::string(mode) + " --tv-columns z --weight-covariates z --data " +
                  out("sim/data.csv") + " --out " + o),
              0)
        << stderr_text();
    for (const char* f : {"weights.csv", "weight_diagnostics.json", "numerator_model.json", "denominator_model.json"})
      EXPECT_TRUE(fs::exists(fs::path(o) / f)) << mode << " " << f;
    EXPECT_EQ(slurp(o + "/weights.csv").rfind("id,tstart,tstop,weight\n", 0), 0u);
  }
}

TEST_F(Cli, MissingDataFileIsReported) {
  const int rc = run("fit --strategy ignore --data " + out("nope.csv") + " --out " + out("m"));
  EXPECT_NE(rc, 0);
  EXPECT_TRUE(fs::exists(dir / "m" / "error.json"));
}
