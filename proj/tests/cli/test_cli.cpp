#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "support/builders.hpp"

namespace fs = std::filesystem;
using testing_support::TempDir;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout and stderr combined
};

RunResult run_cli(const std::string& args) {
  const std::string cmd = std::string(CYCLIFE_CLI_PATH) + " " + args + " 2>&1";
  RunResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (pipe == nullptr) return r;
  std::array<char, 4096> buf{};
  while (const std::size_t n = fread(buf.data(), 1, buf.size(), pipe)) r.output.append(buf.data(), n);
  const int status = pclose(pipe);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

std::size_t count_cell_files(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.starts_with("cell-") && !name.ends_with(".curves.csv")) ++n;
  }
  return n;
}

}  // namespace

TEST(Cli, SynthThenPipelineWritesTwoModelRows) {
  TempDir tmp;
  const auto data = tmp.path() / "fleet";
  const auto out = tmp.path() / "run";
  auto r = run_cli("synth --seed 7 --output-dir " + q(data));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(count_cell_files(data), 124u);
  r = run_cli("pipeline --seed 7 --input " + q(data) + " --output-dir " + q(out));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const std::string metrics = slurp(out / "metrics.csv");
  EXPECT_TRUE(metrics.starts_with("model,rmse_cycles,pct_err\n"));
  EXPECT_NE(metrics.find("\ngpr,"), std::string::npos);
  EXPECT_NE(metrics.find("\nenr,"), std::string::npos);
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 3);
  for (const char* f : {"features.csv", "gpr_model.json", "enr_model.json", "weights_gpr.csv", "cv_curve.csv",
                        "report_gpr.csv", "report_enr.csv", "run.json", "config.ini"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
}

TEST(Cli, SynthCellCountAndNestedOutputDirectory) {
  TempDir tmp;
  const auto data = tmp.path() / "not" / "yet" / "there";
  const auto r = run_cli("synth --n-cells 10 --output-dir " + q(data));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(count_cell_files(data), 10u);
  EXPECT_TRUE(fs::exists(data / "manifest.json"));
}

TEST(Cli, SummariesOnlyDataSupportsOnlyFleetScalarMode) {
  TempDir tmp;
  const auto data = tmp.path() / "fleet";
  ASSERT_EQ(run_cli("synth --n-cells 12 --seed 3 --output-dir " + q(data)).exit_code, 0);
  for (const auto& e : fs::directory_iterator(data))
    if (e.path().filename().string().ends_with(".curves.csv")) fs::remove(e.path());

  auto r = run_cli("pipeline --feature-mode paper-faithful --input " + q(data) + " --output-dir " +
                   q(tmp.path() / "pf"));
  EXPECT_EQ(r.exit_code, 0) << r.output;
  EXPECT_TRUE(fs::exists(tmp.path() / "pf" / "metrics.csv"));

  r = run_cli("pipeline --input " + q(data) + " --output-dir " + q(tmp.path() / "vr"));
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("curves required"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(tmp.path() / "vr" / "metrics.csv"));
}

TEST(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(run_cli("").exit_code, 2);
  EXPECT_EQ(run_cli("pipeline --no-such-flag").exit_code, 2);
  const auto r = run_cli("pipeline --feature-mode sideways --input x");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.output.find("error: code=usage"), std::string::npos) << r.output;
}

TEST(Cli, MissingInputIsRuntimeError) {
  TempDir tmp;
  const auto r = run_cli("pipeline --input " + q(tmp.path() / "absent") + " --output-dir " + q(tmp.path() / "o"));
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.output.find("error: code="), std::string::npos);
}

TEST(Cli, VersionFlag) {
  const auto r = run_cli("--version");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.output.find("0.1.0"), std::string::npos);
}

TEST(Cli, MetricsByteIdenticalAcrossRerunsAndThreadCounts) {
  TempDir tmp;
  const auto data = tmp.path() / "fleet";
  ASSERT_EQ(run_cli("synth --seed 7 --threads 8 --output-dir " + q(data)).exit_code, 0);
  std::vector<std::string> outputs;
  for (const char* threads : {"1", "1", "8"}) {
    const auto out = tmp.path() / ("run" + std::to_string(outputs.size()));
    const auto r = run_cli("pipeline --seed 7 --threads " + std::string(threads) + " --input " + q(data) +
                           " --output-dir " + q(out));
    ASSERT_EQ(r.exit_code, 0) << r.output;
    outputs.push_back(slurp(out / "metrics.csv") + slurp(out / "report_gpr.csv") + slurp(out / "gpr_model.json"));
  }
  EXPECT_EQ(outputs[0], outputs[1]);
  EXPECT_EQ(outputs[0], outputs[2]);
}

TEST(Cli, SynthOutputIndependentOfThreads) {
  TempDir tmp;
  ASSERT_EQ(run_cli("synth --n-cells 6 --seed 5 --threads 1 --output-dir " + q(tmp.path() / "a")).exit_code, 0);
  ASSERT_EQ(run_cli("synth --n-cells 6 --seed 5 --threads 6 --output-dir " + q(tmp.path() / "b")).exit_code, 0);
  for (const auto& e : fs::directory_iterator(tmp.path() / "a")) {
    const auto name = e.path().filename();
    if (name == "run.json" || name == "config.ini") continue;
    EXPECT_EQ(slurp(e.path()), slurp(tmp.path() / "b" / name)) << name;
  }
}
