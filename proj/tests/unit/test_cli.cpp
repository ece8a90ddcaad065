#include "coactivity/io.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

namespace coact {
namespace {

namespace fs = std::filesystem;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() /
           (std::string("coact_cli_") + info->name() + "_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir_);
    io::write_atomic(dir_ / "config.json", R"({
  "seed": 4,
  "scenario": {"n_actors": 3, "n_turns": 2},
  "sampler": {"n_iters": 600, "burn_in": 100, "sample_thin": 10, "grid_points": 80, "n_draws": 4},
  "localize_thin": 5
})");
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(COACTIVITY_CLI) + " " + args + " > " +
                            (dir_ / "stdout.txt").string() + " 2> " + (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  std::string config() const { return (dir_ / "config.json").string(); }
  std::string out(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
};

TEST_F(Cli, InferWithoutConfigIsAUsageError) {
  EXPECT_EQ(run("infer --out " + out("run")), 1);
}

TEST_F(Cli, UnknownSubcommandIsAUsageError) {
  EXPECT_EQ(run("teleport"), 1);
}

TEST_F(Cli, MissingDataIsADataError) {
  EXPECT_EQ(run("infer --config " + config() + " --data " + out("nowhere") + " --out " + out("run")), 2);
}

TEST_F(Cli, SimulateInferEvalPipeline) {
  const std::string d = out("run");
  ASSERT_EQ(run("simulate --config " + config() + " --out " + d), 0);
  ASSERT_EQ(run("infer --config " + config() + " --out " + d), 0);
  EXPECT_TRUE(fs::exists(dir_ / "run" / "chain_0.jsonl"));
  ASSERT_EQ(run("eval --config " + config() + " --out " + d), 0);
  const auto report = io::read_file(dir_ / "run" / "eval.json");
  EXPECT_NE(report.find("count_error"), std::string::npos);
  EXPECT_EQ(run("localize --config " + config() + " --out " + d + " --actor a0"), 0);
  EXPECT_TRUE(fs::exists(dir_ / "run" / "localization_a0.csv"));
  EXPECT_EQ(run("localize --config " + config() + " --out " + d + " --actor nobody"), 2);
  EXPECT_TRUE(fs::exists(dir_ / "run" / "manifest_infer.json"));
}

TEST_F(Cli, SameSeedSameArtifacts) {
  for (const char* name : {"a", "b"}) {
    const std::string d = out(name);
    ASSERT_EQ(run("simulate --config " + config() + " --out " + d), 0);
    ASSERT_EQ(run("infer --config " + config() + " --out " + d), 0);
  }
  for (const char* file : {"gps.csv", "faces.csv", "truth.csv", "chain_0.jsonl"}) {
    EXPECT_EQ(io::read_file(dir_ / "a" / file), io::read_file(dir_ / "b" / file)) << file;
  }
  ASSERT_EQ(run("simulate --config " + config() + " --seed 5 --out " + out("c")), 0);
  EXPECT_NE(io::read_file(dir_ / "a" / "gps.csv"), io::read_file(dir_ / "c" / "gps.csv"));
}

}  // namespace
}  // namespace coact
