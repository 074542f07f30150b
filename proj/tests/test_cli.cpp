#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "commands.hpp"
#include "config.hpp"

namespace {

namespace fs = std::filesystem;
using ld::cli::ConfigError;
using ld::cli::parse_config;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path work_dir(const std::string& name) {
  const fs::path dir = fs::path(LD_TEST_WORK_DIR) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_tool(const std::string& args) {
  const std::string cmd = std::string("\"") + LDTOOL_PATH + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Small enough to train in well under a second.
const char* kSmallConfig = R"({
  "experiment": {"replicates": [0, 1], "schemes": ["baseline", "tbr", "ld_main", "feature_imitation"]},
  "data": {"train_size": 80, "test_size": 40},
  "student": {"feature_dim": 24, "hidden_dim": 12},
  "teacher": {"feature_dim": 32, "hidden_dim": 12},
  "train": {"epochs": 10},
  "teacher_train": {"epochs": 20},
  "verify": {"trials": 60, "mc_trials": 3000},
  "sweep": {"parameter": "gamma", "values": [0.0, 1.0]}
})";

const char* kScene = R"({
  "anchors": [[[0, 0, 4, 4], [0, 0, 8, 8]], [[2, 2, 6, 6], [1, 1, 7, 7]], [[20, 20, 24, 24], [18, 18, 26, 26]]],
  "levels": [3, 3, 4],
  "gts": [[1, 1, 5, 5]]
})";

TEST(Config, DefaultsParse) {
  const auto cfg = parse_config("", {}, ".");
  EXPECT_EQ(cfg.seed, 0u);
  EXPECT_EQ(cfg.experiment.train.distill.tau, 10.0);
  const auto again = parse_config(ld::cli::default_config_text(), {}, ".");
  EXPECT_EQ(again.experiment.data.train_size, cfg.experiment.data.train_size);
  EXPECT_EQ(again.experiment.train.learning_rate, cfg.experiment.train.learning_rate);
  EXPECT_EQ(again.verify.sizes, cfg.verify.sizes);
}

TEST(Config, OverridesApply) {
  const auto cfg = parse_config(kSmallConfig,
                                {"data.ambiguity=1.0", "seed=7", "distill.gamma_vlr=0.5",
                                 "experiment.schemes=[\"ld_main\"]", "output_dir=elsewhere"},
                                ".");
  EXPECT_EQ(cfg.experiment.data.ambiguity, 1.0);
  EXPECT_EQ(cfg.seed, 7u);
  EXPECT_EQ(cfg.verify.seed, 7u);
  EXPECT_EQ(cfg.experiment.seed, 7u);
  EXPECT_EQ(cfg.experiment.train.distill.gamma_vlr, 0.5);
  EXPECT_EQ(cfg.experiment.teacher_train.distill.gamma_vlr, 0.5);
  ASSERT_EQ(cfg.experiment.schemes.size(), 1u);
  EXPECT_EQ(cfg.output_dir, "elsewhere");
  EXPECT_EQ(cfg.experiment.data.train_size, 80u);
}

TEST(Config, ErrorsNameTheField) {
  auto message = [](const std::string& text, std::vector<std::string> overrides = {}) {
    try {
      parse_config(text, overrides, ".");
    } catch (const ConfigError& e) {
      return std::string(e.what());
    } catch (const std::invalid_argument& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message(R"({"data": {"ambiguty": 1}})").find("data.ambiguty"), std::string::npos);
  EXPECT_NE(message(R"({"train": {"epochs": "ten"}})").find("train.epochs"), std::string::npos);
  EXPECT_NE(message(R"({"seed": -1})").find("seed"), std::string::npos);
  EXPECT_NE(message("", {"data.ambiguity=2"}).find("ambiguity"), std::string::npos);
  EXPECT_NE(message(R"({"experiment": {"schemes": ["magic"]}})").find("magic"), std::string::npos);
  EXPECT_FALSE(message("{").empty());
  EXPECT_FALSE(message("", {"novalue"}).empty());
}

TEST(Config, ScenePathResolvesAgainstConfigDir) {
  const auto cfg = parse_config(R"({"scene": "scenes/a.json"})", {}, "/tmp/cfgdir");
  EXPECT_EQ(cfg.scene_path, fs::path("/tmp/cfgdir/scenes/a.json"));
}

class ToolRun : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = work_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::ofstream(dir_ / "config.json") << kSmallConfig;
    std::ofstream(dir_ / "scene.json") << kScene;
  }

  // Runs the command into two output directories and compares every file.
  void expect_reproducible(const std::string& command, const std::vector<std::string>& files) {
    for (const char* out : {"a", "b"}) {
      ASSERT_EQ(run_tool(command + " -c \"" + (dir_ / "config.json").string() + "\" -o \"" +
                         (dir_ / out).string() + "\" --set scene=scene.json"),
                0)
          << command;
    }
    for (const auto& f : files) {
      const auto a = read_file(dir_ / "a" / f);
      EXPECT_FALSE(a.empty()) << f;
      EXPECT_EQ(a, read_file(dir_ / "b" / f)) << f;
    }
  }

  fs::path dir_;
};

TEST_F(ToolRun, VerifyIsReproducible) { expect_reproducible("verify", {"certificate.json"}); }

TEST_F(ToolRun, ExperimentIsReproducible) {
  expect_reproducible("experiment --set experiment.write_dataset=true",
                      {"metrics.csv", "summary.json", "trace.csv", "dataset_0_train.jsonl",
                       "dataset_1_test.jsonl"});
  const auto metrics = read_file(dir_ / "a" / "metrics.csv");
  EXPECT_EQ(metrics.rfind("scheme,seed,metric,value\n", 0), 0u);
  EXPECT_NE(metrics.find("feature_imitation,1,feature_pearson,"), std::string::npos);
}

TEST_F(ToolRun, SweepIsReproducible) {
  expect_reproducible("sweep", {"sweep.csv"});
  EXPECT_NE(read_file(dir_ / "a" / "sweep.csv").find("gamma,1,ld_main,"), std::string::npos);
}

TEST_F(ToolRun, DumpAssignmentIsReproducible) {
  expect_reproducible("dump-assignment", {"assignment.csv", "scene_masks.jsonl"});
  std::ifstream in(dir_ / "a" / "assignment.csv");
  std::string line;
  int rows = -1;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 6);
}

TEST_F(ToolRun, GammaOneLeavesNoVlrRows) {
  ASSERT_EQ(run_tool("dump-assignment -c \"" + (dir_ / "config.json").string() + "\" -o \"" +
                     (dir_ / "g1").string() + "\" --set scene=scene.json --set distill.gamma_vlr=1"),
            0);
  std::ifstream in(dir_ / "g1" / "assignment.csv");
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) EXPECT_EQ(line.back(), '0') << line;
}

TEST_F(ToolRun, PerturbedVerifyFails) {
  const std::string base = "verify -c \"" + (dir_ / "config.json").string() + "\" -o \"" +
                           (dir_ / "p").string() + "\"";
  EXPECT_EQ(run_tool(base + " --set verify.perturbation=1e-6"), 1);
  EXPECT_NE(read_file(dir_ / "p" / "certificate.json").find("\"passed\": false"), std::string::npos);
}

TEST_F(ToolRun, UsageErrors) {
  EXPECT_EQ(run_tool("experiment -c \"" + (dir_ / "config.json").string() +
                     "\" --set data.unknown=1 -o \"" + (dir_ / "u").string() + "\""),
            2);
  EXPECT_EQ(run_tool("dump-assignment -o \"" + (dir_ / "u").string() + "\""), 2);
  EXPECT_NE(run_tool("no-such-command"), 0);
  EXPECT_EQ(run_tool("print-config"), 0);
}

TEST(Commands, VerifyWritesCertificate) {
  auto cfg = parse_config(kSmallConfig, {}, ".");
  cfg.output_dir = work_dir("in_process_verify");
  std::stringstream log;
  EXPECT_EQ(ld::cli::cmd_verify(cfg, log), ld::cli::kOk);
  EXPECT_NE(log.str().find("all checks passed"), std::string::npos);
  EXPECT_TRUE(fs::exists(cfg.output_dir / "certificate.json"));
}

}  // namespace
