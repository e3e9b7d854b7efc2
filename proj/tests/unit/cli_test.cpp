#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "bifc/cli/config.hpp"
#include "bifc/data/dataset.hpp"
#include "bifc/fusion/checkpoint.hpp"
#include "bifc/fusion/train.hpp"

using namespace bifc;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int status = -1;
  std::string output;  // stdout and stderr
};

CliRun run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + (env.empty() ? "" : " ") + BIFC_CLI_PATH + std::string(" ") + args + " 2>&1";
  CliRun r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf;
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) r.output.append(buf.data(), n);
  const int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string hash_line(const std::string& out) {
  const auto at = out.find("manifest hash ");
  return at == std::string::npos ? "" : out.substr(at, out.find('\n', at) - at);
}

class Cli : public ::testing::Test {
 protected:
  static fs::path root;
  static fs::path data;

  static void SetUpTestSuite() {
    root = fs::temp_directory_path() / "bifc_cli_test";
    fs::remove_all(root);
    fs::create_directories(root);
    data = root / "data";
    const CliRun r = run("--seed 5 --scenes 4 --train-scenes 2 --image-size 64 --out " + data.string() + " gen-data");
    ASSERT_EQ(r.status, 0) << r.output;
  }
  static void TearDownTestSuite() { fs::remove_all(root); }

  static std::string common() { return "--dataset " + data.string() + " "; }
};

fs::path Cli::root;
fs::path Cli::data;

}  // namespace

TEST_F(Cli, GenDataIsDeterministic) {
  const std::string args = "--seed 5 --scenes 4 --train-scenes 2 --image-size 64 --out ";
  const CliRun a = run(args + (root / "g1").string() + " gen-data");
  const CliRun b = run(args + (root / "g2").string() + " gen-data");
  const CliRun c = run("--seed 6 --scenes 4 --train-scenes 2 --image-size 64 --out " + (root / "g3").string() + " gen-data");
  ASSERT_EQ(a.status, 0) << a.output;
  EXPECT_FALSE(hash_line(a.output).empty());
  EXPECT_EQ(hash_line(a.output), hash_line(b.output));
  EXPECT_NE(hash_line(a.output), hash_line(c.output));
  EXPECT_EQ(hex64(dataset_hash(root / "g1")), hash_line(a.output).substr(14));
  EXPECT_TRUE(fs::exists(root / "g1" / "config.txt"));
  EXPECT_TRUE(fs::exists(root / "g1" / "camera.txt"));
}

TEST_F(Cli, GenDataRejectsBandWiderThanCollar) {
  const CliRun r = run("--band-fraction 0.5 --scenes 2 --train-scenes 1 --image-size 64 --out " +
                    (root / "bad").string() + " gen-data");
  EXPECT_NE(r.status, 0);
  EXPECT_NE(r.output.find("bifc: "), std::string::npos);
}

TEST_F(Cli, ZeroLearningRateCheckpointEqualsInit) {
  const fs::path out = root / "lr0";
  const CliRun r = run(common() + "--epochs 1 --lr-theta 0 --out " + out.string() + " train");
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_EQ(read_text(out / "checkpoint.bin"), read_text(out / "init.bin"));
  EXPECT_TRUE(fs::exists(out / "train_log.csv"));
}

TEST_F(Cli, AugmentationChangesTraining) {
  const CliRun a = run(common() + "--epochs 1 --out " + (root / "plain").string() + " train");
  const CliRun b = run(common() + "--epochs 1 --augment on --out " + (root / "aug").string() + " train");
  ASSERT_EQ(a.status, 0) << a.output;
  ASSERT_EQ(b.status, 0) << b.output;
  EXPECT_NE(read_text(root / "plain" / "train_log.csv"), read_text(root / "aug" / "train_log.csv"));
  EXPECT_NE(read_text(root / "plain" / "checkpoint.bin"), read_text(root / "aug" / "checkpoint.bin"));
}

TEST_F(Cli, ConfigFileWithFlagOverride) {
  const fs::path cfg = root / "run.cfg";
  write_text(cfg, "# short run\nepochs = 3\nlr_theta = 0\ndataset = " + data.string() + "\n");
  const fs::path out = root / "cfgrun";
  const CliRun r = run("--config " + cfg.string() + " --epochs 1 --out " + out.string() + " train");
  ASSERT_EQ(r.status, 0) << r.output;
  const RunConfig saved = parse_config(read_text(out / "config.txt"));
  EXPECT_EQ(saved.epochs, 1u);
  EXPECT_EQ(saved.lr_theta, 0.0);
  EXPECT_EQ(saved.command, "train");
}

TEST_F(Cli, UnknownConfigKeyFails) {
  const fs::path cfg = root / "bad.cfg";
  write_text(cfg, "epochs = 1\nwarmup = 3\n");
  const CliRun r = run("--config " + cfg.string() + " " + common() + "train");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("unknown key 'warmup'"), std::string::npos) << r.output;
}

TEST_F(Cli, OutputRootFromEnvironment) {
  const fs::path env_root = root / "envroot";
  const CliRun r = run(common() + "eval --split all --truth-as-prediction", "BIFC_OUTPUT_ROOT=" + env_root.string());
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(fs::exists(env_root / "eval" / "metrics.csv"));
}

TEST_F(Cli, EvalTruthAsPredictionIsPerfect) {
  const CliRun r = run(common() + "--out " + (root / "ev").string() + " eval --truth-as-prediction");
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_NE(r.output.find("class,iou\n"), std::string::npos);
  EXPECT_NE(r.output.find("miou,1\npa,1\n"), std::string::npos) << r.output;
  EXPECT_EQ(read_text(root / "ev" / "metrics.csv"), r.output);
}

TEST_F(Cli, EvalMatchesLibraryMetrics) {
  const fs::path tr = root / "evtrain";
  ASSERT_EQ(run(common() + "--epochs 1 --out " + tr.string() + " train").status, 0);
  const CliRun r = run(common() + "--out " + (root / "ev2").string() + " eval --checkpoint " +
                    (tr / "checkpoint.bin").string());
  ASSERT_EQ(r.status, 0) << r.output;
  BiFCNetMini net;
  load_checkpoint((tr / "checkpoint.bin").string(), net.parameters());
  const Dataset ds = Dataset::open(data);
  EXPECT_EQ(r.output, metrics_csv(evaluate(net, ds.load_split("test"))));
}

TEST_F(Cli, EvalRejectsCheckpointOfAnotherShape) {
  const fs::path tr = root / "rounds1";
  ASSERT_EQ(run(common() + "--epochs 1 --lr-theta 0 --fp-rounds 1 --out " + tr.string() + " train").status, 0);
  const CliRun r = run(common() + "--out " + (root / "ev3").string() + " eval --checkpoint " +
                    (tr / "checkpoint.bin").string());
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("checkpoint has"), std::string::npos) << r.output;
}

TEST_F(Cli, GraspWritesReportWithFortyFiveDegreeDirections) {
  const fs::path out = root / "grasp";
  const CliRun r = run(common() + "--out " + out.string() + " grasp --scene scene_0001");
  ASSERT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(fs::exists(out / "scene_0001_overlay.ppm"));
  std::istringstream csv(read_text(out / "scene_0001_grasp.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "side,u,v,depth_mm,x,y,z,dx,dy,dz,flatness");
  int rows = 0;
  while (std::getline(csv, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    ASSERT_EQ(f.size(), 11u);
    const double dx = std::stod(f[7]), dy = std::stod(f[8]), dz = std::stod(f[9]);
    EXPECT_NEAR(dx, std::sqrt(0.5), 1e-8);
    EXPECT_NEAR(dx * dx + dy * dy + dz * dz, 1.0, 1e-8);
    ++rows;
  }
  EXPECT_EQ(rows, 2);
}

TEST_F(Cli, GraspNeedsCamera) {
  const CliRun r = run(common() + "--camera " + (root / "nope.txt").string() + " --out " +
                    (root / "g").string() + " grasp");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("camera file not found"), std::string::npos);
}

TEST_F(Cli, AugmentPreviewWritesEveryPath) {
  const fs::path out = root / "preview";
  const CliRun r = run(common() + "--out " + out.string() + " augment-preview --scene scene_0000");
  ASSERT_EQ(r.status, 0) << r.output;
  for (const char* tag : {"color", "geometric", "color_geometric"}) {
    EXPECT_TRUE(fs::exists(out / ("scene_0000_" + std::string(tag) + ".ppm"))) << tag;
    EXPECT_TRUE(fs::exists(out / ("scene_0000_" + std::string(tag) + "_label.pgm"))) << tag;
  }
  const std::string params = read_text(out / "scene_0000_params.txt");
  EXPECT_EQ(params, r.output);
  EXPECT_EQ(params.substr(0, 6), "color\n");
  EXPECT_NE(params.find("geometric rotation "), std::string::npos);
}

TEST_F(Cli, GradCheckPassesAndIsDeterministic) {
  const CliRun a = run("--out " + (root / "gc").string() + " grad-check --seeds 1");
  const CliRun b = run("--out " + (root / "gc").string() + " grad-check --seeds 1");
  EXPECT_EQ(a.status, 0) << a.output;
  EXPECT_EQ(a.output, b.output);
  EXPECT_NE(a.output.find("all cases pass"), std::string::npos);
}

TEST_F(Cli, GradCheckCatchesInjectedFault) {
  const CliRun r = run("--out " + (root / "gc").string() + " grad-check --seeds 1 --inject-fault log2shift");
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("gradient check failed"), std::string::npos);
}

TEST_F(Cli, MissingSubcommandOrDatasetFails) {
  EXPECT_NE(run("").status, 0);
  EXPECT_EQ(run("--dataset " + (root / "missing").string() + " eval --truth-as-prediction").status, 1);
}
