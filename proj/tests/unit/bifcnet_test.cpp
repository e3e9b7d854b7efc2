#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "bifc/data/generator.hpp"
#include "bifc/fusion/bifcnet.hpp"
#include "bifc/fusion/checkpoint.hpp"
#include "bifc/fusion/train.hpp"

using namespace bifc;

namespace {

Scene small_scene(std::uint64_t seed, std::size_t size = 32) {
  SceneGenConfig g;
  g.height = g.width = size;
  Rng rng(seed);
  return gen_scene(g, rng).scene;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("bifcnet_test_" + name)).string();
}

std::vector<Tensor> values_of(const ParameterSet& p) {
  std::vector<Tensor> v;
  for (const Parameter* q : p) v.push_back(q->value);
  return v;
}

}  // namespace

TEST(BiFCNet, LogitsMatchInputExtent) {
  BiFCNetMini net;
  Tape tape;
  Var y = net.forward(tape, tape.constant(Tensor({3, 32, 48})), tape.constant(Tensor({1, 32, 48})));
  EXPECT_EQ(y.shape(), (Shape{4, 32, 48}));
  EXPECT_TRUE(y.value().all_finite());
}

TEST(BiFCNet, RejectsBadInputs) {
  BiFCNetMini net;
  Tape tape;
  EXPECT_THROW(net.forward(tape, tape.constant(Tensor({3, 24, 32})), tape.constant(Tensor({1, 24, 32}))),
               Error);
  EXPECT_THROW(net.forward(tape, tape.constant(Tensor({3, 32, 32})), tape.constant(Tensor({1, 16, 32}))),
               Error);
  EXPECT_THROW(net.forward(tape, tape.constant(Tensor({4, 32, 32})), tape.constant(Tensor({1, 32, 32}))),
               Error);
}

TEST(BiFCNet, SameSeedSameWeights) {
  BiFCNetConfig c;
  c.seed = 5;
  BiFCNetMini a(c), b(c);
  EXPECT_EQ(checkpoint_bytes(a.parameters()), checkpoint_bytes(b.parameters()));
  c.seed = 6;
  BiFCNetMini d(c);
  EXPECT_NE(checkpoint_bytes(a.parameters()), checkpoint_bytes(d.parameters()));
}

TEST(BiFCNet, ParameterNamesAreUnique) {
  BiFCNetMini net;
  std::set<std::string> names;
  for (const Parameter* p : net.parameters()) EXPECT_TRUE(names.insert(p->name).second) << p->name;
}

TEST(BiFCNet, FitsOneSceneBelowUniformLoss) {
  BiFCNetMini net;
  const std::vector<Scene> scenes{small_scene(3)};
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.batch_size = 1;
  cfg.eval_every = 0;
  const auto log = train_segmentation(net, scenes, cfg);
  ASSERT_EQ(log.size(), 200u);
  EXPECT_LT(log.back().loss, std::log(4.0));
  EXPECT_LT(log.back().loss, log.front().loss);
  ASSERT_TRUE(log.back().metrics.has_value());
}

TEST(Train, ZeroLearningRateLeavesWeightsUntouched) {
  BiFCNetMini net;
  const auto before = checkpoint_bytes(net.parameters());
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.lr_theta = 0.0;
  cfg.eval_every = 0;
  train_segmentation(net, {small_scene(1), small_scene(3)}, cfg);
  EXPECT_EQ(checkpoint_bytes(net.parameters()), before);
}

TEST(Train, DeterministicForFixedSeed) {
  const std::vector<Scene> scenes{small_scene(1), small_scene(3), small_scene(4)};
  TrainConfig cfg;
  cfg.epochs = 2;
  auto run = [&] {
    BiFCNetMini net;
    const auto log = train_segmentation(net, scenes, cfg);
    return std::make_pair(checkpoint_bytes(net.parameters()), train_log_csv(log));
  };
  EXPECT_EQ(run(), run());
}

TEST(Train, TargetStopsEarly) {
  BiFCNetMini net;
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.target_miou = 0.0;
  EXPECT_EQ(train_segmentation(net, {small_scene(1)}, cfg).size(), 1u);
}

TEST(Train, RejectsBadConfig) {
  BiFCNetMini net;
  TrainConfig cfg;
  cfg.momentum = 1.0;
  EXPECT_THROW(train_segmentation(net, {small_scene(1)}, cfg), Error);
  cfg = TrainConfig{};
  EXPECT_THROW(train_segmentation(net, {}, cfg), Error);
  cfg.augment = true;
  EXPECT_THROW(train_segmentation(net, {small_scene(1)}, cfg), Error);
}

TEST(Train, LogCsvHasHeaderAndRows) {
  std::vector<EpochLog> log{{1, 0.5, std::nullopt}, {2, 0.25, SegMetrics{}}};
  const std::string csv = train_log_csv(log);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,loss,miou,pa");
  EXPECT_NE(csv.find("1,0.5,nan,nan"), std::string::npos);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  BiFCNetConfig c;
  c.seed = 9;
  BiFCNetMini a(c), b;
  const std::string path = temp_path("roundtrip.bin");
  save_checkpoint(path, a.parameters());
  load_checkpoint(path, b.parameters());
  EXPECT_EQ(values_of(a.parameters()), values_of(b.parameters()));
  std::remove(path.c_str());
}

TEST(Checkpoint, MismatchedNetworkIsRejectedWithoutChanges) {
  BiFCNetMini a;
  BiFCNetConfig c;
  c.decoder_width = 8;
  BiFCNetMini b(c);
  const std::string path = temp_path("mismatch.bin");
  save_checkpoint(path, a.parameters());
  const auto before = values_of(b.parameters());
  EXPECT_THROW(load_checkpoint(path, b.parameters()), Error);
  EXPECT_EQ(values_of(b.parameters()), before);
  std::remove(path.c_str());
}

TEST(Checkpoint, TruncatedAndTrailingBytesRejected) {
  BiFCNetMini a;
  const std::string bytes = checkpoint_bytes(a.parameters());
  const std::string path = temp_path("damaged.bin");
  for (const std::string& damaged : {bytes.substr(0, bytes.size() - 3), bytes + "x",
                                     std::string("NOTACKPT") + bytes.substr(8)}) {
    std::ofstream(path, std::ios::binary) << damaged;
    EXPECT_THROW(load_checkpoint(path, a.parameters()), Error);
  }
  EXPECT_THROW(load_checkpoint(temp_path("missing.bin"), a.parameters()), Error);
  std::remove(path.c_str());
}
