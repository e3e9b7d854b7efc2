#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "bifc/data/dataset.hpp"

using namespace bifc;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("dataset_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

DatasetSpec small_spec(std::uint64_t seed = 3) {
  DatasetSpec spec;
  spec.scene.height = spec.scene.width = 64;
  spec.scene.seed = seed;
  spec.count = 6;
  spec.train = 2;
  return spec;
}

}  // namespace

TEST(Manifest, FormatParseRoundTrip) {
  const std::vector<ManifestEntry> e{{"scene_0000", "a.ppm", "a.pgm", "al.pgm", "train"},
                                     {"scene_0001", "b.ppm", "b.pgm", "bl.pgm", "test"}};
  const std::string text = format_manifest(e);
  EXPECT_EQ(text.substr(0, text.find('\n')), "scene_0000\ta.ppm\ta.pgm\tal.pgm\ttrain");
  EXPECT_EQ(parse_manifest(text), e);
  EXPECT_EQ(parse_manifest(text + "\n"), e);
}

TEST(Manifest, ParseErrorsNameTheLine) {
  try {
    parse_manifest("a\tb\tc\td\ttrain\na\tb\tc\n", "m.tsv");
    FAIL();
  } catch (const Error& err) {
    EXPECT_NE(std::string(err.what()).find("m.tsv:2"), std::string::npos);
  }
  EXPECT_THROW(parse_manifest("a\tb\tc\td\tvalidation\n"), Error);
}

TEST(Split, IsASeededPartition) {
  const auto a = split_mask(350, 150, 7), b = split_mask(350, 150, 7), c = split_mask(350, 150, 8);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(std::count(a.begin(), a.end(), true), 150);
  EXPECT_THROW(split_mask(3, 4, 1), Error);
}

TEST(Generator, DeterministicAndUsesAllClasses) {
  SceneGenConfig cfg;
  Rng r1(11), r2(11);
  const GeneratedScene a = gen_scene(cfg, r1), b = gen_scene(cfg, r2);
  EXPECT_EQ(a.scene, b.scene);
  EXPECT_EQ(a.planted, b.planted);
  std::set<int> classes(a.scene.label.values().begin(), a.scene.label.values().end());
  EXPECT_EQ(classes, (std::set<int>{0, 1, 2, 3}));
  EXPECT_NO_THROW(a.scene.validate());
  for (double v : a.scene.depth.values()) {
    EXPECT_EQ(v, std::floor(v));
    EXPECT_GE(v, 0.0);
  }
}

TEST(Generator, CollarIsRaisedInDepthButNotInColor) {
  SceneGenConfig cfg;
  cfg.depth_noise_mm = 0.0;
  cfg.invalid_fraction = 0.0;
  Rng rng(2);
  const Scene s = gen_scene(cfg, rng).scene;
  double edge = 0, cloth = 0;
  int ne = 0, nc = 0;
  for (std::size_t i = 0; i < s.label.size(); ++i) {
    const auto k = s.label.values()[i];
    if (k == 1 || k == 2) {
      edge += s.depth[i];
      ++ne;
    } else if (k == 3) {
      cloth += s.depth[i];
      ++nc;
    }
  }
  EXPECT_LT(edge / ne, cloth / nc);
}

TEST(Generator, InvalidConfigsAreRejected) {
  SceneGenConfig cfg;
  cfg.band_fraction = 0.5;
  Rng rng(1);
  EXPECT_THROW(gen_scene(cfg, rng), Error);
  cfg = SceneGenConfig{};
  cfg.height = 100;
  EXPECT_THROW(gen_scene(cfg, rng), Error);
}

TEST(Dataset, WriteOpenAndReload) {
  const auto dir = temp_dir("write");
  const DatasetSpec spec = small_spec();
  const auto entries = write_dataset(spec, dir);
  const Dataset ds = Dataset::open(dir);
  EXPECT_EQ(ds.entries, entries);
  EXPECT_EQ(ds.split("train").size(), 2u);
  EXPECT_EQ(ds.split("test").size(), 4u);
  const auto generated = gen_scenes(spec.scene, spec.count);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Scene s = ds.load(entries[i]);
    EXPECT_EQ(s.label, generated[i].scene.label);
    EXPECT_EQ(s.depth, generated[i].scene.depth);
    EXPECT_EQ(ds.planted(entries[i].id), generated[i].planted);
  }
  EXPECT_EQ(parse_camera(read_text(dir / "camera.txt")), default_camera(64, 64));
  EXPECT_THROW(ds.find("scene_9999"), Error);
  std::filesystem::remove_all(dir);
}

TEST(Dataset, HashIsDeterministicAndSeedSensitive) {
  const auto a = temp_dir("hash_a"), b = temp_dir("hash_b"), c = temp_dir("hash_c");
  write_dataset(small_spec(3), a);
  write_dataset(small_spec(3), b);
  write_dataset(small_spec(4), c);
  EXPECT_EQ(dataset_hash(a), dataset_hash(b));
  EXPECT_NE(dataset_hash(a), dataset_hash(c));
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
  for (const auto& d : {a, b, c}) std::filesystem::remove_all(d);
}

TEST(Dataset, MissingManifestIsAnError) {
  const auto dir = temp_dir("empty");
  std::filesystem::create_directories(dir);
  EXPECT_THROW(Dataset::open(dir), Error);
  std::filesystem::remove_all(dir);
}

TEST(Dataset, DepthMustBeIntegerMillimeters) {
  EXPECT_THROW(depth_to_grid(Tensor({1, 1, 1}, 1.5)), Error);
  EXPECT_THROW(depth_to_grid(Tensor({1, 1, 1}, 70000.0)), Error);
  EXPECT_EQ(depth_to_grid(Tensor({1, 1, 2}, 812.0)).values(), (std::vector<std::uint16_t>{812, 812}));
}
