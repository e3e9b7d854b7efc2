#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "bifc/data/metrics.hpp"
#include "bifc/data/pnm.hpp"
#include "bifc/diffcore/rng.hpp"

using namespace bifc;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("pnm_test_" + name)).string();
}

void write_raw(const std::string& path, const std::string& bytes) {
  std::ofstream(path, std::ios::binary) << bytes;
}

SegMask mask2(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d) {
  SegMask m(2, 2);
  m.values() = {a, b, c, d};
  return m;
}

}  // namespace

TEST(Metrics, HandFixture) {
  ConfusionMatrix conf(2);
  conf.add(mask2(0, 0, 1, 1), mask2(0, 1, 1, 1));
  // Truth 0: one hit, one predicted as 1. Truth 1: two hits.
  EXPECT_EQ(conf.at(0, 0), 1u);
  EXPECT_EQ(conf.at(0, 1), 1u);
  EXPECT_EQ(conf.at(1, 1), 2u);
  const SegMetrics m = compute_metrics(conf);
  EXPECT_EQ(*m.iou[0], 1.0 / 2.0);
  EXPECT_EQ(*m.iou[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.miou, 7.0 / 12.0);
  EXPECT_EQ(m.pa, 3.0 / 4.0);
}

TEST(Metrics, PerfectPredictionAndAbsentClasses) {
  ConfusionMatrix conf;
  conf.add(mask2(0, 1, 1, 0), mask2(0, 1, 1, 0));
  const SegMetrics m = compute_metrics(conf);
  EXPECT_EQ(m.miou, 1.0);
  EXPECT_EQ(m.pa, 1.0);
  EXPECT_FALSE(m.iou[2].has_value());
  EXPECT_FALSE(m.iou[3].has_value());
  EXPECT_NE(metrics_csv(m).find("inner_edge,nan"), std::string::npos);
}

TEST(Metrics, InvariantsOnRandomMasks) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    SegMask t(6, 7), p(6, 7);
    for (auto& v : t.values()) v = static_cast<std::uint8_t>(uniform_int(rng, 0, 3));
    for (auto& v : p.values()) v = static_cast<std::uint8_t>(uniform_int(rng, 0, 3));
    ConfusionMatrix a, b;
    a.add(t, p);
    b.add(p, t);
    const SegMetrics ma = compute_metrics(a), mb = compute_metrics(b);
    EXPECT_EQ(a.total(), 42u);
    EXPECT_GE(ma.miou, 0.0);
    EXPECT_LE(ma.miou, 1.0);
    // IoU and PA are symmetric in truth and prediction.
    EXPECT_DOUBLE_EQ(ma.miou, mb.miou);
    EXPECT_DOUBLE_EQ(ma.pa, mb.pa);
  }
}

TEST(Metrics, CsvLayout) {
  ConfusionMatrix conf(2);
  conf.add(mask2(0, 0, 1, 1), mask2(0, 1, 1, 1));
  const std::string csv = metrics_csv(compute_metrics(conf));
  EXPECT_EQ(csv, "class,iou\nbackground,0.5\nouter_edge,0.6666666667\nmiou,0.5833333333\npa,0.75\n");
}

TEST(Metrics, Errors) {
  ConfusionMatrix conf;
  EXPECT_THROW(compute_metrics(conf), Error);
  EXPECT_THROW(conf.add(4, 0), Error);
  EXPECT_THROW(conf.add(SegMask(2, 2), SegMask(2, 3)), Error);
}

TEST(Pnm, DecodesHandWrittenImages) {
  const std::string p8 = temp_path("hand8.pgm"), p16 = temp_path("hand16.pgm");
  write_raw(p8, std::string("P5\n# two by two\n2 2\n255\n") + '\x00' + '\x01' + '\x02' + '\xff');
  std::size_t maxval = 0;
  const auto g = pnm::read_pgm(p8, &maxval);
  EXPECT_EQ(maxval, 255u);
  EXPECT_EQ(g.values(), (std::vector<std::uint16_t>{0, 1, 2, 255}));
  write_raw(p16, std::string("P5 2 1 65535\n") + '\x01' + '\x02' + '\xff' + '\xfe');
  EXPECT_EQ(pnm::read_pgm(p16).values(), (std::vector<std::uint16_t>{0x0102, 0xfffe}));
  std::filesystem::remove(p8);
  std::filesystem::remove(p16);
}

TEST(Pnm, DepthAndLabelRoundTripBitExact) {
  Rng rng(2);
  Grid<std::uint16_t> depth(9, 11);
  for (auto& v : depth.values()) v = static_cast<std::uint16_t>(uniform_int(rng, 0, 65535));
  SegMask label(9, 11);
  for (auto& v : label.values()) v = static_cast<std::uint8_t>(uniform_int(rng, 0, 3));
  const std::string dp = temp_path("depth.pgm"), lp = temp_path("label.pgm");
  pnm::write_pgm16(dp, depth);
  pnm::write_pgm8(lp, label);
  EXPECT_EQ(pnm::read_pgm(dp), depth);
  const auto back = pnm::read_pgm(lp);
  ASSERT_EQ(back.size(), label.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back.values()[i], label.values()[i]);
  std::filesystem::remove(dp);
  std::filesystem::remove(lp);
}

TEST(Pnm, RgbRoundTripWithinQuantization) {
  Rng rng(3);
  const Tensor rgb = random_tensor({3, 4, 5}, rng, 0.0, 1.0);
  const std::string p = temp_path("rgb.ppm");
  pnm::write_ppm(p, rgb);
  const Tensor back = pnm::read_ppm(p);
  ASSERT_EQ(back.shape(), rgb.shape());
  for (std::size_t i = 0; i < rgb.size(); ++i) EXPECT_LE(std::abs(back[i] - rgb[i]), 0.5 / 255.0 + 1e-12);
  std::filesystem::remove(p);
}

TEST(Pnm, MalformedFilesAreRejected) {
  const std::string p = temp_path("bad.pgm");
  write_raw(p, std::string("P5\n2 2\n255\n") + "abc");  // one byte short
  EXPECT_THROW(pnm::read_pgm(p), Error);
  write_raw(p, "P2\n2 2\n255\n0 0 0 0\n");
  EXPECT_THROW(pnm::read_pgm(p), Error);
  write_raw(p, "P5\n0 2\n255\n");
  EXPECT_THROW(pnm::read_pgm(p), Error);
  write_raw(p, std::string("P5\n1 1\n255\n") + 'a');
  EXPECT_THROW(pnm::read_ppm(p), Error);
  EXPECT_THROW(pnm::read_pgm(temp_path("does_not_exist.pgm")), Error);
  std::filesystem::remove(p);
}
