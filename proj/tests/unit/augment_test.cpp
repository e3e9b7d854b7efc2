#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <numbers>

#include "bifc/augment/adversarial.hpp"
#include "bifc/augment/augmentor.hpp"
#include "support/probe.hpp"

using namespace bifc;

namespace {

// Random 4x4 blocks of classes with a smooth RGB ramp and flat depth.
Scene block_scene(std::uint64_t seed, std::size_t n = 16) {
  Rng rng(seed);
  Scene s;
  s.rgb = Tensor({3, n, n});
  s.depth = Tensor({1, n, n});
  s.label = SegMask(n, n);
  std::vector<std::uint8_t> blocks((n / 4) * (n / 4));
  for (auto& b : blocks) b = static_cast<std::uint8_t>(uniform_int(rng, 0, 3));
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      s.label.at(y, x) = blocks[(y / 4) * (n / 4) + x / 4];
      for (std::size_t c = 0; c < 3; ++c) s.rgb.at(c, y, x) = uniform(rng, 0.1, 0.9);
      s.depth.at(0, y, x) = 900.0 + static_cast<double>(uniform_int(rng, 0, 50));
    }
  return s;
}

AffineParams random_params(Rng& rng) {
  AffineParams p;
  p.rotation = uniform(rng, -kMaxRotation, kMaxRotation);
  p.scale_x = std::pow(kMaxScale, uniform(rng, -1.0, 1.0));
  p.scale_y = std::pow(kMaxScale, uniform(rng, -1.0, 1.0));
  p.translate_x = uniform(rng, -kMaxTranslation, kMaxTranslation);
  p.translate_y = uniform(rng, -kMaxTranslation, kMaxTranslation);
  p.flip_horizontal = uniform(rng, 0.0, 1.0) < 0.5;
  return p;
}

// Source pixel of a destination pixel, by undoing u' = R S F u + t step by
// step in centered coordinates.
std::array<double, 2> oracle_source(const AffineParams& p, double x, double y, std::size_t h,
                                    std::size_t w) {
  const double cx = (static_cast<double>(w) - 1.0) / 2.0, cy = (static_cast<double>(h) - 1.0) / 2.0;
  double ux = x - cx - p.translate_x * static_cast<double>(w);
  double uy = y - cy - p.translate_y * static_cast<double>(h);
  const double c = std::cos(-p.rotation), s = std::sin(-p.rotation);
  const double rx = c * ux - s * uy, ry = s * ux + c * uy;
  ux = rx / p.scale_x;
  uy = ry / p.scale_y;
  if (p.flip_horizontal) ux = -ux;
  return {ux + cx, uy + cy};
}

bool uniform_neighborhood(const SegMask& m, long y, long x) {
  for (long dy = -1; dy <= 1; ++dy)
    for (long dx = -1; dx <= 1; ++dx) {
      if (!m.inside(y + dy, x + dx) || m.at(y + dy, x + dx) != m.at(y, x)) return false;
    }
  return true;
}

}  // namespace

TEST(Affine, InteriorLabelsFollowTheTransform) {
  Rng rng(12);
  std::size_t checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Scene s = block_scene(100 + trial);
    const AffineParams p = random_params(rng);
    ASSERT_TRUE(p.within_bounds());
    const Scene out = geo_apply(p, s);
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 16; ++x) {
        const auto [sx, sy] = oracle_source(p, static_cast<double>(x), static_cast<double>(y), 16, 16);
        const long ix = std::lround(sx), iy = std::lround(sy);
        if (!uniform_neighborhood(s.label, iy, ix)) continue;
        ++checked;
        ASSERT_EQ(out.label.at(y, x), s.label.at(iy, ix)) << "trial " << trial << " at " << x << "," << y;
      }
  }
  EXPECT_GT(checked, 3000u);
}

TEST(Affine, SamplingMatrixUndoesForwardTransform) {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const AffineParams p = random_params(rng);
    const SamplingMatrix m = sampling_matrix(p, 20, 30);
    const double x = uniform(rng, 0, 29), y = uniform(rng, 0, 19);
    const auto [ox, oy] = oracle_source(p, x, y, 20, 30);
    const double cx = 14.5, cy = 9.5;
    EXPECT_NEAR(m[0] * (x - cx) + m[1] * (y - cy) + m[2] + cx, ox, 1e-9);
    EXPECT_NEAR(m[3] * (x - cx) + m[4] * (y - cy) + m[5] + cy, oy, 1e-9);
    const SamplingMatrix inv = invert(m);
    const SamplingMatrix back = invert(inv);
    for (std::size_t k = 0; k < 6; ++k) EXPECT_NEAR(back[k], m[k], 1e-9);
  }
  EXPECT_THROW(invert({1, 2, 0, 2, 4, 0}), Error);
}

TEST(Affine, TwoPixelTranslationShiftsCheckerboard) {
  SegMask m(8, 8);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) m.at(y, x) = static_cast<std::uint8_t>((x + y) % 2 ? 3 : 1);
  AffineParams p;
  p.translate_x = 2.0 / 8.0;
  const SegMask out = warp_labels(m, sampling_matrix(p, 8, 8));
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) EXPECT_EQ(out.at(y, x), x < 2 ? 0 : m.at(y, x - 2));
}

TEST(Affine, QuarterTurnPreservesClassCounts) {
  const Scene s = block_scene(5);
  AffineParams p;
  p.rotation = std::numbers::pi / 2.0;
  const SegMask out = warp_labels(s.label, sampling_matrix(p, 16, 16));
  std::array<int, 4> a{}, b{};
  for (auto v : s.label.values()) ++a[v];
  for (auto v : out.values()) ++b[v];
  EXPECT_EQ(a, b);
}

TEST(Affine, BoundedParamsStayInRange) {
  for (double v : {-100.0, -1.0, 0.0, 0.3, 100.0}) {
    Tensor z({5}, v);
    EXPECT_TRUE(bound_params(z, false).within_bounds()) << v;
  }
  EXPECT_THROW(bound_params(Tensor({4}), false), Error);
}

TEST(Augmentor, GeoNetOutputsStayInBoundsForLargeWeights) {
  Augmentor aug(3);
  for (Parameter* p : aug.geo().parameters()) p->value *= 50.0;
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const AugmentPlan plan = draw_plan(aug.policy(), rng);
    EXPECT_TRUE(aug.geo().params(plan.latent, plan.flip).within_bounds());
  }
}

TEST(Augmentor, ColorPathLeavesDepthAndLabelBitwise) {
  Augmentor aug(4);
  Rng init(2);
  fill_uniform(aug.color().output().kernel.value, init, -1.0, 1.0);
  const Scene s = block_scene(9);
  AugmentPlan plan;
  plan.path = AugPath::color_only;
  plan.latent = Tensor({GeoNet::kLatent});
  const Scene out = aug.apply(s, plan);
  EXPECT_EQ(out.depth, s.depth);
  EXPECT_EQ(out.label, s.label);
  EXPECT_NE(out.rgb, s.rgb);
  for (double v : out.rgb.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  Tape tape;
  const AugmentedSample t = aug.apply(tape, s, plan);
  EXPECT_EQ(t.label, s.label);
  EXPECT_EQ(t.depth.value(), depth_to_input(s.depth));
  EXPECT_FALSE(t.matrix.has_value());
}

TEST(Augmentor, FreshColorNetIsIdentity) {
  Augmentor aug(4);
  const Scene s = block_scene(2);
  EXPECT_EQ(aug.color().apply(s.rgb), s.rgb);
}

TEST(Augmentor, TapeAndConcretePathsAgree) {
  Augmentor aug(6);
  Rng rng(8);
  const Scene s = block_scene(3);
  for (int i = 0; i < 10; ++i) {
    AugmentPlan plan = draw_plan(aug.policy(), rng);
    plan.path = AugPath::color_then_geometric;
    Tape tape;
    const AugmentedSample t = aug.apply(tape, s, plan);
    const Scene c = aug.apply(s, plan);
    EXPECT_EQ(t.label, c.label);
    for (std::size_t k = 0; k < c.rgb.size(); ++k) EXPECT_NEAR(t.rgb.value()[k], c.rgb[k], 1e-12);
  }
}

TEST(Augmentor, PathFrequenciesMatchPolicy) {
  PathPolicy policy;
  Rng rng(21);
  std::array<int, 3> n{};
  for (int i = 0; i < 10000; ++i) ++n[static_cast<int>(sample_path(policy, rng))];
  EXPECT_NEAR(n[0] / 10000.0, 0.25, 0.02);
  EXPECT_NEAR(n[1] / 10000.0, 0.50, 0.02);
  EXPECT_NEAR(n[2] / 10000.0, 0.25, 0.02);
}

TEST(Augmentor, DegeneratePolicies) {
  Rng rng(1);
  PathPolicy only_geo{{0.0, 1.0, 0.0}};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_path(only_geo, rng), AugPath::geometric_only);
  EXPECT_THROW(Augmentor(1, PathPolicy{{0.5, 0.5, 0.5}}), Error);
  EXPECT_THROW(Augmentor(1, PathPolicy{{-0.5, 1.0, 0.5}}), Error);
}

TEST(Adversarial, ProbeDescentAndAscentMoveTheRightWay) {
  std::vector<Scene> batch{block_scene(1), block_scene(2)};
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    bifc::testing::LinearProbe probe(trial);
    Augmentor aug(trial + 50);
    SgdOptimizer theta(probe.parameters(), 1e-3, 0.0);
    SgdOptimizer phi(aug.parameters(), 1e-3, 0.0);
    Rng rng = derive_rng(trial, 4);
    const RoundResult r = adversarial_round(probe, aug, batch, theta, phi, rng);
    ASSERT_TRUE(r.descent.after && r.ascent.after);
    EXPECT_LE(*r.descent.after, r.descent.before) << trial;
    EXPECT_GE(*r.ascent.after, r.ascent.before) << trial;
  }
}

TEST(Adversarial, FrozenSideIsUntouched) {
  std::vector<Scene> batch{block_scene(1)};
  bifc::testing::LinearProbe probe(1);
  Augmentor aug(2);
  const auto probe_before = probe.parameters().snapshot();
  const auto aug_before = aug.parameters().snapshot();
  Rng rng(1);
  std::vector<AugmentPlan> plans{draw_plan(aug.policy(), rng)};
  const LossEval a = augmented_loss(probe, aug, batch, plans, FrozenSide::augmentor, true);
  for (const Parameter* p : aug.parameters()) EXPECT_EQ(a.grads.find(*p), nullptr);
  for (const Parameter* p : probe.parameters()) EXPECT_NE(a.grads.find(*p), nullptr);
  EXPECT_EQ(probe.parameters().snapshot(), probe_before);
  EXPECT_EQ(aug.parameters().snapshot(), aug_before);
  EXPECT_THROW(augmented_loss(probe, aug, batch, {}, FrozenSide::augmentor, true), Error);
}
