#pragma once

#include <array>
#include <concepts>
#include <cstdint>
#include <string>
#include <vector>

#include "bifc/diffcore/layers.hpp"
#include "bifc/diffcore/ops.hpp"
#include "bifc/diffcore/rng.hpp"
#include "bifc/fusion/fcf.hpp"

namespace bifc {

/// Anything that maps an (RGB, depth) pair to per-pixel class logits.
template <class S>
concept Segmenter = requires(S s, Tape& tape, Var v) {
  { s.forward(tape, v, v) } -> std::same_as<Var>;
  { s.parameters() } -> std::same_as<ParameterSet>;
};

struct BiFCNetConfig {
  std::size_t classes = 4;
  std::size_t fp_rounds = 2;
  std::array<std::size_t, 4> widths{8, 16, 32, 64};
  std::size_t decoder_width = 16;
  std::uint64_t seed = 1;
};

/// Two-branch encoder with one FCF module per stage and a small
/// upsample-and-concatenate decoder.
///
/// Stage s (conv3x3 + relu + 2x average pool) runs on each branch; the
/// stage outputs are fused and the fusion result is added to both branches
/// before the next stage. The decoder reads only the first fusion (H/2,
/// shallow) and the last fusion (H/16, deep).
class BiFCNetMini {
 public:
  static constexpr std::size_t kStages = 4;
  static constexpr std::size_t kDivisor = 16;

  BiFCNetMini() : BiFCNetMini(BiFCNetConfig{}) {}

  explicit BiFCNetMini(const BiFCNetConfig& config) : config_(config) {
    Rng rng(config.seed);
    std::size_t in_rgb = 3, in_depth = 1;
    for (std::size_t s = 0; s < kStages; ++s) {
      const std::size_t w = config.widths[s];
      const std::string tag = std::to_string(s + 1);
      rgb_stages_[s] = ConvLayer("stage" + tag + ".rgb", in_rgb, w, 3, rng);
      depth_stages_[s] = ConvLayer("stage" + tag + ".depth", in_depth, w, 3, rng);
      fusions_[s] = FCFModule("fcf" + tag, w, rng, config.fp_rounds);
      in_rgb = in_depth = w;
    }
    const std::size_t dw = config.decoder_width;
    deep_proj_ = ConvLayer("decoder.deep_proj", config.widths[kStages - 1], dw, 1, rng);
    fuse1_ = ConvLayer("decoder.fuse1", dw + config.widths[0], dw, 3, rng);
    fuse2_ = ConvLayer("decoder.fuse2", dw, dw, 3, rng);
    classifier_ = ConvLayer("decoder.classifier", dw, config.classes, 1, rng);
  }

  /// rgb: 3 x H x W, depth: 1 x H x W, H and W divisible by 16.
  /// Returns classes x H x W logits.
  Var forward(Tape& tape, Var rgb, Var depth) {
    const Tensor& rv = rgb.value();
    require_rank(rv, 3, "bifc_forward");
    require_rank(depth.value(), 3, "bifc_forward");
    if (rv.dim(0) != 3 || depth.value().dim(0) != 1) {
      throw Error("bifc_forward: expected 3-channel RGB and 1-channel depth, got " +
                  shape_str(rv.shape()) + " and " + shape_str(depth.shape()));
    }
    if (rv.dim(1) != depth.value().dim(1) || rv.dim(2) != depth.value().dim(2)) {
      throw Error("bifc_forward: RGB " + shape_str(rv.shape()) + " and depth " +
                  shape_str(depth.shape()) + " extents differ");
    }
    if (rv.dim(1) % kDivisor || rv.dim(2) % kDivisor || rv.dim(1) == 0 ||
        rv.dim(2) == 0) {
      throw Error("bifc_forward: height and width must be positive multiples of 16, got " +
                  std::to_string(rv.dim(1)) + "x" + std::to_string(rv.dim(2)));
    }

    Var r = rgb, d = depth;
    std::array<Var, kStages> fused;
    for (std::size_t s = 0; s < kStages; ++s) {
      r = avg_pool2(relu(rgb_stages_[s](tape, r)));
      d = avg_pool2(relu(depth_stages_[s](tape, d)));
      fused[s] = fusions_[s].forward(tape, r, d);
      if (s + 1 < kStages) {
        r = add(r, fused[s]);
        d = add(d, fused[s]);
      }
    }

    // Deep fusion is at H/16, shallow at H/2.
    Var deep = upsample_bilinear(deep_proj_(tape, fused[kStages - 1]), 8);
    Var x = concat({deep, fused[0]});
    x = relu(fuse1_(tape, x));
    x = relu(fuse2_(tape, x));
    return upsample_bilinear(classifier_(tape, x), 2);
  }

  ParameterSet parameters() {
    ParameterSet params;
    for (std::size_t s = 0; s < kStages; ++s) {
      rgb_stages_[s].collect(params);
      depth_stages_[s].collect(params);
      fusions_[s].collect(params);
    }
    deep_proj_.collect(params);
    fuse1_.collect(params);
    fuse2_.collect(params);
    classifier_.collect(params);
    return params;
  }

  const BiFCNetConfig& config() const noexcept { return config_; }
  FCFModule& fusion(std::size_t stage) { return fusions_.at(stage); }

 private:
  BiFCNetConfig config_;
  std::array<ConvLayer, kStages> rgb_stages_;
  std::array<ConvLayer, kStages> depth_stages_;
  std::array<FCFModule, kStages> fusions_;
  ConvLayer deep_proj_, fuse1_, fuse2_, classifier_;
};

static_assert(Segmenter<BiFCNetMini>);

}  // namespace bifc
