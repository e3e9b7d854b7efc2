#pragma once

#include <string>
#include <vector>

#include "bifc/diffcore/layers.hpp"
#include "bifc/diffcore/ops.hpp"
#include "bifc/diffcore/rng.hpp"
#include "bifc/fusion/fractal.hpp"

namespace bifc {

/// Fractal cross fusion of an RGB feature map and a depth feature map of
/// the same shape C x H x W.
///
/// Cross-propagation path: both streams are reduced to 3 channels by
/// bias-free 1x1 convolutions. Round 1 runs one FP module per stream; every
/// further round feeds each stream's FP output, plus the *other* stream's
/// reduced input, into a fresh FP module:
///
///   a_1 = FP(rgb3),              b_1 = FP(dep3)
///   a_r = FP(a_{r-1} + dep3),    b_r = FP(b_{r-1} + rgb3)
///   F_u = a_R + b_R
///
/// Channel-weight path: W_m = [gap(rgb); gap(depth)] (RGB first), then
/// W_f = sigmoid(MLP(W_m)) with an MLP 2C -> C -> 3 and ReLU hidden units.
///
/// Output: f_N = conv1x1(F_u * W_f), back to C channels.
class FCFModule {
 public:
  static constexpr std::size_t kReduced = FPModule::kChannels;

  FCFModule() = default;
  FCFModule(const std::string& name, std::size_t channels, Rng& rng,
            std::size_t rounds = 2)
      : channels_(channels),
        reduce_rgb_(name + ".reduce_rgb", channels, kReduced, 1, rng, false),
        reduce_depth_(name + ".reduce_depth", channels, kReduced, 1, rng, false),
        hidden_(name + ".mlp_hidden", 2 * channels, channels, rng),
        gate_(name + ".mlp_out", channels, kReduced, rng),
        restore_(name + ".restore", kReduced, channels, 1, rng, true) {
    if (rounds < 1) throw Error("fcf: at least one propagation round is required");
    for (std::size_t r = 0; r < rounds; ++r) {
      fp_rgb_.emplace_back(name + ".fp_rgb" + std::to_string(r));
      fp_depth_.emplace_back(name + ".fp_depth" + std::to_string(r));
    }
  }

  /// When set, W_f is replaced by ones (test harness for the gating path).
  bool bypass_channel_weights = false;

  Var forward(Tape& tape, Var rgb, Var depth) {
    const Tensor& rv = rgb.value();
    require_rank(rv, 3, "fcf_forward");
    if (rv.shape() != depth.value().shape()) {
      throw Error("fcf_forward: RGB features " + shape_str(rv.shape()) +
                  " and depth features " + shape_str(depth.shape()) +
                  " differ in shape");
    }
    if (rv.dim(0) != channels_) {
      throw Error("fcf_forward: module built for " + std::to_string(channels_) +
                  " channels, got " + shape_str(rv.shape()));
    }

    Var rgb3 = reduce_rgb_(tape, rgb);
    Var dep3 = reduce_depth_(tape, depth);
    Var a = fp_rgb_[0].forward(tape, rgb3);
    Var b = fp_depth_[0].forward(tape, dep3);
    for (std::size_t r = 1; r < fp_rgb_.size(); ++r) {
      Var a_next = fp_rgb_[r].forward(tape, add(a, dep3));
      Var b_next = fp_depth_[r].forward(tape, add(b, rgb3));
      a = a_next;
      b = b_next;
    }
    Var fused = add(a, b);

    if (!bypass_channel_weights) {
      Var wm = concat({gap(rgb), gap(depth)});
      Var wf = sigmoid(gate_(tape, relu(hidden_(tape, wm))));
      fused = mul_channel(fused, wf);
    }
    return restore_(tape, fused);
  }

  std::size_t channels() const noexcept { return channels_; }
  std::size_t rounds() const noexcept { return fp_rgb_.size(); }

  ConvLayer& reduce_rgb() { return reduce_rgb_; }
  ConvLayer& reduce_depth() { return reduce_depth_; }
  ConvLayer& restore() { return restore_; }
  DenseLayer& mlp_hidden() { return hidden_; }
  DenseLayer& mlp_out() { return gate_; }
  FPModule& fp_rgb(std::size_t round) { return fp_rgb_.at(round); }
  FPModule& fp_depth(std::size_t round) { return fp_depth_.at(round); }

  void collect(ParameterSet& params) {
    reduce_rgb_.collect(params);
    reduce_depth_.collect(params);
    for (std::size_t r = 0; r < fp_rgb_.size(); ++r) {
      fp_rgb_[r].collect(params);
      fp_depth_[r].collect(params);
    }
    hidden_.collect(params);
    gate_.collect(params);
    restore_.collect(params);
  }

 private:
  std::size_t channels_ = 0;
  ConvLayer reduce_rgb_, reduce_depth_;
  std::vector<FPModule> fp_rgb_, fp_depth_;
  DenseLayer hidden_, gate_;
  ConvLayer restore_;
};

}  // namespace bifc
