#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <string>

#include "bifc/diffcore/layers.hpp"
#include "bifc/diffcore/ops.hpp"

namespace bifc {

inline constexpr std::size_t kFractalScales = 6;

/// Log-scale axis (log2 1, ..., log2 6). Fixed; never trained.
inline std::array<double, kFractalScales> fractal_scale_axis() {
  std::array<double, kFractalScales> y{};
  for (std::size_t k = 0; k < kFractalScales; ++k) {
    y[k] = std::log2(static_cast<double>(k + 1));
  }
  return y;
}

namespace ops {

/// Least-squares slope of each pixel's six channel values against the
/// log-scale axis, in the pairwise form
///
///   slope = sum_{i<j} (X_j - X_i)(Y_j - Y_i) / sum_{i<j} (Y_j - Y_i)^2,
///
/// which equals the centered form but is exact for constant X (every
/// difference is zero) and for X = c Y with c a power of two.
class FractalSlope final : public Op {
 public:
  const char* name() const override { return "fractal_slope"; }

  Tensor forward(Inputs in) override {
    const Tensor& x = *in[0];
    const std::size_t plane = x.dim(1) * x.dim(2);
    const auto& d = table().d;
    Tensor out({1, x.dim(1), x.dim(2)});
    for (std::size_t p = 0; p < plane; ++p) {
      double num = 0.0;
      std::size_t pair = 0;
      for (std::size_t i = 0; i < kFractalScales; ++i) {
        for (std::size_t j = i + 1; j < kFractalScales; ++j, ++pair) {
          num += (x[j * plane + p] - x[i * plane + p]) * d[pair];
        }
      }
      out[p] = num / table().den;
    }
    return out;
  }

  void backward(Inputs in, const Tensor&, const Tensor& g, GradInputs gin) override {
    if (!gin[0]) return;
    const std::size_t plane = in[0]->dim(1) * in[0]->dim(2);
    const auto& w = table().w;
    for (std::size_t k = 0; k < kFractalScales; ++k) {
      for (std::size_t p = 0; p < plane; ++p) (*gin[0])[k * plane + p] += w[k] * g[p];
    }
  }

 private:
  struct Table {
    std::array<double, 15> d{};                // Y_j - Y_i over pairs i < j
    std::array<double, kFractalScales> w{};    // d slope / d X_k
    double den = 0.0;
  };

  static const Table& table() {
    static const Table t = [] {
      Table t;
      const auto y = fractal_scale_axis();
      std::size_t pair = 0;
      for (std::size_t i = 0; i < kFractalScales; ++i) {
        for (std::size_t j = i + 1; j < kFractalScales; ++j, ++pair) {
          t.d[pair] = y[j] - y[i];
          t.den += t.d[pair] * t.d[pair];
          t.w[j] += t.d[pair];
          t.w[i] -= t.d[pair];
        }
      }
      for (double& v : t.w) v /= t.den;
      return t;
    }();
    return t;
  }
};

}  // namespace ops

/// Per-pixel least-squares slope of X = log2(relu(f_mid) + 1) against the
/// log-scale axis, taken over the six scale channels of `f_mid`. The
/// denominator is a positive constant, so the output is finite for finite
/// input.
inline Var fractal_slope(Var f_mid) {
  const Tensor& v = f_mid.value();
  require_rank(v, 3, "fractal_slope");
  if (v.dim(0) != kFractalScales) {
    throw Error("fractal_slope: expected 6 scale channels, got " +
                std::to_string(v.dim(0)) + " (shape " + shape_str(v.shape()) + ")");
  }
  return f_mid.tape().apply(std::make_unique<ops::FractalSlope>(), {log2shift(f_mid)});
}

/// Fractal process module over a 3-channel map: each channel is filtered by
/// six learnable single-channel kernels of sizes 1..6, and the per-pixel
/// slope of the log responses becomes that channel's output.
class FPModule {
 public:
  static constexpr std::size_t kChannels = 3;

  FPModule() = default;

  /// Kernels start as normalized k x k box filters, so the untrained module
  /// behaves like a box-counting estimator.
  explicit FPModule(const std::string& name) {
    for (std::size_t c = 0; c < kChannels; ++c) {
      for (std::size_t s = 0; s < kFractalScales; ++s) {
        const std::size_t k = s + 1;
        kernels_[c][s] = Parameter{
            name + ".c" + std::to_string(c) + ".k" + std::to_string(k),
            Tensor({1, 1, k, k}, 1.0 / static_cast<double>(k * k))};
      }
    }
  }

  Var forward(Tape& tape, Var x) {
    const Tensor& v = x.value();
    require_rank(v, 3, "fp_forward");
    if (v.dim(0) != kChannels) {
      throw Error("fp_forward: expected 3 channels, got " + shape_str(v.shape()));
    }
    std::vector<Var> slopes;
    slopes.reserve(kChannels);
    for (std::size_t c = 0; c < kChannels; ++c) {
      Var channel = slice(x, c, c + 1);
      std::vector<Var> responses;
      responses.reserve(kFractalScales);
      for (std::size_t s = 0; s < kFractalScales; ++s) {
        responses.push_back(conv2d(channel, tape.param(kernels_[c][s])));
      }
      slopes.push_back(fractal_slope(concat(responses)));
    }
    return concat(slopes);
  }

  /// Kernel of size `k` (1..6) applied to input channel `channel`.
  Parameter& kernel(std::size_t channel, std::size_t k) {
    return kernels_.at(channel).at(k - 1);
  }

  void collect(ParameterSet& params) {
    for (auto& bank : kernels_) {
      for (Parameter& p : bank) params.add(p);
    }
  }

 private:
  std::array<std::array<Parameter, kFractalScales>, kChannels> kernels_;
};

}  // namespace bifc
