#pragma once

#include <cmath>
#include <string>

#include "bifc/diffcore/ops.hpp"
#include "bifc/diffcore/rng.hpp"
#include "bifc/diffcore/tape.hpp"

namespace bifc {

/// Marker for He-uniform initialization, bound sqrt(6 / fan_in).
inline constexpr double kHeInit = -1.0;

inline double init_bound(double init_range, std::size_t fan_in) {
  return init_range == kHeInit ? std::sqrt(6.0 / static_cast<double>(fan_in)) : init_range;
}

/// Same-padded convolution with an optional per-channel bias.
struct ConvLayer {
  Parameter kernel;
  Parameter bias;
  bool has_bias = true;

  ConvLayer() = default;
  ConvLayer(const std::string& name, std::size_t in_channels,
            std::size_t out_channels, std::size_t k, Rng& rng, bool with_bias = true,
            double init_range = kHeInit)
      : kernel{name + ".kernel", Tensor({out_channels, in_channels, k, k})},
        bias{name + ".bias", Tensor({out_channels})},
        has_bias(with_bias) {
    const double b = init_bound(init_range, in_channels * k * k);
    fill_uniform(kernel.value, rng, -b, b);
  }

  Var operator()(Tape& tape, Var x) {
    Var y = conv2d(x, tape.param(kernel));
    return has_bias ? add_channel_bias(y, tape.param(bias)) : y;
  }

  void collect(ParameterSet& params) {
    params.add(kernel);
    if (has_bias) params.add(bias);
  }
};

struct DenseLayer {
  Parameter weights;
  Parameter bias;

  DenseLayer() = default;
  DenseLayer(const std::string& name, std::size_t in, std::size_t out, Rng& rng,
             double init_range = kHeInit)
      : weights{name + ".weights", Tensor({out, in})},
        bias{name + ".bias", Tensor({out})} {
    const double b = init_bound(init_range, in);
    fill_uniform(weights.value, rng, -b, b);
  }

  Var operator()(Tape& tape, Var x) {
    return dense(x, tape.param(weights), tape.param(bias));
  }

  void collect(ParameterSet& params) {
    params.add(weights);
    params.add(bias);
  }
};

}  // namespace bifc
