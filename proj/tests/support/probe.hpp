#pragma once

#include "bifc/diffcore/layers.hpp"
#include "bifc/fusion/bifcnet.hpp"

namespace bifc::testing {

/// Per-pixel linear softmax classifier over [rgb; depth]. Cross-entropy is
/// convex in its parameters, which makes descent steps checkable exactly.
class LinearProbe {
 public:
  explicit LinearProbe(std::uint64_t seed, std::size_t classes = 4) {
    Rng rng(seed);
    layer_ = ConvLayer("probe", 4, classes, 1, rng, true, 0.5);
  }

  Var forward(Tape& tape, Var rgb, Var depth) { return layer_(tape, concat({rgb, depth})); }

  ParameterSet parameters() {
    ParameterSet p;
    layer_.collect(p);
    return p;
  }

 private:
  ConvLayer layer_;
};

static_assert(Segmenter<LinearProbe>);

}  // namespace bifc::testing
