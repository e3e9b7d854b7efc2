#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "bifc/augment/affine.hpp"
#include "bifc/data/scene.hpp"
#include "bifc/diffcore/layers.hpp"

namespace bifc {

inline constexpr double kColorResidual = 0.3;

/// Per-pixel MLP 3 -> 8 -> 3 (1x1 convolutions), tanh output scaled to
/// +-0.3 and added to the RGB input. The output layer starts at zero, so a
/// fresh net is the identity.
class ColorNet {
 public:
  static constexpr std::size_t kHidden = 8;

  explicit ColorNet(Rng& rng, const std::string& name = "color")
      : hidden_(name + ".hidden", 3, kHidden, 1, rng, true, 1.0),
        out_(name + ".out", kHidden, 3, 1, rng, true, 0.0) {}

  Var forward(Tape& tape, Var rgb) {
    const Shape& s = rgb.shape();
    if (s.size() != 3 || s[0] != 3) {
      throw Error("color_apply: expected 3 x H x W rgb, got " + shape_str(s));
    }
    Var h = tanh(hidden_(tape, rgb));
    Var r = scale(tanh(out_(tape, h)), kColorResidual);
    return clamp01(add(rgb, r));
  }

  Tensor apply(const Tensor& rgb) {
    Tape tape;
    tape.freeze(parameters());
    return forward(tape, tape.constant(rgb)).value();
  }

  ParameterSet parameters() {
    ParameterSet p;
    hidden_.collect(p);
    out_.collect(p);
    return p;
  }
  ConvLayer& hidden() { return hidden_; }
  ConvLayer& output() { return out_; }

 private:
  ConvLayer hidden_;
  ConvLayer out_;
};

/// MLP 8 -> 16 -> 5 from a per-sample latent to raw transform outputs; the
/// bounded sampling op turns them into an in-bounds sampling matrix. The
/// flip is drawn outside the net.
class GeoNet {
 public:
  static constexpr std::size_t kLatent = 8;
  static constexpr std::size_t kHidden = 16;
  static constexpr std::size_t kRaw = 5;

  explicit GeoNet(Rng& rng, const std::string& name = "geo")
      : hidden_(name + ".hidden", kLatent, kHidden, rng, 0.5),
        out_(name + ".out", kHidden, kRaw, rng, 0.1) {}

  Var raw(Tape& tape, const Tensor& latent) {
    if (latent.size() != kLatent) {
      throw Error("geonet: latent must have " + std::to_string(kLatent) + " entries");
    }
    return out_(tape, tanh(hidden_(tape, tape.constant(latent))));
  }

  Var sampling(Tape& tape, const Tensor& latent, bool flip, std::size_t height,
               std::size_t width) {
    return bounded_sampling(raw(tape, latent), flip, height, width);
  }

  AffineParams params(const Tensor& latent, bool flip) {
    Tape tape;
    tape.freeze(parameters());
    return bound_params(raw(tape, latent).value(), flip);
  }

  ParameterSet parameters() {
    ParameterSet p;
    hidden_.collect(p);
    out_.collect(p);
    return p;
  }

 private:
  DenseLayer hidden_;
  DenseLayer out_;
};

enum class AugPath { color_only = 0, geometric_only = 1, color_then_geometric = 2 };

inline const char* path_name(AugPath p) {
  switch (p) {
    case AugPath::color_only: return "color";
    case AugPath::geometric_only: return "geometric";
    case AugPath::color_then_geometric: return "color+geometric";
  }
  return "?";
}

struct PathPolicy {
  std::array<double, 3> weights{0.25, 0.5, 0.25};

  void validate() const {
    double sum = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw Error("path policy: weights must be >= 0");
      sum += w;
    }
    if (!(std::abs(sum - 1.0) <= 1e-9)) {
      throw Error("path policy: weights must sum to 1, got " + std::to_string(sum));
    }
  }
};

inline AugPath sample_path(const PathPolicy& policy, Rng& rng) {
  policy.validate();
  const double u = uniform(rng, 0.0, 1.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < 2; ++i) {
    acc += policy.weights[i];
    if (u < acc) return static_cast<AugPath>(i);
  }
  // The last path with positive weight absorbs rounding at the top end.
  return policy.weights[2] > 0.0 ? AugPath::color_then_geometric
         : policy.weights[1] > 0.0 ? AugPath::geometric_only
                                   : AugPath::color_only;
}

/// Random draws that fix one sample's augmentation.
struct AugmentPlan {
  AugPath path = AugPath::color_only;
  Tensor latent;
  bool flip = false;
};

inline AugmentPlan draw_plan(const PathPolicy& policy, Rng& rng) {
  AugmentPlan plan;
  plan.path = sample_path(policy, rng);
  plan.latent = Tensor({GeoNet::kLatent});
  for (double& v : plan.latent.values()) v = normal(rng);
  plan.flip = uniform(rng, 0.0, 1.0) < 0.5;
  return plan;
}

/// One augmented sample on the tape; labels follow the same matrix.
struct AugmentedSample {
  Var rgb;
  Var depth;  // network units, see depth_to_input
  SegMask label;
  std::optional<SamplingMatrix> matrix;
};

class Augmentor {
 public:
  explicit Augmentor(std::uint64_t seed = 1, PathPolicy policy = {})
      : policy_(policy), init_rng_(derive_rng(seed, 0xa06)), color_(init_rng_), geo_(init_rng_) {
    policy_.validate();
  }

  AugmentedSample apply(Tape& tape, const Scene& scene, const AugmentPlan& plan) {
    scene.validate();
    AugmentedSample s;
    s.rgb = tape.constant(scene.rgb);
    s.depth = tape.constant(depth_to_input(scene.depth));
    s.label = scene.label;
    if (plan.path != AugPath::geometric_only) s.rgb = color_.forward(tape, s.rgb);
    if (plan.path != AugPath::color_only) {
      Var theta = geo_.sampling(tape, plan.latent, plan.flip, scene.height(), scene.width());
      s.rgb = affine_resample(s.rgb, theta);
      s.depth = affine_resample(s.depth, theta);
      s.matrix = from_tensor(theta.value());
      s.label = warp_labels(scene.label, *s.matrix);
    }
    return s;
  }

  /// Concrete (off-tape) augmentation of a scene; depth stays in millimeters.
  Scene apply(const Scene& scene, const AugmentPlan& plan, AffineParams* params = nullptr) {
    Scene out = scene;
    if (plan.path != AugPath::geometric_only) out.rgb = color_.apply(scene.rgb);
    if (plan.path != AugPath::color_only) {
      const AffineParams p = geo_.params(plan.latent, plan.flip);
      if (params) *params = p;
      out = geo_apply(p, out);
    }
    return out;
  }

  ParameterSet parameters() {
    ParameterSet p = color_.parameters();
    p.append(geo_.parameters());
    return p;
  }
  ColorNet& color() { return color_; }
  GeoNet& geo() { return geo_; }
  const PathPolicy& policy() const { return policy_; }

 private:
  PathPolicy policy_;
  Rng init_rng_;
  ColorNet color_;
  GeoNet geo_;
};

}  // namespace bifc
