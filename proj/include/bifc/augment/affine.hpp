#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>

#include "bifc/data/scene.hpp"
#include "bifc/diffcore/ops.hpp"

namespace bifc {

inline constexpr double kMaxRotation = std::numbers::pi / 6.0;  // 30 degrees
inline constexpr double kMaxScale = 1.25;                        // min is 1 / 1.25
inline constexpr double kMaxTranslation = 0.1;                   // fraction of extent

/// Planar transform u' = R S F u + t about the image center (pixel units,
/// y down), with t = (translate_x * W, translate_y * H).
struct AffineParams {
  double rotation = 0.0;
  double scale_x = 1.0, scale_y = 1.0;
  double translate_x = 0.0, translate_y = 0.0;
  bool flip_horizontal = false;

  bool within_bounds() const {
    constexpr double eps = 1e-12;
    auto scale_ok = [](double s) { return s >= 1.0 / kMaxScale - eps && s <= kMaxScale + eps; };
    return std::abs(rotation) <= kMaxRotation + eps && scale_ok(scale_x) && scale_ok(scale_y) &&
           std::abs(translate_x) <= kMaxTranslation + eps &&
           std::abs(translate_y) <= kMaxTranslation + eps;
  }
  friend bool operator==(const AffineParams&, const AffineParams&) = default;
};

/// Row-major 2x3 map from centered destination to centered source pixel
/// coordinates, the layout affine_resample consumes.
using SamplingMatrix = std::array<double, 6>;

inline const SamplingMatrix kIdentitySampling{1, 0, 0, 0, 1, 0};

/// Inverse of the forward transform: A = F S^-1 R^T, b = -A t.
inline SamplingMatrix sampling_matrix(const AffineParams& p, std::size_t height,
                                      std::size_t width) {
  if (!(p.scale_x > 0.0) || !(p.scale_y > 0.0)) {
    throw Error("sampling_matrix: scales must be positive");
  }
  const double c = std::cos(p.rotation), s = std::sin(p.rotation);
  const double f = p.flip_horizontal ? -1.0 : 1.0;
  const double a00 = f * c / p.scale_x, a01 = f * s / p.scale_x;
  const double a10 = -s / p.scale_y, a11 = c / p.scale_y;
  const double tx = p.translate_x * static_cast<double>(width);
  const double ty = p.translate_y * static_cast<double>(height);
  return {a00, a01, -(a00 * tx + a01 * ty), a10, a11, -(a10 * tx + a11 * ty)};
}

inline SamplingMatrix invert(const SamplingMatrix& m) {
  const double det = m[0] * m[4] - m[1] * m[3];
  if (!(std::abs(det) > 1e-12)) throw Error("invert: sampling matrix is singular");
  const double i00 = m[4] / det, i01 = -m[1] / det;
  const double i10 = -m[3] / det, i11 = m[0] / det;
  return {i00, i01, -(i00 * m[2] + i01 * m[5]), i10, i11, -(i10 * m[2] + i11 * m[5])};
}

inline Tensor to_tensor(const SamplingMatrix& m) {
  Tensor t({6});
  for (std::size_t i = 0; i < 6; ++i) t[i] = m[i];
  return t;
}

inline SamplingMatrix from_tensor(const Tensor& t) {
  if (t.size() != 6) throw Error("sampling matrix needs 6 entries, got " + shape_str(t.shape()));
  SamplingMatrix m{};
  for (std::size_t i = 0; i < 6; ++i) m[i] = t[i];
  return m;
}

/// Nearest-neighbor label warp; pixels whose source falls outside the frame
/// become background.
inline SegMask warp_labels(const SegMask& label, const SamplingMatrix& m) {
  const std::size_t H = label.height(), W = label.width();
  const Tensor th = to_tensor(m);
  SegMask out(H, W, 0);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const auto [sx, sy] = ops::AffineResample::source_coord(th, x, y, H, W);
      const long ix = static_cast<long>(std::floor(sx + 0.5));
      const long iy = static_cast<long>(std::floor(sy + 0.5));
      if (label.inside(iy, ix)) out.at(y, x) = label.at(iy, ix);
    }
  }
  return out;
}

/// Bilinear warp with zero fill, the same arithmetic as affine_resample.
inline Tensor warp_bilinear(const Tensor& image, const SamplingMatrix& m) {
  require_rank(image, 3, "warp_bilinear");
  ops::AffineResample op;
  const Tensor th = to_tensor(m);
  const Tensor* in[2] = {&image, &th};
  return op.forward(in);
}

/// RGB and depth resampled bilinearly, the label by nearest neighbor, all
/// through the same matrix. Depth millimeters are carried over unscaled.
inline Scene geo_apply(const SamplingMatrix& m, const Scene& scene) {
  scene.validate();
  Scene out;
  out.rgb = warp_bilinear(scene.rgb, m);
  out.depth = warp_bilinear(scene.depth, m);
  out.label = warp_labels(scene.label, m);
  out.camera = scene.camera;
  return out;
}

inline Scene geo_apply(const AffineParams& p, const Scene& scene) {
  return geo_apply(sampling_matrix(p, scene.height(), scene.width()), scene);
}

/// Raw outputs -> bounded parameters: rotation = 30 deg * tanh(z0),
/// scale = 1.25^tanh(z1|z2), translation = 0.1 * tanh(z3|z4).
inline AffineParams bound_params(const Tensor& z, bool flip) {
  if (z.size() != 5) throw Error("bound_params: expected 5 raw outputs, got " + shape_str(z.shape()));
  AffineParams p;
  p.rotation = kMaxRotation * std::tanh(z[0]);
  p.scale_x = std::pow(kMaxScale, std::tanh(z[1]));
  p.scale_y = std::pow(kMaxScale, std::tanh(z[2]));
  p.translate_x = kMaxTranslation * std::tanh(z[3]);
  p.translate_y = kMaxTranslation * std::tanh(z[4]);
  p.flip_horizontal = flip;
  return p;
}

namespace ops {

/// Raw 5-vector -> sampling matrix of the bounded transform.
class BoundedSampling final : public Op {
 public:
  BoundedSampling(bool flip, std::size_t height, std::size_t width)
      : flip_(flip), height_(height), width_(width) {}
  const char* name() const override { return "bounded_sampling"; }

  Tensor forward(Inputs in) override {
    return to_tensor(sampling_matrix(bound_params(*in[0], flip_), height_, width_));
  }

  void backward(Inputs in, const Tensor& out, const Tensor& g, GradInputs gin) override {
    if (!gin[0]) return;
    const Tensor& z = *in[0];
    const AffineParams p = bound_params(z, flip_);
    const double c = std::cos(p.rotation), s = std::sin(p.rotation);
    const double f = flip_ ? -1.0 : 1.0;
    const double tx = p.translate_x * static_cast<double>(width_);
    const double ty = p.translate_y * static_cast<double>(height_);
    const double a00 = out[0], a01 = out[1], a10 = out[3], a11 = out[4];
    // Translation terms fold into the matrix entries through b = -A t.
    const double g00 = g[0] - g[2] * tx, g01 = g[1] - g[2] * ty;
    const double g10 = g[3] - g[5] * tx, g11 = g[4] - g[5] * ty;
    const double gtx = -(g[2] * a00 + g[5] * a10);
    const double gty = -(g[2] * a01 + g[5] * a11);

    const double d_rot = g00 * (-f * s / p.scale_x) + g01 * (f * c / p.scale_x) +
                         g10 * (-c / p.scale_y) + g11 * (-s / p.scale_y);
    const double d_sx = -(g00 * a00 + g01 * a01) / p.scale_x;
    const double d_sy = -(g10 * a10 + g11 * a11) / p.scale_y;

    auto dtanh = [](double v) {
      const double t = std::tanh(v);
      return 1.0 - t * t;
    };
    const double log_s = std::log(kMaxScale);
    Tensor& gz = *gin[0];
    gz[0] += d_rot * kMaxRotation * dtanh(z[0]);
    gz[1] += d_sx * p.scale_x * log_s * dtanh(z[1]);
    gz[2] += d_sy * p.scale_y * log_s * dtanh(z[2]);
    gz[3] += gtx * kMaxTranslation * static_cast<double>(width_) * dtanh(z[3]);
    gz[4] += gty * kMaxTranslation * static_cast<double>(height_) * dtanh(z[4]);
  }

 private:
  bool flip_;
  std::size_t height_, width_;
};

}  // namespace ops

inline Var bounded_sampling(Var raw, bool flip, std::size_t height, std::size_t width) {
  if (raw.value().size() != 5) {
    throw Error("bounded_sampling: expected 5 raw outputs, got " + shape_str(raw.shape()));
  }
  return raw.tape().apply(std::make_unique<ops::BoundedSampling>(flip, height, width), {raw});
}

}  // namespace bifc
