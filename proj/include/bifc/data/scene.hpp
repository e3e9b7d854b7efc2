#pragma once

#include <optional>

#include "bifc/data/raster.hpp"
#include "bifc/diffcore/tensor.hpp"
#include "bifc/grasp/camera.hpp"

namespace bifc {

/// Aligned RGB-D capture with its labels.
struct Scene {
  Tensor rgb;    // 3 x H x W, values in [0, 1]
  Tensor depth;  // 1 x H x W, millimeters, 0 = no reading
  SegMask label;
  std::optional<CameraModel> camera;

  std::size_t height() const { return label.height(); }
  std::size_t width() const { return label.width(); }

  void validate() const {
    if (rgb.rank() != 3 || rgb.dim(0) != 3) {
      throw Error("scene: rgb must be 3 x H x W, got " + shape_str(rgb.shape()));
    }
    if (depth.rank() != 3 || depth.dim(0) != 1) {
      throw Error("scene: depth must be 1 x H x W, got " + shape_str(depth.shape()));
    }
    if (rgb.dim(1) != label.height() || rgb.dim(2) != label.width() ||
        depth.dim(1) != label.height() || depth.dim(2) != label.width()) {
      throw Error("scene: rgb " + shape_str(rgb.shape()) + ", depth " +
                  shape_str(depth.shape()) + " and label " +
                  std::to_string(label.height()) + "x" + std::to_string(label.width()) +
                  " extents differ");
    }
    validate_mask(label);
  }

  friend bool operator==(const Scene&, const Scene&) = default;
};

inline constexpr double kDepthCenterMm = 1000.0;
inline constexpr double kDepthScaleMm = 100.0;

/// Depth as the network sees it: (mm - 1000) / 100, i.e. decimeters from a
/// 1 m reference plane. Missing readings (0 mm) map to 0.
inline Tensor depth_to_input(const Tensor& depth_mm) {
  Tensor out = depth_mm;
  for (double& v : out.values()) v = v > 0.0 ? (v - kDepthCenterMm) / kDepthScaleMm : 0.0;
  return out;
}

}  // namespace bifc
