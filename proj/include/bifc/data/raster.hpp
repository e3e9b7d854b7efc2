#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bifc/diffcore/tensor.hpp"

namespace bifc {

/// Row-major 2-D array of small values (labels, masks).
template <class T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t height, std::size_t width, T fill = T{})
      : height_(height), width_(width), data_(height * width, fill) {}

  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }

  T& at(std::size_t y, std::size_t x) { return data_[y * width_ + x]; }
  const T& at(std::size_t y, std::size_t x) const { return data_[y * width_ + x]; }
  bool inside(long y, long x) const noexcept {
    return y >= 0 && x >= 0 && y < static_cast<long>(height_) &&
           x < static_cast<long>(width_);
  }

  std::vector<T>& values() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t height_ = 0, width_ = 0;
  std::vector<T> data_;
};

enum class SegClass : std::uint8_t {
  background = 0,
  outer_edge = 1,
  inner_edge = 2,
  other_clothing = 3,
};

inline constexpr std::size_t kNumClasses = 4;

inline const char* class_name(std::size_t k) {
  static constexpr const char* names[kNumClasses] = {"background", "outer_edge",
                                                     "inner_edge", "other_clothing"};
  return k < kNumClasses ? names[k] : "unknown";
}

/// Per-pixel class indices over {background, outer edge, inner edge,
/// other clothing}.
using SegMask = Grid<std::uint8_t>;

inline void validate_mask(const SegMask& mask) {
  for (std::uint8_t v : mask.values()) {
    if (v >= kNumClasses) {
      throw Error("segmask: class index " + std::to_string(v) + " outside 0..3");
    }
  }
}

inline std::vector<int> mask_labels(const SegMask& mask) {
  return std::vector<int>(mask.values().begin(), mask.values().end());
}

}  // namespace bifc
