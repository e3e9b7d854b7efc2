#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "bifc/data/raster.hpp"

namespace bifc {

struct Pixel {
  int x = 0;  // column
  int y = 0;  // row
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

struct Point2 {
  double x = 0.0, y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

enum class EdgeRole { outer, inner };

/// Closed, ordered contour. `points` are in a y-up frame (x = column,
/// y = -row); the centroid-frame coordinate of point i is points[i] - origin.
/// Keeping integer-valued points keeps every difference exact.
struct ContourPointSet {
  EdgeRole role = EdgeRole::outer;
  std::vector<Point2> points;
  Point2 origin{};

  std::size_t size() const noexcept { return points.size(); }
  Point2 centered(std::size_t i) const {
    return {points[i].x - origin.x, points[i].y - origin.y};
  }
  Pixel pixel(std::size_t i) const {
    return {static_cast<int>(points[i].x), static_cast<int>(-points[i].y)};
  }
};

/// Labels of the 8-connected components of `mask == cls`, in raster order of
/// their first pixel. Returns pixel lists per component.
inline std::vector<std::vector<Pixel>> components8(const SegMask& mask, std::uint8_t cls) {
  const long H = static_cast<long>(mask.height()), W = static_cast<long>(mask.width());
  Grid<std::uint8_t> seen(mask.height(), mask.width(), 0);
  std::vector<std::vector<Pixel>> out;
  for (long y = 0; y < H; ++y) {
    for (long x = 0; x < W; ++x) {
      if (mask.at(y, x) != cls || seen.at(y, x)) continue;
      std::vector<Pixel> comp;
      std::deque<Pixel> queue{{static_cast<int>(x), static_cast<int>(y)}};
      seen.at(y, x) = 1;
      while (!queue.empty()) {
        const Pixel p = queue.front();
        queue.pop_front();
        comp.push_back(p);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const long ny = p.y + dy, nx = p.x + dx;
            if (!mask.inside(ny, nx) || seen.at(ny, nx) || mask.at(ny, nx) != cls) continue;
            seen.at(ny, nx) = 1;
            queue.push_back({static_cast<int>(nx), static_cast<int>(ny)});
          }
        }
      }
      out.push_back(std::move(comp));
    }
  }
  return out;
}

/// Moore-neighbor boundary of the region `inside`, starting at its topmost
/// then leftmost pixel and walking clockwise on screen. Stops when the walk
/// is about to leave the start pixel by the same move as the first time.
inline std::vector<Pixel> moore_trace(const Grid<std::uint8_t>& inside) {
  const long H = static_cast<long>(inside.height()), W = static_cast<long>(inside.width());
  Pixel start{-1, -1};
  for (long y = 0; y < H && start.x < 0; ++y) {
    for (long x = 0; x < W; ++x) {
      if (inside.at(y, x)) {
        start = {static_cast<int>(x), static_cast<int>(y)};
        break;
      }
    }
  }
  if (start.x < 0) return {};
  // Clockwise on screen (y down): W, NW, N, NE, E, SE, S, SW.
  static constexpr std::array<int, 8> dx{-1, -1, 0, 1, 1, 1, 0, -1};
  static constexpr std::array<int, 8> dy{0, -1, -1, -1, 0, 1, 1, 1};
  auto on = [&](long y, long x) { return inside.inside(y, x) && inside.at(y, x) != 0; };

  std::vector<Pixel> contour{start};
  Pixel cur = start;
  int back = 0;  // direction from cur to the last background pixel examined
  int first_move = -1;
  const std::size_t limit = 4 * inside.size() + 8;
  while (contour.size() <= limit) {
    int move = -1;
    for (int i = 1; i <= 8; ++i) {
      const int d = (back + i) % 8;
      if (on(cur.y + dy[d], cur.x + dx[d])) {
        move = d;
        break;
      }
    }
    if (move < 0) return contour;  // isolated pixel
    if (cur == start) {
      if (first_move < 0) {
        first_move = move;
      } else if (move == first_move) {
        contour.pop_back();
        return contour;
      }
    }
    const Pixel next{cur.x + dx[move], cur.y + dy[move]};
    // The neighbor checked just before `move` was background; seen from
    // `next` it lies in direction (move + 6) % 8 or (move + 5) % 8.
    back = (move % 2 == 0) ? (move + 6) % 8 : (move + 5) % 8;
    cur = next;
    contour.push_back(cur);
  }
  throw Error("moore_trace: contour did not close");
}

struct EdgeSets {
  ContourPointSet outer;
  ContourPointSet inner;
};

inline constexpr std::size_t kMinRegionPixels = 20;

/// Largest 8-connected component of `cls`; ties go to the first in raster
/// order.
inline std::vector<Pixel> largest_component(const SegMask& mask, SegClass cls) {
  auto comps = components8(mask, static_cast<std::uint8_t>(cls));
  std::size_t best = comps.size();
  for (std::size_t i = 0; i < comps.size(); ++i) {
    if (best == comps.size() || comps[i].size() > comps[best].size()) best = i;
  }
  if (best == comps.size() || comps[best].size() < kMinRegionPixels) {
    throw Error(std::string("extract_edges: region not found for class ") +
                class_name(static_cast<std::size_t>(cls)) + " (need >= " +
                std::to_string(kMinRegionPixels) + " connected pixels, have " +
                std::to_string(best == comps.size() ? 0 : comps[best].size()) + ")");
  }
  return std::move(comps[best]);
}

inline EdgeSets extract_edges(const SegMask& mask) {
  validate_mask(mask);
  double sx = 0.0, sy = 0.0;
  std::size_t n = 0;
  for (std::size_t y = 0; y < mask.height(); ++y) {
    for (std::size_t x = 0; x < mask.width(); ++x) {
      if (mask.at(y, x) == 0) continue;
      sx += static_cast<double>(x);
      sy += static_cast<double>(y);
      ++n;
    }
  }
  EdgeSets out;
  auto trace = [&](SegClass cls, EdgeRole role) {
    const auto comp = largest_component(mask, cls);
    Grid<std::uint8_t> region(mask.height(), mask.width(), 0);
    for (const Pixel& p : comp) region.at(p.y, p.x) = 1;
    ContourPointSet set;
    set.role = role;
    set.origin = {sx / static_cast<double>(n), -sy / static_cast<double>(n)};
    for (const Pixel& p : moore_trace(region)) {
      set.points.push_back({static_cast<double>(p.x), -static_cast<double>(p.y)});
    }
    return set;
  };
  out.outer = trace(SegClass::outer_edge, EdgeRole::outer);
  out.inner = trace(SegClass::inner_edge, EdgeRole::inner);
  return out;
}

}  // namespace bifc
