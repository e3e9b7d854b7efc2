#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "bifc/data/raster.hpp"
#include "bifc/data/scene.hpp"
#include "bifc/diffcore/rng.hpp"

namespace bifc {

struct SceneGenConfig {
  std::size_t height = 128;
  std::size_t width = 128;
  /// Outer-edge band width, as a fraction of the smaller extent.
  double band_fraction = 0.05;
  /// Total collar width range (outer band + inner edge), same unit.
  double collar_min = 0.10;
  double collar_max = 0.15;
  /// Base radius range of the garment outline, same unit.
  double radius_min = 0.30;
  double radius_max = 0.34;
  int fold_min = 2;
  int fold_max = 5;
  double fold_amplitude = 0.02;  // relative to the base radius
  /// Fine ripple along the outline, pixels. Only the planted chords are
  /// perfectly straight.
  double edge_roughness = 1.0;
  /// Straighten one arc per side into a vertical chord.
  bool plant_flat = true;
  double chord_min = 0.25;  // chord length as a fraction of outline height
  double chord_max = 0.32;
  double depth_base_mm = 800.0;
  double depth_amplitude_mm = 20.0;  // fold ridge height
  double collar_lift_mm = 30.0;
  double background_mm = 1400.0;
  double depth_noise_mm = 2.0;
  double invalid_fraction = 0.002;
  double rgb_noise = 0.03;
  std::uint64_t seed = 1;

  void validate() const {
    if (height == 0 || width == 0 || height % 16 || width % 16) {
      throw Error("scenegen: extents must be positive multiples of 16, got " +
                  std::to_string(height) + "x" + std::to_string(width));
    }
    if (!(band_fraction > 0.0)) throw Error("scenegen: band width must be positive");
    if (!(collar_min > band_fraction)) {
      throw Error("scenegen: outer band (" + std::to_string(band_fraction) +
                  ") must be narrower than the collar (" + std::to_string(collar_min) + ")");
    }
    if (!(collar_max >= collar_min)) throw Error("scenegen: collar_max < collar_min");
    if (!(radius_min > 0.0 && radius_max >= radius_min && radius_max < 0.4)) {
      throw Error("scenegen: radius range must satisfy 0 < min <= max < 0.4");
    }
    if (!(collar_max < 0.8 * radius_min)) {
      throw Error("scenegen: collar exceeds the annulus (collar_max must be < 0.8 * radius_min)");
    }
    if (!(edge_roughness >= 0.0)) throw Error("scenegen: edge_roughness must be >= 0");
    if (fold_min < 0 || fold_max < fold_min) throw Error("scenegen: bad fold count range");
    if (!(chord_min > 0.0 && chord_max >= chord_min && chord_max < 0.6)) {
      throw Error("scenegen: chord fraction range must satisfy 0 < min <= max < 0.6");
    }
    if (!(depth_base_mm > collar_lift_mm + depth_amplitude_mm + 4 * depth_noise_mm + 1.0) ||
        !(background_mm < 65535.0)) {
      throw Error("scenegen: depth settings leave the 1..65535 mm range");
    }
    if (!(invalid_fraction >= 0.0 && invalid_fraction < 0.5)) {
      throw Error("scenegen: invalid_fraction must lie in [0, 0.5)");
    }
  }
};

enum class Side { left, right };

inline const char* side_name(Side s) { return s == Side::left ? "left" : "right"; }

/// Pixel span of a planted straight chord on the outer-edge contour.
struct PlantedArc {
  Side side;
  int column;
  int row_begin;  // inclusive
  int row_end;    // inclusive

  bool contains(int x, int y) const {
    return x == column && y >= row_begin && y <= row_end;
  }
  friend bool operator==(const PlantedArc&, const PlantedArc&) = default;
};

struct GeneratedScene {
  Scene scene;
  std::vector<PlantedArc> planted;
};

namespace detail {

struct Point2d {
  double x, y;
};

inline double segment_distance(Point2d p, Point2d a, Point2d b) {
  const double vx = b.x - a.x, vy = b.y - a.y;
  const double wx = p.x - a.x, wy = p.y - a.y;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0.0 ? (wx * vx + wy * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(wx - t * vx, wy - t * vy);
}

inline bool inside_polygon(Point2d p, const std::vector<Point2d>& poly) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point2d a = poly[i], b = poly[j];
    if ((a.y > p.y) != (b.y > p.y) &&
        p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x) {
      in = !in;
    }
  }
  return in;
}

}  // namespace detail

/// Draws one synthetic garment: a folded closed outline whose outermost
/// band is the outer edge, the rest of the collar the inner edge, and the
/// enclosed body "other clothing". Deterministic per (config, rng state).
inline GeneratedScene gen_scene(const SceneGenConfig& cfg, Rng& rng) {
  using detail::Point2d;
  cfg.validate();
  const std::size_t H = cfg.height, W = cfg.width;
  const double ext = static_cast<double>(std::min(H, W));
  const double cx = (static_cast<double>(W) - 1.0) / 2.0 + uniform(rng, -0.03, 0.03) * ext;
  const double cy = (static_cast<double>(H) - 1.0) / 2.0 + uniform(rng, -0.03, 0.03) * ext;
  const double r0 = uniform(rng, cfg.radius_min, cfg.radius_max) * ext;
  const double peak = uniform(rng, 0.12, 0.20);
  const double band = cfg.band_fraction * ext;
  const double collar = uniform(rng, cfg.collar_min, cfg.collar_max) * ext;

  struct Fold {
    int k;
    double amp, phase;
  };
  std::vector<Fold> folds(static_cast<std::size_t>(uniform_int(rng, cfg.fold_min, cfg.fold_max)));
  for (Fold& f : folds) {
    f.k = uniform_int(rng, 3, 6);
    f.amp = uniform(rng, 0.3, 1.0) * cfg.fold_amplitude * r0;
    f.phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  }

  struct Ripple {
    int k;
    double amp, phase;
  };
  std::vector<Ripple> ripples(2);
  for (Ripple& rp : ripples) {
    rp.k = uniform_int(rng, 18, 30);
    rp.amp = uniform(rng, 0.5, 1.0) * cfg.edge_roughness;
    rp.phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  }

  // Star-shaped outline; |cos|^0.7 puts a sharp crease at the top and
  // bottom, so the ends never flatten into long horizontal runs.
  constexpr int kVertices = 1440;
  std::vector<Point2d> poly(kVertices);
  for (int i = 0; i < kVertices; ++i) {
    const double t = 2.0 * std::numbers::pi * i / kVertices;
    double r = r0 * (1.0 + peak * (1.0 - std::pow(std::abs(std::cos(t)), 0.7)));
    for (const Fold& f : folds) r += f.amp * std::sin(f.k * t + f.phase);
    for (const Ripple& rp : ripples) r += rp.amp * std::sin(rp.k * t + rp.phase);
    poly[i] = {cx + r * std::cos(t), cy + r * std::sin(t)};
  }
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const Point2d& p : poly) {
    xmin = std::min(xmin, p.x);
    xmax = std::max(xmax, p.x);
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  if (xmin < 1.0 || ymin < 1.0 || xmax > static_cast<double>(W) - 2.0 ||
      ymax > static_cast<double>(H) - 2.0) {
    throw Error("scenegen: outline leaves the frame; reduce radius_max");
  }

  // Clip lines: walk inward column by column until the outline covers a
  // contiguous run of rows at least as long as the drawn chord.
  double clip_left = -1e300, clip_right = 1e300;
  int mid_left = 0, mid_right = 0;
  if (cfg.plant_flat) {
    auto longest_run = [&](int col, int& mid) {
      int best = 0, run = 0;
      for (int y = 0; y < static_cast<int>(H); ++y) {
        run = detail::inside_polygon({static_cast<double>(col), static_cast<double>(y)}, poly)
                  ? run + 1
                  : 0;
        if (run > best) {
          best = run;
          mid = y - run / 2;
        }
      }
      return best;
    };
    auto find_clip = [&](int from, int step, double want, int& mid) {
      for (int col = from; std::abs(col - cx) > 0.3 * r0; col += step) {
        if (longest_run(col, mid) >= want) return col;
      }
      throw Error("scenegen: cannot plant a flat chord of the requested length");
    };
    const double span = ymax - ymin;
    const int left = find_clip(static_cast<int>(std::ceil(xmin)), 1,
                               uniform(rng, cfg.chord_min, cfg.chord_max) * span, mid_left);
    const int right = find_clip(static_cast<int>(std::floor(xmax)), -1,
                                uniform(rng, cfg.chord_min, cfg.chord_max) * span, mid_right);
    // Half-integer clip lines keep the chord between pixel centers.
    clip_left = left - 0.5;
    clip_right = right + 0.5;
  }

  Scene scene;
  scene.rgb = Tensor({3, H, W});
  scene.depth = Tensor({1, H, W});
  scene.label = SegMask(H, W, 0);

  Grid<double> dist(H, W, 0.0);
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const Point2d p{static_cast<double>(x), static_cast<double>(y)};
      if (p.x < clip_left || p.x > clip_right || !detail::inside_polygon(p, poly)) continue;
      double d = std::min(p.x - clip_left, clip_right - p.x);
      for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        d = std::min(d, detail::segment_distance(p, poly[j], poly[i]));
      }
      dist.at(y, x) = d;
      const auto cls = d <= band     ? SegClass::outer_edge
                       : d <= collar ? SegClass::inner_edge
                                     : SegClass::other_clothing;
      scene.label.at(y, x) = static_cast<std::uint8_t>(cls);
    }
  }

  // Fold ridges: a few soft lines across the garment.
  struct Ridge {
    double nx, ny, offset, amp, sigma;
  };
  std::vector<Ridge> ridges(static_cast<std::size_t>(uniform_int(rng, 1, 3)));
  for (Ridge& rd : ridges) {
    const double a = uniform(rng, 0.0, std::numbers::pi);
    rd = {std::cos(a), std::sin(a), uniform(rng, -0.5, 0.5) * r0,
          uniform(rng, 0.4, 1.0) * cfg.depth_amplitude_mm, uniform(rng, 0.08, 0.2) * r0};
  }
  const double tilt_x = uniform(rng, -10.0, 10.0), tilt_y = uniform(rng, -10.0, 10.0);
  const double light = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  const double garment[3] = {uniform(rng, 0.82, 0.95), uniform(rng, 0.82, 0.95),
                             uniform(rng, 0.82, 0.95)};
  const double backdrop[3] = {uniform(rng, 0.10, 0.40), uniform(rng, 0.10, 0.40),
                              uniform(rng, 0.10, 0.40)};
  const double bg_tilt = uniform(rng, -40.0, 40.0);

  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const double u = (static_cast<double>(x) - cx) / r0;
      const double v = (static_cast<double>(y) - cy) / r0;
      const auto cls = static_cast<SegClass>(scene.label.at(y, x));
      double depth = 0.0;
      double shade = 1.0;
      if (cls == SegClass::background) {
        depth = cfg.background_mm + bg_tilt * (static_cast<double>(x) / static_cast<double>(W) - 0.5);
        for (int c = 0; c < 3; ++c) {
          scene.rgb.at(c, y, x) = backdrop[c] + normal(rng, 0.0, cfg.rgb_noise);
        }
      } else {
        double ridge = 0.0, slope = 0.0;
        for (const Ridge& rd : ridges) {
          const double s = (static_cast<double>(x) - cx) * rd.nx +
                           (static_cast<double>(y) - cy) * rd.ny - rd.offset;
          const double g = std::exp(-0.5 * s * s / (rd.sigma * rd.sigma));
          ridge += rd.amp * g;
          slope += -rd.amp * g * s / (rd.sigma * rd.sigma);
        }
        depth = cfg.depth_base_mm + tilt_x * u + tilt_y * v - ridge;
        if (cls == SegClass::outer_edge || cls == SegClass::inner_edge) {
          depth -= cfg.collar_lift_mm;
        }
        // Shading follows the ridges and a global light direction only, so
        // the collar boundary is invisible in color.
        shade = 0.92 + 0.05 * (std::cos(light) * u + std::sin(light) * v) +
                0.004 * slope;
        for (int c = 0; c < 3; ++c) {
          scene.rgb.at(c, y, x) = garment[c] * shade + normal(rng, 0.0, cfg.rgb_noise);
        }
      }
      depth += normal(rng, 0.0, cfg.depth_noise_mm);
      if (uniform(rng, 0.0, 1.0) < cfg.invalid_fraction) depth = 0.0;
      scene.depth.at(0, y, x) = std::clamp(std::round(depth), 0.0, 65535.0);
      for (int c = 0; c < 3; ++c) {
        scene.rgb.at(c, y, x) = std::clamp(scene.rgb.at(c, y, x), 0.0, 1.0);
      }
    }
  }

  GeneratedScene out{std::move(scene), {}};
  if (cfg.plant_flat) {
    const auto& lab = out.scene.label;
    // The straight run of boundary pixels on the chord column: garment at
    // `col`, background at `outside_col`, contiguous through the chord.
    auto record = [&](Side side, int col, int outside_col) {
      const int mid = side == Side::left ? mid_left : mid_right;
      auto edge = [&](int y) {
        return y >= 0 && y < static_cast<int>(H) && lab.at(y, col) != 0 &&
               lab.at(y, outside_col) == 0;
      };
      if (!edge(mid)) throw Error("scenegen: planted chord vanished");
      int lo = mid, hi = mid;
      while (edge(lo - 1)) --lo;
      while (edge(hi + 1)) ++hi;
      out.planted.push_back(PlantedArc{side, col, lo, hi});
    };
    record(Side::left, static_cast<int>(clip_left + 0.5), static_cast<int>(clip_left - 0.5));
    record(Side::right, static_cast<int>(clip_right - 0.5), static_cast<int>(clip_right + 0.5));
  }
  out.scene.camera = default_camera(H, W);
  return out;
}

/// Generates `count` scenes, scene i drawn from an rng derived from
/// (config.seed, i) so any subset can be regenerated on its own.
inline std::vector<GeneratedScene> gen_scenes(const SceneGenConfig& cfg, std::size_t count) {
  std::vector<GeneratedScene> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng = derive_rng(cfg.seed, i);
    out.push_back(gen_scene(cfg, rng));
  }
  return out;
}

}  // namespace bifc
