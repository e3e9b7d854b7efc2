#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bifc/data/generator.hpp"
#include "bifc/data/pnm.hpp"
#include "bifc/data/scene.hpp"
#include "bifc/grasp/camera.hpp"
#include "bifc/grasp/contour.hpp"

namespace bifc {

struct DirectionSample {
  std::size_t outer_index = 0;
  std::size_t inner_index = 0;
  double length = 0.0;  // Euclidean distance, pixels
  double k_sin = 0.0;
  double k_cos = 0.0;
};

struct MatchResult {
  std::vector<DirectionSample> samples;
  std::size_t skipped = 0;  // outer points coinciding with an inner point
};

/// Exact nearest inner point for every outer point; the first (lowest
/// index) inner point wins ties. K_sin = dy / L and K_cos = dx / L with
/// d = outer - inner.
inline MatchResult match_nearest_inner(const ContourPointSet& outer,
                                       const ContourPointSet& inner) {
  if (outer.points.empty() || inner.points.empty()) {
    throw Error("match_nearest_inner: contour point sets must be non-empty");
  }
  MatchResult r;
  for (std::size_t i = 0; i < outer.size(); ++i) {
    const Point2 o = outer.points[i];
    std::size_t best = 0;
    double best_d2 = INFINITY;
    for (std::size_t j = 0; j < inner.size(); ++j) {
      const double dx = o.x - inner.points[j].x;
      const double dy = o.y - inner.points[j].y;
      const double d2 = dx * dx + dy * dy;
      if (d2 < best_d2) {
        best_d2 = d2;
        best = j;
      }
    }
    if (best_d2 == 0.0) {
      ++r.skipped;
      continue;
    }
    const double dx = o.x - inner.points[best].x;
    const double dy = o.y - inner.points[best].y;
    const double len = std::sqrt(best_d2);
    r.samples.push_back({i, best, len, dy / len, dx / len});
  }
  return r;
}

inline constexpr std::size_t kDefaultFlatnessWindow = 10;

/// Flatness of the cyclic window of N + 1 samples around `n` (ceil(N/2)
/// before, floor(N/2) after). The mean product term is the product of the
/// window means of K_sin and K_cos, as the formula is written, not the mean
/// of the products.
inline double flatness(const std::vector<DirectionSample>& samples, std::size_t n,
                       std::size_t N) {
  const std::size_t len = samples.size();
  if (N + 1 > len) {
    throw Error("flatness: window of " + std::to_string(N + 1) +
                " points exceeds contour length " + std::to_string(len));
  }
  if (n >= len) throw Error("flatness: index outside the contour");
  const std::size_t before = (N + 1) / 2;
  const std::size_t first = (n + len - before % len) % len;
  double ms = 0.0, mc = 0.0;
  for (std::size_t k = 0; k <= N; ++k) {
    const auto& s = samples[(first + k) % len];
    ms += s.k_sin;
    mc += s.k_cos;
  }
  const double inv = 1.0 / static_cast<double>(N + 1);
  const double mean_product = (ms * inv) * (mc * inv);
  double f = 0.0;
  for (std::size_t k = 0; k <= N; ++k) {
    const auto& s = samples[(first + k) % len];
    const double d = s.k_sin * s.k_cos - mean_product;
    f += d * d;
  }
  return f * inv;
}

struct GraspCandidate {
  Side side = Side::left;
  std::size_t sample_index = 0;
  DirectionSample sample;
  Pixel outer;
  Pixel inner;
  double flatness = 0.0;
};

struct GraspSelection {
  EdgeSets edges;
  MatchResult match;
  std::vector<double> flatness;  // per sample
  GraspCandidate left;
  GraspCandidate right;
};

inline Side side_of(const ContourPointSet& outer, std::size_t i) {
  return outer.centered(i).x < 0.0 ? Side::left : Side::right;
}

inline GraspSelection select_grasp_points(const SegMask& mask,
                                          std::size_t N = kDefaultFlatnessWindow) {
  GraspSelection sel;
  sel.edges = extract_edges(mask);
  sel.match = match_nearest_inner(sel.edges.outer, sel.edges.inner);
  const auto& samples = sel.match.samples;
  sel.flatness.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) sel.flatness[i] = flatness(samples, i, N);

  std::optional<std::size_t> best[2];
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int s = side_of(sel.edges.outer, samples[i].outer_index) == Side::left ? 0 : 1;
    if (!best[s] || sel.flatness[i] < sel.flatness[*best[s]]) best[s] = i;
  }
  for (int s = 0; s < 2; ++s) {
    if (!best[s]) {
      throw Error(std::string("select_grasp_points: side empty (no outer points with ") +
                  (s == 0 ? "x < 0)" : "x >= 0)"));
    }
    const std::size_t i = *best[s];
    GraspCandidate c;
    c.side = s == 0 ? Side::left : Side::right;
    c.sample_index = i;
    c.sample = samples[i];
    c.outer = sel.edges.outer.pixel(samples[i].outer_index);
    c.inner = sel.edges.inner.pixel(samples[i].inner_index);
    c.flatness = sel.flatness[i];
    (s == 0 ? sel.left : sel.right) = c;
  }
  return sel;
}

/// Mean of the four axis neighbors of (x, y), ignoring 0 mm readings.
inline double sample_depth(const Tensor& depth_mm, Pixel p) {
  require_rank(depth_mm, 3, "sample_depth");
  const long H = static_cast<long>(depth_mm.dim(1)), W = static_cast<long>(depth_mm.dim(2));
  if (p.x < 1 || p.y < 1 || p.x >= W - 1 || p.y >= H - 1) {
    throw Error("sample_depth: pixel (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                ") is within 1 pixel of the border");
  }
  static constexpr int dx[4] = {0, 0, -1, 1};
  static constexpr int dy[4] = {-1, 1, 0, 0};
  double sum = 0.0;
  int n = 0;
  for (int k = 0; k < 4; ++k) {
    const double v = depth_mm.at(0, p.y + dy[k], p.x + dx[k]);
    if (v > 0.0) {
      sum += v;
      ++n;
    }
  }
  if (n == 0) {
    throw Error("sample_depth: no depth around (" + std::to_string(p.x) + ", " +
                std::to_string(p.y) + ")");
  }
  return sum / n;
}

struct GraspPose {
  Vec3 point;      // meters, robot frame
  Vec3 direction;  // unit
  Side side = Side::left;
  Pixel pixel;
  double depth_mm = 0.0;
  double flatness = 0.0;
};

/// The approach vector is the image direction from the matched inner point
/// to the outer point, rotated into the robot frame, then fixed at 45 deg
/// to +x.
inline GraspPose grasp_pose(const GraspCandidate& c, const Tensor& depth_mm,
                            const CameraModel& cam) {
  GraspPose g;
  g.side = c.side;
  g.pixel = c.outer;
  g.flatness = c.flatness;
  g.depth_mm = sample_depth(depth_mm, c.outer);
  g.point = to_robot_frame(c.outer.x, c.outer.y, g.depth_mm, cam);
  const Vec3 image_dir{static_cast<double>(c.outer.x - c.inner.x),
                       static_cast<double>(c.outer.y - c.inner.y), 0.0};
  g.direction = grasp_direction_45(apply(cam.rotation, image_dir));
  return g;
}

struct GraspPlan {
  GraspSelection selection;
  GraspPose left;
  GraspPose right;
};

inline GraspPlan plan_grasps(const SegMask& mask, const Tensor& depth_mm,
                             const CameraModel& cam, std::size_t N = kDefaultFlatnessWindow) {
  cam.validate();
  GraspPlan plan{select_grasp_points(mask, N), {}, {}};
  plan.left = grasp_pose(plan.selection.left, depth_mm, cam);
  plan.right = grasp_pose(plan.selection.right, depth_mm, cam);
  return plan;
}

inline std::string grasp_report(const GraspPlan& plan) {
  std::ostringstream os;
  os.precision(9);
  os << "side,u,v,depth_mm,x,y,z,dx,dy,dz,flatness\n";
  for (const GraspPose* g : {&plan.left, &plan.right}) {
    os << side_name(g->side) << ',' << g->pixel.x << ',' << g->pixel.y << ',' << g->depth_mm
       << ',' << g->point.x << ',' << g->point.y << ',' << g->point.z << ','
       << g->direction.x << ',' << g->direction.y << ',' << g->direction.z << ','
       << g->flatness << '\n';
  }
  return os.str();
}

/// Label overlay: outer edge red, inner edge green, other clothing yellow,
/// background dimmed, traced contours brightened, grasp points as 5x5 white
/// crosses.
inline Tensor grasp_overlay(const Scene& scene, const GraspPlan& plan) {
  const std::size_t H = scene.height(), W = scene.width();
  Tensor img({3, H, W});
  static constexpr double palette[4][3] = {
      {0, 0, 0}, {0.9, 0.1, 0.1}, {0.1, 0.8, 0.1}, {0.9, 0.85, 0.1}};
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const auto k = scene.label.at(y, x);
      for (std::size_t c = 0; c < 3; ++c) {
        img.at(c, y, x) = k == 0 ? 0.35 * scene.rgb.at(c, y, x) : palette[k][c];
      }
    }
  }
  auto mark = [&](const ContourPointSet& set, double r, double g, double b) {
    for (std::size_t i = 0; i < set.size(); ++i) {
      const Pixel p = set.pixel(i);
      img.at(0, p.y, p.x) = r;
      img.at(1, p.y, p.x) = g;
      img.at(2, p.y, p.x) = b;
    }
  };
  mark(plan.selection.edges.outer, 1.0, 0.5, 0.5);
  mark(plan.selection.edges.inner, 0.5, 1.0, 0.5);
  for (const GraspPose* g : {&plan.left, &plan.right}) {
    for (int d = -2; d <= 2; ++d) {
      for (const Pixel q : {Pixel{g->pixel.x + d, g->pixel.y}, Pixel{g->pixel.x, g->pixel.y + d}}) {
        if (q.x < 0 || q.y < 0 || q.x >= static_cast<int>(W) || q.y >= static_cast<int>(H)) {
          continue;
        }
        for (std::size_t c = 0; c < 3; ++c) img.at(c, q.y, q.x) = 1.0;
      }
    }
  }
  return img;
}

}  // namespace bifc
