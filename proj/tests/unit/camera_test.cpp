#include <gtest/gtest.h>

#include <cmath>

#include "bifc/grasp/camera.hpp"
#include "bifc/grasp/select.hpp"

using namespace bifc;

namespace {

Tensor depth_with_cross(double up, double down, double left, double right) {
  Tensor d({1, 5, 5}, 700.0);
  d.at(0, 1, 2) = up;
  d.at(0, 3, 2) = down;
  d.at(0, 2, 1) = left;
  d.at(0, 2, 3) = right;
  d.at(0, 2, 2) = 9999.0;  // the center itself is not sampled
  return d;
}

}  // namespace

TEST(SampleDepth, AveragesFourNeighbors) {
  EXPECT_DOUBLE_EQ(sample_depth(depth_with_cross(500, 502, 498, 500), {2, 2}), 500.0);
}

TEST(SampleDepth, SkipsMissingReadings) {
  EXPECT_DOUBLE_EQ(sample_depth(depth_with_cross(500, 0, 500, 500), {2, 2}), 500.0);
  EXPECT_DOUBLE_EQ(sample_depth(depth_with_cross(0, 0, 0, 600), {2, 2}), 600.0);
}

TEST(SampleDepth, ErrorsWithoutDepthOrAtBorder) {
  EXPECT_THROW(sample_depth(depth_with_cross(0, 0, 0, 0), {2, 2}), Error);
  EXPECT_THROW(sample_depth(Tensor({1, 5, 5}, 800.0), {0, 2}), Error);
  EXPECT_THROW(sample_depth(Tensor({1, 5, 5}, 800.0), {2, 4}), Error);
}

TEST(Camera, BackProjectionExample) {
  CameraModel cam;
  cam.fx = cam.fy = 500.0;
  cam.cx = 320.0;
  cam.cy = 240.0;
  const Vec3 p = to_robot_frame(cam.cx + 500.0, cam.cy, 1000.0, cam);
  EXPECT_DOUBLE_EQ(p.x, 1.0);
  EXPECT_DOUBLE_EQ(p.y, 0.0);
  EXPECT_DOUBLE_EQ(p.z, 1.0);
  EXPECT_THROW(to_robot_frame(0, 0, 0.0, cam), Error);
}

TEST(Camera, ExtrinsicsApply) {
  CameraModel cam = default_camera(128, 128);
  // Optical axis (camera +z) is robot +x; the camera sits at z = 1.2 m.
  const Vec3 p = to_robot_frame(cam.cx, cam.cy, 800.0, cam);
  EXPECT_NEAR(p.x, 0.8, 1e-15);
  EXPECT_NEAR(p.y, 0.0, 1e-15);
  EXPECT_NEAR(p.z, 1.2, 1e-15);
  // Image right is robot -y, image down robot -z.
  EXPECT_LT(to_robot_frame(cam.cx + 10, cam.cy, 800.0, cam).y, 0.0);
  EXPECT_LT(to_robot_frame(cam.cx, cam.cy + 10, 800.0, cam).z, 1.2);
}

TEST(GraspDirection, FortyFiveDegreeExample) {
  const Vec3 d = grasp_direction_45({0.0, 0.6, 0.8});
  EXPECT_NEAR(d.x, 0.70711, 5e-6);
  EXPECT_NEAR(d.y, 0.42426, 5e-6);
  EXPECT_NEAR(d.z, 0.56569, 5e-6);
}

TEST(GraspDirection, IdentityHoldsForAnyInput) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const Vec3 g{uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, -5, 5)};
    const Vec3 d = grasp_direction_45(g);
    EXPECT_NEAR(norm(d), 1.0, 1e-12);
    EXPECT_NEAR(d.x, std::cos(std::acos(-1.0) / 4.0), 1e-12);
    // The y-z projection keeps the input's y-z direction.
    EXPECT_NEAR(d.y * g.z - d.z * g.y, 0.0, 1e-12);
    EXPECT_GT(d.y * g.y + d.z * g.z, 0.0);
  }
  EXPECT_THROW(grasp_direction_45({1.0, 0.0, 0.0}), Error);
}

TEST(Camera, TextRoundTrip) {
  CameraModel cam = default_camera(64, 96);
  cam.translation = {0.125, -0.5, 1.2};
  EXPECT_EQ(parse_camera(format_camera(cam)), cam);
}

TEST(Camera, ParseErrors) {
  const std::string ok = "fx=1\nfy=1\ncx=0\ncy=0\nextrinsic=1 0 0 0 0 1 0 0 0 0 1 0\n";
  EXPECT_NO_THROW(parse_camera(ok));
  EXPECT_NO_THROW(parse_camera("# comment\n" + ok));
  EXPECT_THROW(parse_camera("fy=1\ncx=0\ncy=0\nextrinsic=1 0 0 0 0 1 0 0 0 0 1 0\n"), Error);
  EXPECT_THROW(parse_camera(ok + "skew=0\n"), Error);
  EXPECT_THROW(parse_camera("fx=abc\nfy=1\ncx=0\ncy=0\nextrinsic=1 0 0 0 0 1 0 0 0 0 1 0\n"), Error);
  EXPECT_THROW(parse_camera("fx=1\nfy=1\ncx=0\ncy=0\nextrinsic=1 0 0\n"), Error);
  EXPECT_THROW(parse_camera("fx 1\n"), Error);
}

TEST(Camera, ValidateRejectsBadModels) {
  CameraModel cam;
  cam.rotation = {1, 0, 0, 0, 2, 0, 0, 0, 1};
  EXPECT_THROW(cam.validate(), Error);
  CameraModel f;
  f.fx = 0.0;
  EXPECT_THROW(f.validate(), Error);
  EXPECT_NO_THROW(default_camera(16, 16).validate());
}
