#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "bifc/diffcore/tensor.hpp"

namespace bifc {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 v) { return {s * v.x, s * v.y, s * v.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline double norm(Vec3 v) { return std::sqrt(dot(v, v)); }

/// Row-major 3x3 matrix.
using Mat3 = std::array<double, 9>;

inline Vec3 apply(const Mat3& m, Vec3 v) {
  return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
          m[6] * v.x + m[7] * v.y + m[8] * v.z};
}

inline constexpr Mat3 kIdentity3{1, 0, 0, 0, 1, 0, 0, 0, 1};

/// Pinhole intrinsics plus the rigid camera -> robot transform.
struct CameraModel {
  double fx = 500.0, fy = 500.0;  // pixels
  double cx = 63.5, cy = 63.5;    // pixels
  Mat3 rotation = kIdentity3;     // camera -> robot
  Vec3 translation{};             // meters, robot frame

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
      throw Error("camera: focal lengths must be positive");
    }
    // R^T R must be the identity.
    double err = 0.0;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += rotation[k * 3 + i] * rotation[k * 3 + j];
        err += (s - (i == j ? 1.0 : 0.0)) * (s - (i == j ? 1.0 : 0.0));
      }
    }
    if (!(std::sqrt(err) < 1e-9)) {
      throw Error("camera: extrinsic rotation is not orthonormal");
    }
  }

  friend bool operator==(const CameraModel&, const CameraModel&) = default;
};

/// Camera looking along the robot's +x axis: image right is robot -y and
/// image down is robot -z.
inline CameraModel default_camera(std::size_t height, std::size_t width) {
  CameraModel cam;
  cam.fx = cam.fy = 1.2 * static_cast<double>(width);
  cam.cx = (static_cast<double>(width) - 1.0) / 2.0;
  cam.cy = (static_cast<double>(height) - 1.0) / 2.0;
  cam.rotation = {0, 0, 1, -1, 0, 0, 0, -1, 0};
  cam.translation = {0.0, 0.0, 1.2};
  return cam;
}

/// Back-projects pixel (u, v) at `depth_mm` and maps it into the robot frame.
inline Vec3 to_robot_frame(double u, double v, double depth_mm, const CameraModel& cam) {
  if (!(depth_mm > 0.0)) {
    throw Error("to_robot_frame: depth must be positive, got " + std::to_string(depth_mm));
  }
  const double z = depth_mm / 1000.0;
  const Vec3 p{(u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z};
  return apply(cam.rotation, p) + cam.translation;
}

/// Keeps the y-z direction of `g` and tilts it to exactly 45 degrees from +x.
inline Vec3 grasp_direction_45(Vec3 g) {
  const double yz = std::hypot(g.y, g.z);
  if (!(yz > 0.0)) {
    throw Error("grasp_direction_45: y-z projection is zero, direction undefined");
  }
  const double h = std::sqrt(0.5);
  return {h, h * g.y / yz, h * g.z / yz};
}

inline std::string format_camera(const CameraModel& cam) {
  std::ostringstream os;
  os.precision(17);
  os << "fx=" << cam.fx << "\nfy=" << cam.fy << "\ncx=" << cam.cx << "\ncy=" << cam.cy
     << "\nextrinsic=";
  const double t[3] = {cam.translation.x, cam.translation.y, cam.translation.z};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) os << cam.rotation[r * 3 + c] << ' ';
    os << t[r] << (r < 2 ? " " : "\n");
  }
  return os.str();
}

/// Parses `key=value` lines (fx, fy, cx, cy, extrinsic = 12 numbers of the
/// row-major 3x4 [R | t]). Blank lines and '#' comments are ignored.
inline CameraModel parse_camera(const std::string& text, const std::string& origin = "camera") {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(origin + ":" + std::to_string(lineno) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto number = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw Error(origin + ": missing key '" + key + "'");
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument(key);
      return v;
    } catch (const std::logic_error&) {
      throw Error(origin + ": key '" + std::string(key) + "' is not a number");
    }
  };
  CameraModel cam;
  cam.fx = number("fx");
  cam.fy = number("fy");
  cam.cx = number("cx");
  cam.cy = number("cy");
  auto it = kv.find("extrinsic");
  if (it == kv.end()) throw Error(origin + ": missing key 'extrinsic'");
  std::string values = it->second;
  for (char& c : values) {
    if (c == ',') c = ' ';
  }
  std::istringstream es(values);
  std::array<double, 12> e{};
  for (double& v : e) {
    if (!(es >> v)) throw Error(origin + ": 'extrinsic' needs 12 numbers");
  }
  std::string extra;
  if (es >> extra) throw Error(origin + ": 'extrinsic' has more than 12 numbers");
  for (const auto& [key, _] : kv) {
    if (key != "fx" && key != "fy" && key != "cx" && key != "cy" && key != "extrinsic") {
      throw Error(origin + ": unknown key '" + key + "'");
    }
  }
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) cam.rotation[r * 3 + c] = e[r * 4 + c];
  }
  cam.translation = {e[3], e[7], e[11]};
  cam.validate();
  return cam;
}

inline CameraModel load_camera(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("camera: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_camera(ss.str(), path);
}

}  // namespace bifc
