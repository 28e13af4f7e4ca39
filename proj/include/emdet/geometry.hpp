#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace emdet {

/// One Lidar return. Coordinates in meters, intensity in [0, 1].
struct Point {
  float x = 0.f;
  float y = 0.f;
  float z = 0.f;
  float intensity = 0.f;
};

struct PointCloud {
  std::vector<Point> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Oriented 3D box: geometric center, height/width/length, yaw in [0, pi).
/// Length runs along the heading (x axis at yaw 0), width across it.
struct Box3D {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double h = 0.0;
  double w = 0.0;
  double l = 0.0;
  double yaw = 0.0;

  double z_min() const { return center.z() - h / 2.0; }
  double z_max() const { return center.z() + h / 2.0; }

  /// BEV footprint corners, counter-clockwise.
  std::array<Eigen::Vector2d, 4> bev_corners() const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double hl = l / 2.0, hw = w / 2.0;
    std::array<Eigen::Vector2d, 4> out;
    const double dx[4] = {hl, -hl, -hl, hl};
    const double dy[4] = {hw, hw, -hw, -hw};
    for (int i = 0; i < 4; ++i) {
      out[i] = {center.x() + c * dx[i] - s * dy[i], center.y() + s * dx[i] + c * dy[i]};
    }
    return out;
  }
};

/// Wrap an angle into [0, pi); rectangles are symmetric under a half turn.
inline double normalize_yaw(double yaw) {
  const double pi = M_PI;
  double a = std::fmod(yaw, pi);
  if (a < 0) a += pi;
  if (a >= pi) a -= pi;
  return a;
}

inline Eigen::Matrix2d rot2d(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix2d m;
  m << c, -s, s, c;
  return m;
}

/// Rotation about the vertical (z) axis.
inline Eigen::Matrix3d rot_z(double yaw) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m.topLeftCorner<2, 2>() = rot2d(yaw);
  return m;
}

}  // namespace emdet
