#pragma once

#include "emdet/geometry.hpp"
#include "emdet/scene_io.hpp"

namespace emdet {

/// Density-robust initial box center: try the horizontal frame rotated by
/// each candidate angle, score each by the squared sum of the axis-projection
/// ranges, keep the smallest, and take the range midpoints back-rotated into
/// the sensor frame. The vertical coordinate is the plain height mean.
struct CenterEstimate {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double alpha = 0.0;                 // chosen frame angle, one of {0, pi/6, pi/3}
  double range_x = 0.0, range_y = 0.0;  // extents in the chosen frame
};

/// Throws on an empty cloud; a single point estimates itself with alpha 0.
CenterEstimate estimate_center(const PointCloud& points);

struct FittedBox {
  Box3D box;
  bool degenerate = false;  // collinear input, width clamped
};

/// Oriented box around the points: the center estimate's angle refined by a
/// +-15 degree search (1 degree steps) minimizing the enclosing BEV
/// rectangle area; extents from the rotated min/max.
FittedBox fit_box(const PointCloud& points, const CenterEstimate& center);

enum class IoUMode { Bev, Volume3D };

/// Rotated-rectangle intersection over union (BEV), optionally extended by
/// the vertical overlap (3D). Always in [0, 1], symmetric.
double iou(const Box3D& a, const Box3D& b, IoUMode mode);

/// Size-prior nearest-match heuristic so synthetic runs can exercise
/// per-category metrics; not a learned classifier.
Category classify_by_size(const Box3D& box);

}  // namespace emdet
