#pragma once

#include <filesystem>

#include "emdet/geometry.hpp"
#include "emdet/grid.hpp"
#include "emdet/scene_io.hpp"

namespace emdet {

/// BEV grid geometry. Row i covers y in [y_min + i*cell, +cell), column j
/// covers x likewise; the sensor sits at the lateral center of the grid.
struct BevConfig {
  double cell_size = 0.2;  // meters
  int rows = 200;          // lateral extent (y)
  int cols = 350;          // forward extent (x)
  double x_min = -10.0;
  double y_min = -20.0;
  int gaussian_size = 5;  // odd
  double gaussian_sigma = 1.0;

  void validate() const;

  bool cell_of(double x, double y, int& r, int& c) const {
    const int cc = static_cast<int>(std::floor((x - x_min) / cell_size));
    const int rr = static_cast<int>(std::floor((y - y_min) / cell_size));
    r = rr;
    c = cc;
    return rr >= 0 && rr < rows && cc >= 0 && cc < cols;
  }
  double cell_center_x(int c) const { return x_min + (c + 0.5) * cell_size; }
  double cell_center_y(int r) const { return y_min + (r + 0.5) * cell_size; }
};

/// Co-registered BEV maps: binarized occupancy, mean point height per
/// occupied cell (0 elsewhere), and a normalized Gaussian blur of the
/// occupancy. Per-cell z extrema are kept alongside for diagnostics; nothing
/// downstream consumes them.
struct BevMaps {
  Grid<float> occupancy;  // exactly 0 or 1
  Grid<float> height;
  Grid<float> gaussian;
  Grid<float> min_z;
  Grid<float> max_z;

  int rows() const { return occupancy.rows(); }
  int cols() const { return occupancy.cols(); }
};

/// Re-expresses `cloud` (captured at the `prev` pose) in the `curr` sensor
/// frame: p -> T_curr^-1 * T_prev * p. Intensity and point count are
/// preserved.
PointCloud compensate_ego_motion(const PointCloud& cloud, const PoseRecord& prev,
                                 const PoseRecord& curr);

struct GroundConfig {
  double cell_size = 0.8;        // ground-estimation grid, meters
  double height_threshold = 0.25;  // points this close to the surface are ground
  int neighborhood = 1;          // cells; local-minimum window radius
};

/// Grid-based ground removal: per-cell lowest z, neighborhood minimum as the
/// local surface estimate, points within height_threshold of it removed.
PointCloud remove_ground(const PointCloud& cloud, const GroundConfig& config);

struct VoxelizeResult {
  BevMaps maps;
  std::size_t dropped_points = 0;  // outside the grid extent
};

/// Expects a ground-removed, ego-compensated cloud.
VoxelizeResult voxelize_bev(const PointCloud& cloud, const BevConfig& config);

/// Debug/golden-test exports: three PGM images plus one CSV, row-major.
void write_bev_maps(const std::filesystem::path& dir, const std::string& stem,
                    const BevMaps& maps);

}  // namespace emdet
