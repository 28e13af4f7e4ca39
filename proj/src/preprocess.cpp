#include "emdet/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "emdet/errors.hpp"
#include "emdet/util.hpp"

namespace emdet {

void BevConfig::validate() const {
  if (cell_size <= 0) throw ConfigError("bev.cell_size must be positive");
  if (rows <= 0 || cols <= 0) throw ConfigError("bev grid dimensions must be positive");
  if (gaussian_size < 1 || gaussian_size % 2 == 0)
    throw ConfigError("bev.gaussian_size must be odd and positive");
  if (gaussian_sigma <= 0) throw ConfigError("bev.gaussian_sigma must be positive");
}

PointCloud compensate_ego_motion(const PointCloud& cloud, const PoseRecord& prev,
                                 const PoseRecord& curr) {
  prev.validate();
  curr.validate();
  const Eigen::Matrix4d M = curr.T.inverse() * prev.T;
  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const Point& p : cloud.points) {
    const Eigen::Vector4d v = M * Eigen::Vector4d(p.x, p.y, p.z, 1.0);
    out.points.push_back({static_cast<float>(v.x()), static_cast<float>(v.y()),
                          static_cast<float>(v.z()), p.intensity});
  }
  return out;
}

PointCloud remove_ground(const PointCloud& cloud, const GroundConfig& config) {
  if (config.cell_size <= 0) throw ConfigError("ground.cell_size must be positive");
  if (cloud.empty()) return {};

  auto key_of = [&](const Point& p, int& gx, int& gy) {
    gx = static_cast<int>(std::floor(p.x / config.cell_size));
    gy = static_cast<int>(std::floor(p.y / config.cell_size));
  };
  auto pack = [](int gx, int gy) {
    return (static_cast<std::int64_t>(gx) << 32) ^ (static_cast<std::uint32_t>(gy));
  };

  std::unordered_map<std::int64_t, float> min_z;
  min_z.reserve(cloud.points.size() / 4 + 1);
  for (const Point& p : cloud.points) {
    int gx, gy;
    key_of(p, gx, gy);
    auto [it, inserted] = min_z.try_emplace(pack(gx, gy), p.z);
    if (!inserted) it->second = std::min(it->second, p.z);
  }

  // The neighborhood minimum is a conservative surface estimate: points never
  // lie below the ground, and on a slope the underestimate is bounded by the
  // slope times the window size.
  const int nb = config.neighborhood;
  PointCloud out;
  out.points.reserve(cloud.points.size());
  for (const Point& p : cloud.points) {
    int gx, gy;
    key_of(p, gx, gy);
    float ground = std::numeric_limits<float>::infinity();
    for (int dy = -nb; dy <= nb; ++dy) {
      for (int dx = -nb; dx <= nb; ++dx) {
        auto it = min_z.find(pack(gx + dx, gy + dy));
        if (it != min_z.end()) ground = std::min(ground, it->second);
      }
    }
    if (p.z > ground + config.height_threshold) out.points.push_back(p);
  }
  return out;
}

VoxelizeResult voxelize_bev(const PointCloud& cloud, const BevConfig& config) {
  config.validate();
  VoxelizeResult out;
  BevMaps& maps = out.maps;
  maps.occupancy = Grid<float>(config.rows, config.cols, 0.f);
  maps.height = Grid<float>(config.rows, config.cols, 0.f);
  maps.gaussian = Grid<float>(config.rows, config.cols, 0.f);
  maps.min_z = Grid<float>(config.rows, config.cols, 0.f);
  maps.max_z = Grid<float>(config.rows, config.cols, 0.f);

  Grid<std::uint32_t> counts(config.rows, config.cols, 0);
  Grid<double> z_sum(config.rows, config.cols, 0.0);
  for (const Point& p : cloud.points) {
    int r, c;
    if (!config.cell_of(p.x, p.y, r, c)) {
      ++out.dropped_points;
      continue;
    }
    if (counts(r, c) == 0) {
      maps.min_z(r, c) = p.z;
      maps.max_z(r, c) = p.z;
    } else {
      maps.min_z(r, c) = std::min(maps.min_z(r, c), p.z);
      maps.max_z(r, c) = std::max(maps.max_z(r, c), p.z);
    }
    counts(r, c) += 1;
    z_sum(r, c) += p.z;
  }
  for (int r = 0; r < config.rows; ++r) {
    for (int c = 0; c < config.cols; ++c) {
      if (counts(r, c) > 0) {
        maps.occupancy(r, c) = 1.f;
        maps.height(r, c) = static_cast<float>(z_sum(r, c) / counts(r, c));
      }
    }
  }

  // Separable Gaussian blur of the occupancy, kernel normalized to sum 1.
  const int half = config.gaussian_size / 2;
  std::vector<double> kernel(config.gaussian_size);
  double ksum = 0;
  for (int i = -half; i <= half; ++i) {
    kernel[i + half] = std::exp(-0.5 * (i * i) / (config.gaussian_sigma * config.gaussian_sigma));
    ksum += kernel[i + half];
  }
  for (double& k : kernel) k /= ksum;

  Grid<float> tmp(config.rows, config.cols, 0.f);
  for (int r = 0; r < config.rows; ++r) {
    for (int c = 0; c < config.cols; ++c) {
      double acc = 0;
      for (int i = -half; i <= half; ++i)
        acc += kernel[i + half] * maps.occupancy.at_or(r, c + i, 0.f);
      tmp(r, c) = static_cast<float>(acc);
    }
  }
  for (int r = 0; r < config.rows; ++r) {
    for (int c = 0; c < config.cols; ++c) {
      double acc = 0;
      for (int i = -half; i <= half; ++i) acc += kernel[i + half] * tmp.at_or(r + i, c, 0.f);
      maps.gaussian(r, c) = static_cast<float>(acc);
    }
  }
  return out;
}

namespace {

void write_pgm(const std::filesystem::path& path, const Grid<float>& g, float lo, float hi) {
  std::string s = "P2\n# row-major, row 0 = min y, col 0 = min x\n";
  s += std::to_string(g.cols()) + " " + std::to_string(g.rows()) + "\n255\n";
  for (int r = 0; r < g.rows(); ++r) {
    for (int c = 0; c < g.cols(); ++c) {
      const float v = hi > lo ? (g(r, c) - lo) / (hi - lo) : 0.f;
      const int q = std::clamp(static_cast<int>(std::lround(v * 255.f)), 0, 255);
      s += std::to_string(q);
      s += c + 1 == g.cols() ? '\n' : ' ';
    }
  }
  write_text_file(path, s);
}

}  // namespace

void write_bev_maps(const std::filesystem::path& dir, const std::string& stem,
                    const BevMaps& maps) {
  std::filesystem::create_directories(dir);
  float h_lo = 0.f, h_hi = 0.f;
  for (int r = 0; r < maps.rows(); ++r)
    for (int c = 0; c < maps.cols(); ++c) {
      h_lo = std::min(h_lo, maps.height(r, c));
      h_hi = std::max(h_hi, maps.height(r, c));
    }
  write_pgm(dir / (stem + "_occupancy.pgm"), maps.occupancy, 0.f, 1.f);
  write_pgm(dir / (stem + "_height.pgm"), maps.height, h_lo, h_hi);
  write_pgm(dir / (stem + "_gaussian.pgm"), maps.gaussian, 0.f, 1.f);

  std::string csv = "row,col,occupancy,height,gaussian\n";
  for (int r = 0; r < maps.rows(); ++r) {
    for (int c = 0; c < maps.cols(); ++c) {
      if (maps.occupancy(r, c) == 0.f && maps.gaussian(r, c) == 0.f) continue;
      csv += std::to_string(r) + "," + std::to_string(c) + "," +
             format_number(maps.occupancy(r, c)) + "," + format_number(maps.height(r, c)) + "," +
             format_number(maps.gaussian(r, c)) + "\n";
    }
  }
  write_text_file(dir / (stem + "_maps.csv"), csv);
}

}  // namespace emdet
