#include "emdet/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "emdet/errors.hpp"
#include "emdet/util.hpp"

namespace emdet {

void FusionConfig::validate() const {
  if (num_frames < 1) throw ConfigError("fusion.num_frames must be >= 1");
  if (cluster_max_angle_deg <= 0 || cluster_max_angle_deg > 180)
    throw ConfigError("fusion.cluster_max_angle_deg must be in (0, 180]");
  if (cluster_max_magnitude_ratio <= 0 || cluster_max_magnitude_ratio > 1)
    throw ConfigError("fusion.cluster_max_magnitude_ratio must be in (0, 1]");
  if (min_cluster_cells < 1) throw ConfigError("fusion.min_cluster_cells must be >= 1");
  if (expansion_cells < 0) throw ConfigError("fusion.expansion_cells must be >= 0");
}

MotionField fuse_multiframe(const std::vector<const MotionField*>& fields,
                            const FusionConfig& config) {
  config.validate();
  if (fields.empty()) throw std::invalid_argument("fuse_multiframe: no fields");
  const int rows = fields[0]->rows(), cols = fields[0]->cols();
  for (const MotionField* f : fields) {
    if (f->rows() != rows || f->cols() != cols)
      throw std::invalid_argument("fuse_multiframe: field grid shapes do not match");
  }

  MotionField out = *fields[0];
  if (fields.size() == 1) return out;  // K = 1 is the identity

  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      double best_mag = -1.0;
      double best_vx = 0.0, best_vy = 0.0, best_score = 0.0;
      bool any = false;
      for (std::size_t i = 0; i < fields.size(); ++i) {
        const MotionField& f = *fields[i];
        if (!f.moving(r, c)) continue;  // suppressed cells carry no vector
        const double k = config.normalize_by_interval ? static_cast<double>(i + 1) : 1.0;
        const double vx = f.vx(r, c) / k;
        const double vy = f.vy(r, c) / k;
        const double mag = std::hypot(vx, vy);
        if (mag > best_mag) {  // earlier (smaller) interval wins ties
          best_mag = mag;
          best_vx = vx;
          best_vy = vy;
          best_score = f.score(r, c) / k;
          any = true;
        }
      }
      out.moving(r, c) = any ? 1 : 0;
      out.vx(r, c) = static_cast<float>(any ? best_vx : 0.0);
      out.vy(r, c) = static_cast<float>(any ? best_vy : 0.0);
      out.score(r, c) = static_cast<float>(any ? best_score : 0.0);
    }
  }
  return out;
}

std::vector<Cluster> cluster_moving_cells(const MotionField& field, const FusionConfig& config) {
  config.validate();
  const int rows = field.rows(), cols = field.cols();
  const double cos_limit = std::cos(config.cluster_max_angle_deg * M_PI / 180.0);

  auto similar = [&](int r1, int c1, int r2, int c2) {
    const Eigen::Vector2d a(field.vx(r1, c1), field.vy(r1, c1));
    const Eigen::Vector2d b(field.vx(r2, c2), field.vy(r2, c2));
    const double na = a.norm(), nb = b.norm();
    if (na == 0 || nb == 0) return false;
    if (a.dot(b) < cos_limit * na * nb) return false;
    const double rel = std::abs(na - nb) / std::max(na, nb);
    return rel <= config.cluster_max_magnitude_ratio;
  };

  Grid<int> component(rows, cols, -1);
  std::vector<Cluster> clusters;
  std::vector<std::pair<int, int>> stack;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!field.moving(r, c) || component(r, c) >= 0) continue;
      const int id = static_cast<int>(clusters.size());
      Cluster cluster;
      stack.push_back({r, c});
      component(r, c) = id;
      Eigen::Vector2d vec_sum(0, 0);
      while (!stack.empty()) {
        auto [cr, cc] = stack.back();
        stack.pop_back();
        cluster.cells.push_back({cr, cc});
        vec_sum += Eigen::Vector2d(field.vx(cr, cc), field.vy(cr, cc));
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dy == 0 && dx == 0) continue;
            const int nr = cr + dy, nc = cc + dx;
            if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) continue;
            if (!field.moving(nr, nc) || component(nr, nc) >= 0) continue;
            if (!similar(cr, cc, nr, nc)) continue;
            component(nr, nc) = id;
            stack.push_back({nr, nc});
          }
        }
      }
      cluster.mean_vector = vec_sum / static_cast<double>(cluster.cells.size());
      clusters.push_back(std::move(cluster));
    }
  }

  std::vector<Cluster> kept;
  for (Cluster& cl : clusters) {
    if (static_cast<int>(cl.cells.size()) < config.min_cluster_cells) continue;
    std::sort(cl.cells.begin(), cl.cells.end());
    cl.min_row = cl.max_row = cl.cells.front().first;
    cl.min_col = cl.max_col = cl.cells.front().second;
    for (auto [r, c] : cl.cells) {
      cl.min_row = std::min(cl.min_row, r);
      cl.max_row = std::max(cl.max_row, r);
      cl.min_col = std::min(cl.min_col, c);
      cl.max_col = std::max(cl.max_col, c);
    }
    kept.push_back(std::move(cl));
  }
  std::sort(kept.begin(), kept.end(), [](const Cluster& a, const Cluster& b) {
    return std::tie(a.min_row, a.min_col) < std::tie(b.min_row, b.min_col);
  });
  return kept;
}

std::optional<Proposal> extract_proposal_points(const Cluster& cluster, const PointCloud& cloud,
                                                const BevConfig& config, int expansion,
                                                double cadence_hz, int frame_index) {
  if (cadence_hz <= 0) throw ConfigError("cadence_hz must be positive");
  std::unordered_set<std::int64_t> footprint;
  auto pack = [&](int r, int c) { return static_cast<std::int64_t>(r) * config.cols + c; };
  for (auto [r, c] : cluster.cells) {
    for (int dy = -expansion; dy <= expansion; ++dy) {
      for (int dx = -expansion; dx <= expansion; ++dx) {
        const int nr = r + dy, nc = c + dx;
        if (nr >= 0 && nr < config.rows && nc >= 0 && nc < config.cols)
          footprint.insert(pack(nr, nc));
      }
    }
  }

  Proposal prop;
  prop.cluster = cluster;
  prop.frame_index = frame_index;
  prop.velocity_mps = cluster.mean_vector * config.cell_size * cadence_hz;
  for (const Point& p : cloud.points) {
    int r, c;
    if (!config.cell_of(p.x, p.y, r, c)) continue;
    if (footprint.count(pack(r, c))) prop.points.points.push_back(p);
  }
  if (prop.points.empty()) return std::nullopt;
  return prop;
}

void write_proposals(const std::filesystem::path& text_path,
                     const std::filesystem::path& blob_path,
                     const std::vector<Proposal>& proposals) {
  std::string text = "# frame cluster vx_mps vy_mps points blob_offset\n";
  std::vector<std::uint8_t> blob;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    const Proposal& p = proposals[i];
    text += std::to_string(p.frame_index) + " " + std::to_string(i) + " " +
            format_number(p.velocity_mps.x()) + " " + format_number(p.velocity_mps.y()) + " " +
            std::to_string(p.points.size()) + " " + std::to_string(blob.size()) + "\n";
    const auto bytes = write_point_cloud(p.points);
    blob.insert(blob.end(), bytes.begin(), bytes.end());
  }
  write_text_file(text_path, text);
  write_binary_file(blob_path, blob.data(), blob.size());
}

}  // namespace emdet
