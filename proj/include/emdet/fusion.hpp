#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <optional>
#include <vector>

#include "emdet/emd.hpp"
#include "emdet/preprocess.hpp"

namespace emdet {

struct FusionConfig {
  int num_frames = 3;  // K; fields are computed against frames t-1 .. t-K
  bool normalize_by_interval = true;
  // Clustering: an 8-neighbor edge is accepted only when the two vectors
  // agree within these bounds.
  double cluster_max_angle_deg = 45.0;
  double cluster_max_magnitude_ratio = 0.5;
  int min_cluster_cells = 2;
  int expansion_cells = 1;  // proposal footprint dilation

  void validate() const;
};

/// Max-pool style fusion over per-interval fields: each cell keeps the
/// candidate with the largest interval-normalized magnitude, expressed in
/// cells per frame; the fused moving mask is the union of the per-interval
/// masks. fields[k-1] must have been computed against frame t-k.
MotionField fuse_multiframe(const std::vector<const MotionField*>& fields,
                            const FusionConfig& config);

struct Cluster {
  std::vector<std::pair<int, int>> cells;  // (row, col), sorted
  Eigen::Vector2d mean_vector = {0, 0};    // cells per frame
  int min_row = 0, max_row = 0, min_col = 0, max_col = 0;
};

/// Connected components over the fused moving mask; 8-connectivity gated by
/// vector similarity. Components below the minimum size are dropped as
/// noise. Output sorted by (min_row, min_col).
std::vector<Cluster> cluster_moving_cells(const MotionField& field, const FusionConfig& config);

struct Proposal {
  PointCloud points;
  Cluster cluster;
  Eigen::Vector2d velocity_mps = {0, 0};
  int frame_index = 0;
};

/// Gathers every cloud point whose BEV cell lies in the cluster footprint
/// dilated by `expansion` cells. Returns nothing when no point falls inside
/// (the caller counts those drops).
std::optional<Proposal> extract_proposal_points(const Cluster& cluster, const PointCloud& cloud,
                                                const BevConfig& config, int expansion,
                                                double cadence_hz, int frame_index);

/// Text index (frame, cluster id, velocity, point count, blob offset) plus a
/// sidecar binary blob in the 16-byte scan record format.
void write_proposals(const std::filesystem::path& text_path,
                     const std::filesystem::path& blob_path,
                     const std::vector<Proposal>& proposals);

}  // namespace emdet
