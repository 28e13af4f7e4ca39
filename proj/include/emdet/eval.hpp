#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "emdet/box_fit.hpp"
#include "emdet/scene_io.hpp"

namespace emdet {

enum class View { TwoD, Bev, ThreeD };
std::string view_name(View v);

struct GtOutcome {
  int track_id = 0;
  Category category = Category::Other;
  bool matched = false;
  double iou = 0.0;
  double distance = 0.0;  // BEV distance from the sensor to the GT center
};

struct DetOutcome {
  std::size_t index = 0;
  Category category = Category::Other;
  bool matched = false;
  double iou = 0.0;
};

struct MatchResult {
  int frame_index = 0;
  int tp = 0, fp = 0, fn = 0;
  std::vector<GtOutcome> gts;  // moving ground truth only
  std::vector<DetOutcome> dets;
};

/// Greedy matching in descending IoU order; only moving ground truth counts
/// toward recall, so a detection sitting on a stationary object is a false
/// positive. Ties in IoU break on detection index, then ground-truth index.
MatchResult match_detections(const std::vector<Detection>& dets,
                             const std::vector<ObjectLabel>& gts, double iou_threshold,
                             View view);

struct MetricsBlock {
  std::uint64_t tp = 0, fp = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  bool degenerate = false;  // a zero denominator was reported as 0
};

struct DistanceBin {
  double upper = 0.0;  // meters; infinity for the open last bin
  std::uint64_t gt_count = 0;
  std::uint64_t matched = 0;
  double recall = 0.0;
};

struct MetricsReport {
  MetricsBlock total;
  std::map<Category, MetricsBlock> per_category;
  std::vector<DistanceBin> recall_curve;  // bins without ground truth are absent
};

/// Pools counts across frames. Distance bins are 10 m wide up to
/// `max_distance_bin` plus one open bin.
MetricsReport compute_metrics(const std::vector<MatchResult>& matches,
                              double max_distance_bin = 60.0);

/// Recall within each distance bin (upper bounds, ascending, open last bin
/// appended). Bins with no ground truth are omitted from the result.
std::vector<DistanceBin> recall_by_distance(const std::vector<MatchResult>& matches,
                                            const std::vector<double>& bin_uppers);

std::string format_metrics_table(const MetricsReport& report, const std::string& title);
void write_metrics_csv(const std::filesystem::path& path, const MetricsReport& report);
void write_recall_curve_csv(const std::filesystem::path& path, const MetricsReport& report);

}  // namespace emdet
