#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "emdet/emd.hpp"
#include "emdet/eval.hpp"
#include "emdet/fusion.hpp"
#include "emdet/preprocess.hpp"
#include "emdet/scene_io.hpp"

namespace emdet {

struct InputConfig {
  std::string sequence_dir;  // directory in the write_sequence layout
  // Alternative explicit layout (KITTI-style); used when sequence_dir is empty.
  std::string scans_dir;
  std::string poses_file;
  std::string labels_file;
  std::string label_format = "emdet";  // or "kitti-tracking"
  double cadence_hz = 10.0;
};

struct OutputConfig {
  bool write_fields = false;  // per-frame motion field CSVs
  bool write_flow = false;    // per-frame PPM flow images
  bool write_maps = false;    // per-frame BEV map exports
};

struct EvalConfig {
  double iou_threshold = 0.5;
  std::string view = "bev";  // "bev" or "3d" ("2d" needs calibration, unavailable)
  double max_distance_bin = 60.0;
  int min_frame = 0;  // frames before this are not evaluated
  double min_precision = 0.0;  // CI gate; eval exits nonzero below these
  double min_recall = 0.0;
};

struct PipelineConfig {
  InputConfig input;
  BevConfig bev;
  GroundConfig ground;
  SearchConfig search;
  double lowpass_tau = 2.0;
  InhibitionKernel inhibition;
  FusionConfig fusion;
  EvalConfig eval;
  OutputConfig output;
  int workers = 0;  // 0 = all available cores

  void validate() const;
};

/// Strict loader: unknown keys anywhere are an error. Defaults fill every
/// missing key, so an empty JSON object is a valid config.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
PipelineConfig parse_pipeline_config(const std::string& json_text);

/// Canonical serialized form (every key materialized, sorted); loading the
/// output yields the same bytes again.
std::string serialize_pipeline_config(const PipelineConfig& config);
std::string config_hash(const PipelineConfig& config);

struct RunDetectOptions {
  std::filesystem::path out_dir;
  int frame_begin = 0;
  int frame_end = -1;  // inclusive; -1 = last frame
  bool exhaustive = false;
  std::optional<int> fusion_k;     // overrides fusion.num_frames
  bool capture_fields = false;     // keep fused fields in the result
  bool write_outputs = true;       // detections/manifest/proposals on disk
};

struct RunDetectResult {
  DetectStats stats;
  std::vector<Detection> detections;
  std::size_t frames_processed = 0;
  std::size_t dropped_proposals = 0;
  std::string hash;
  std::vector<MotionField> fused_fields;       // when capture_fields
  std::vector<int> fused_frame_indices;
};

/// Full pipeline per frame: ego-compensate each history frame into the
/// current one, voxelize, detect per interval, fuse, cluster, extract
/// proposals, fit boxes, write detections plus a deterministic manifest
/// (wall times go to a separate timings file).
RunDetectResult run_detect(const PipelineConfig& config, const FrameSequence& seq,
                           const RunDetectOptions& options);
RunDetectResult run_detect(const PipelineConfig& config, const RunDetectOptions& options);

struct RunEvalResult {
  MetricsReport report;
  bool thresholds_met = true;
};

RunEvalResult run_eval(const PipelineConfig& config, const std::filesystem::path& detections,
                       const std::filesystem::path& labels, const std::filesystem::path& out_dir);

struct RunSynthResult {
  std::size_t frames = 0;
  std::size_t truncation_warnings = 0;
  std::uint64_t seed = 0;
};

RunSynthResult run_synth(const std::filesystem::path& spec_path,
                         const std::filesystem::path& out_dir,
                         std::optional<std::uint64_t> seed_override);

}  // namespace emdet
