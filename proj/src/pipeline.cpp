#include "emdet/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <json.hpp>
#include <set>

#include "emdet/errors.hpp"
#include "emdet/util.hpp"

namespace emdet {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& known, const std::string& context) {
  if (!j.is_object()) throw ConfigError("config section '" + context + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key))
      throw ConfigError("unknown config key '" + context + "." + key + "'");
  }
}

template <typename T>
void load_field(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

ConnectionMode connection_from_name(const std::string& name) {
  if (name == "both") return ConnectionMode::Both;
  if (name == "horizontal") return ConnectionMode::HorizontalOnly;
  if (name == "vertical") return ConnectionMode::VerticalOnly;
  throw ConfigError("search.connection must be both|horizontal|vertical, got " + name);
}

std::string connection_name(ConnectionMode m) {
  switch (m) {
    case ConnectionMode::HorizontalOnly: return "horizontal";
    case ConnectionMode::VerticalOnly: return "vertical";
    default: return "both";
  }
}

}  // namespace

void PipelineConfig::validate() const {
  bev.validate();
  search.validate();
  inhibition.validate();
  fusion.validate();
  if (lowpass_tau <= 0) throw ConfigError("lowpass.tau must be positive");
  if (input.cadence_hz <= 0) throw ConfigError("input.cadence_hz must be positive");
  if (eval.view != "bev" && eval.view != "3d")
    throw ConfigError("eval.view must be bev or 3d (2d needs calibration, unavailable)");
  if (eval.iou_threshold <= 0 || eval.iou_threshold > 1)
    throw ConfigError("eval.iou_threshold must be in (0, 1]");
}

PipelineConfig parse_pipeline_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, {"input", "bev", "ground", "search", "lowpass", "inhibition", "fusion", "eval",
                 "output", "workers"},
             "config");
  PipelineConfig c;
  if (j.contains("input")) {
    const json& s = j["input"];
    check_keys(s, {"sequence_dir", "scans_dir", "poses_file", "labels_file", "label_format",
                   "cadence_hz"},
               "input");
    load_field(s, "sequence_dir", c.input.sequence_dir);
    load_field(s, "scans_dir", c.input.scans_dir);
    load_field(s, "poses_file", c.input.poses_file);
    load_field(s, "labels_file", c.input.labels_file);
    load_field(s, "label_format", c.input.label_format);
    load_field(s, "cadence_hz", c.input.cadence_hz);
  }
  if (j.contains("bev")) {
    const json& s = j["bev"];
    check_keys(s, {"cell_size", "rows", "cols", "x_min", "y_min", "gaussian_size",
                   "gaussian_sigma"},
               "bev");
    load_field(s, "cell_size", c.bev.cell_size);
    load_field(s, "rows", c.bev.rows);
    load_field(s, "cols", c.bev.cols);
    load_field(s, "x_min", c.bev.x_min);
    load_field(s, "y_min", c.bev.y_min);
    load_field(s, "gaussian_size", c.bev.gaussian_size);
    load_field(s, "gaussian_sigma", c.bev.gaussian_sigma);
  }
  if (j.contains("ground")) {
    const json& s = j["ground"];
    check_keys(s, {"cell_size", "height_threshold", "neighborhood"}, "ground");
    load_field(s, "cell_size", c.ground.cell_size);
    load_field(s, "height_threshold", c.ground.height_threshold);
    load_field(s, "neighborhood", c.ground.neighborhood);
  }
  if (j.contains("search")) {
    const json& s = j["search"];
    check_keys(s, {"max_distance", "patch_size", "weights", "fast_score_threshold",
                   "moving_magnitude_threshold", "connection"},
               "search");
    load_field(s, "max_distance", c.search.max_distance);
    load_field(s, "patch_size", c.search.patch_size);
    if (s.contains("weights")) {
      const auto w = s.at("weights").get<std::vector<double>>();
      if (w.size() != 3) throw ConfigError("search.weights must have exactly 3 entries");
      c.search.weight_gauss = w[0];
      c.search.weight_occupancy = w[1];
      c.search.weight_height = w[2];
    }
    load_field(s, "fast_score_threshold", c.search.fast_score_threshold);
    load_field(s, "moving_magnitude_threshold", c.search.moving_magnitude_threshold);
    if (s.contains("connection"))
      c.search.connection = connection_from_name(s.at("connection").get<std::string>());
  }
  if (j.contains("lowpass")) {
    check_keys(j["lowpass"], {"tau"}, "lowpass");
    load_field(j["lowpass"], "tau", c.lowpass_tau);
  }
  if (j.contains("inhibition")) {
    const json& s = j["inhibition"];
    check_keys(s, {"size", "center", "border"}, "inhibition");
    load_field(s, "size", c.inhibition.size);
    load_field(s, "center", c.inhibition.center);
    load_field(s, "border", c.inhibition.border);
  }
  if (j.contains("fusion")) {
    const json& s = j["fusion"];
    check_keys(s, {"num_frames", "normalize_by_interval", "cluster_max_angle_deg",
                   "cluster_max_magnitude_ratio", "min_cluster_cells", "expansion_cells"},
               "fusion");
    load_field(s, "num_frames", c.fusion.num_frames);
    load_field(s, "normalize_by_interval", c.fusion.normalize_by_interval);
    load_field(s, "cluster_max_angle_deg", c.fusion.cluster_max_angle_deg);
    load_field(s, "cluster_max_magnitude_ratio", c.fusion.cluster_max_magnitude_ratio);
    load_field(s, "min_cluster_cells", c.fusion.min_cluster_cells);
    load_field(s, "expansion_cells", c.fusion.expansion_cells);
  }
  if (j.contains("eval")) {
    const json& s = j["eval"];
    check_keys(s, {"iou_threshold", "view", "max_distance_bin", "min_frame", "min_precision",
                   "min_recall"},
               "eval");
    load_field(s, "iou_threshold", c.eval.iou_threshold);
    load_field(s, "view", c.eval.view);
    load_field(s, "max_distance_bin", c.eval.max_distance_bin);
    load_field(s, "min_frame", c.eval.min_frame);
    load_field(s, "min_precision", c.eval.min_precision);
    load_field(s, "min_recall", c.eval.min_recall);
  }
  if (j.contains("output")) {
    const json& s = j["output"];
    check_keys(s, {"write_fields", "write_flow", "write_maps"}, "output");
    load_field(s, "write_fields", c.output.write_fields);
    load_field(s, "write_flow", c.output.write_flow);
    load_field(s, "write_maps", c.output.write_maps);
  }
  load_field(j, "workers", c.workers);
  c.validate();
  return c;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  return parse_pipeline_config(read_text_file(path));
}

std::string serialize_pipeline_config(const PipelineConfig& c) {
  json j;
  j["input"] = {{"sequence_dir", c.input.sequence_dir},
                {"scans_dir", c.input.scans_dir},
                {"poses_file", c.input.poses_file},
                {"labels_file", c.input.labels_file},
                {"label_format", c.input.label_format},
                {"cadence_hz", c.input.cadence_hz}};
  j["bev"] = {{"cell_size", c.bev.cell_size},
              {"rows", c.bev.rows},
              {"cols", c.bev.cols},
              {"x_min", c.bev.x_min},
              {"y_min", c.bev.y_min},
              {"gaussian_size", c.bev.gaussian_size},
              {"gaussian_sigma", c.bev.gaussian_sigma}};
  j["ground"] = {{"cell_size", c.ground.cell_size},
                 {"height_threshold", c.ground.height_threshold},
                 {"neighborhood", c.ground.neighborhood}};
  j["search"] = {{"max_distance", c.search.max_distance},
                 {"patch_size", c.search.patch_size},
                 {"weights", {c.search.weight_gauss, c.search.weight_occupancy,
                              c.search.weight_height}},
                 {"fast_score_threshold", c.search.fast_score_threshold},
                 {"moving_magnitude_threshold", c.search.moving_magnitude_threshold},
                 {"connection", connection_name(c.search.connection)}};
  j["lowpass"] = {{"tau", c.lowpass_tau}};
  j["inhibition"] = {{"size", c.inhibition.size},
                     {"center", c.inhibition.center},
                     {"border", c.inhibition.border}};
  j["fusion"] = {{"num_frames", c.fusion.num_frames},
                 {"normalize_by_interval", c.fusion.normalize_by_interval},
                 {"cluster_max_angle_deg", c.fusion.cluster_max_angle_deg},
                 {"cluster_max_magnitude_ratio", c.fusion.cluster_max_magnitude_ratio},
                 {"min_cluster_cells", c.fusion.min_cluster_cells},
                 {"expansion_cells", c.fusion.expansion_cells}};
  j["eval"] = {{"iou_threshold", c.eval.iou_threshold},
               {"view", c.eval.view},
               {"max_distance_bin", c.eval.max_distance_bin},
               {"min_frame", c.eval.min_frame},
               {"min_precision", c.eval.min_precision},
               {"min_recall", c.eval.min_recall}};
  j["output"] = {{"write_fields", c.output.write_fields},
                 {"write_flow", c.output.write_flow},
                 {"write_maps", c.output.write_maps}};
  j["workers"] = c.workers;
  return j.dump(2) + "\n";
}

std::string config_hash(const PipelineConfig& config) {
  return to_hex(fnv1a(serialize_pipeline_config(config)));
}

// ---------------------------------------------------------------------------
// detect

namespace {

FrameSequence load_input(const PipelineConfig& config) {
  const InputConfig& in = config.input;
  if (!in.sequence_dir.empty()) return read_sequence(in.sequence_dir);
  if (in.scans_dir.empty() || in.poses_file.empty())
    throw ConfigError("input needs either sequence_dir or scans_dir + poses_file");
  namespace fs = std::filesystem;
  if (!fs::exists(in.scans_dir)) throw DataError("missing input path: " + in.scans_dir);
  if (!fs::exists(in.poses_file)) throw DataError("missing input path: " + in.poses_file);

  FrameSequence seq;
  seq.cadence_hz = in.cadence_hz;
  std::vector<fs::path> scans;
  for (const auto& e : fs::directory_iterator(in.scans_dir))
    if (e.path().extension() == ".bin") scans.push_back(e.path());
  std::sort(scans.begin(), scans.end());
  const auto poses = read_pose_file(in.poses_file, in.cadence_hz);
  if (poses.size() != scans.size())
    throw DataError("scan/pose count mismatch: " + std::to_string(scans.size()) + " vs " +
                    std::to_string(poses.size()));
  std::vector<ObjectLabel> labels;
  if (!in.labels_file.empty()) {
    if (in.label_format == "kitti-tracking")
      labels = read_labels_kitti_tracking(in.labels_file, &poses, 0.5, in.cadence_hz);
    else
      labels = read_labels(in.labels_file);
  }
  for (std::size_t i = 0; i < scans.size(); ++i) {
    Frame f;
    f.cloud = read_point_cloud_file(scans[i]).cloud;
    f.pose = poses[i];
    for (const ObjectLabel& l : labels)
      if (l.frame_index == static_cast<int>(i)) f.labels.push_back(l);
    seq.frames.push_back(std::move(f));
  }
  seq.validate();
  return seq;
}

struct FrameRecord {
  int frame = 0;
  std::uint64_t occupied = 0;
  std::uint64_t rough_moving = 0;
  std::uint64_t fast_evals = 0;
  std::uint64_t exact_evals = 0;
  std::uint64_t moving_cells = 0;
  std::uint64_t clusters = 0;
  std::uint64_t detections = 0;
};

}  // namespace

RunDetectResult run_detect(const PipelineConfig& config, const FrameSequence& seq,
                           const RunDetectOptions& options) {
  config.validate();
  namespace fs = std::filesystem;
  const bool to_disk = options.write_outputs;
  if (to_disk) fs::create_directories(options.out_dir);

  FusionConfig fusion = config.fusion;
  if (options.fusion_k) fusion.num_frames = *options.fusion_k;
  fusion.validate();

  const int last = static_cast<int>(seq.frames.size()) - 1;
  const int begin = std::max(0, options.frame_begin);
  const int end = options.frame_end < 0 ? last : std::min(options.frame_end, last);

  RunDetectResult result;
  result.hash = config_hash(config);

  // Ground removal and current-frame voxelization are cached per frame; the
  // compensated previous maps depend on the pair and are rebuilt per k.
  std::vector<PointCloud> nonground(seq.frames.size());
  std::vector<char> nonground_ready(seq.frames.size(), 0);
  auto nonground_of = [&](int idx) -> const PointCloud& {
    if (!nonground_ready[idx]) {
      nonground[idx] = remove_ground(seq.frames[idx].cloud, config.ground);
      nonground_ready[idx] = 1;
    }
    return nonground[idx];
  };

  std::vector<FrameRecord> records;
  std::vector<Proposal> all_proposals;
  std::string timings = "frame,stage,milliseconds\n";
  using clock = std::chrono::steady_clock;

  for (int t = begin; t <= end; ++t) {
    const auto t_start = clock::now();
    FrameRecord rec;
    rec.frame = t;

    const VoxelizeResult current = voxelize_bev(nonground_of(t), config.bev);
    for (float v : current.maps.occupancy.values()) rec.occupied += v == 1.f ? 1 : 0;

    const int k_max = std::min(fusion.num_frames, t);
    std::vector<MotionField> fields;
    DetectStats frame_stats;
    for (int k = 1; k <= k_max; ++k) {
      const PointCloud compensated =
          compensate_ego_motion(nonground_of(t - k), seq.frames[t - k].pose, seq.frames[t].pose);
      const VoxelizeResult previous = voxelize_bev(compensated, config.bev);
      LowPassState state;
      state.tau = config.lowpass_tau;
      DetectOptions dopt;
      dopt.workers = config.workers;
      dopt.exhaustive = options.exhaustive;
      fields.push_back(detect_motion(current.maps, previous.maps, state, config.search,
                                     config.inhibition, dopt, &frame_stats));
    }

    std::vector<Detection> frame_dets;
    if (!fields.empty()) {
      std::vector<const MotionField*> field_ptrs;
      for (const MotionField& f : fields) field_ptrs.push_back(&f);
      MotionField fused = fuse_multiframe(field_ptrs, fusion);
      for (std::uint8_t m : fused.moving.values()) rec.moving_cells += m;

      const auto clusters = cluster_moving_cells(fused, fusion);
      rec.clusters = clusters.size();
      for (const Cluster& cl : clusters) {
        auto prop = extract_proposal_points(cl, nonground_of(t), config.bev,
                                            fusion.expansion_cells, seq.cadence_hz, t);
        if (!prop) {
          ++result.dropped_proposals;
          continue;
        }
        const CenterEstimate center = estimate_center(prop->points);
        const FittedBox fitted = fit_box(prop->points, center);
        Detection det;
        det.frame_index = t;
        det.category = classify_by_size(fitted.box);
        det.box = fitted.box;
        det.speed_mps = prop->velocity_mps.norm();
        frame_dets.push_back(det);
        all_proposals.push_back(std::move(*prop));
      }

      if (to_disk && config.output.write_fields) {
        char name[48];
        std::snprintf(name, sizeof(name), "field_%06d.csv", t);
        write_motion_field_csv(options.out_dir / name, fused);
      }
      if (to_disk && config.output.write_flow) {
        char name[48];
        std::snprintf(name, sizeof(name), "flow_%06d.ppm", t);
        write_flow_image(options.out_dir / name, fused, config.search.max_distance);
      }
      if (options.capture_fields) {
        result.fused_fields.push_back(std::move(fused));
        result.fused_frame_indices.push_back(t);
      }
    }
    if (to_disk && config.output.write_maps) {
      char stem[48];
      std::snprintf(stem, sizeof(stem), "bev_%06d", t);
      write_bev_maps(options.out_dir / "maps", stem, current.maps);
    }

    rec.fast_evals = frame_stats.fast_score_evals;
    rec.exact_evals = frame_stats.exact_energy_evals;
    rec.rough_moving = frame_stats.rough_moving_cells;
    rec.detections = frame_dets.size();
    records.push_back(rec);

    result.stats.fast_score_evals += frame_stats.fast_score_evals;
    result.stats.exact_energy_evals += frame_stats.exact_energy_evals;
    result.stats.rough_moving_cells += frame_stats.rough_moving_cells;
    result.stats.degenerate_cells += frame_stats.degenerate_cells;
    result.detections.insert(result.detections.end(), frame_dets.begin(), frame_dets.end());
    ++result.frames_processed;

    const double ms =
        std::chrono::duration<double, std::milli>(clock::now() - t_start).count();
    timings += std::to_string(t) + ",frame," + format_number(ms) + "\n";
  }

  if (to_disk) {
    write_detections(options.out_dir / "detections.txt", result.detections);
    write_proposals(options.out_dir / "proposals.txt", options.out_dir / "proposals.bin",
                    all_proposals);

    json manifest;
    manifest["config_hash"] = result.hash;
    manifest["exhaustive"] = options.exhaustive;
    manifest["fusion_k"] = fusion.num_frames;
    manifest["frame_begin"] = begin;
    manifest["frame_end"] = end;
    json frames = json::array();
    for (const FrameRecord& r : records) {
      frames.push_back({{"frame", r.frame},
                        {"occupied_cells", r.occupied},
                        {"rough_moving_cells", r.rough_moving},
                        {"fast_score_evals", r.fast_evals},
                        {"exact_energy_evals", r.exact_evals},
                        {"moving_cells", r.moving_cells},
                        {"clusters", r.clusters},
                        {"detections", r.detections}});
    }
    manifest["frames"] = frames;
    manifest["totals"] = {
        {"fast_score_evals", result.stats.fast_score_evals},
        {"exact_energy_evals", result.stats.exact_energy_evals},
        {"energy_evals", result.stats.fast_score_evals + result.stats.exact_energy_evals},
        {"rough_moving_cells", result.stats.rough_moving_cells},
        {"degenerate_cells", result.stats.degenerate_cells},
        {"detections", result.detections.size()},
        {"dropped_proposals", result.dropped_proposals}};
    write_text_file(options.out_dir / "manifest.json", manifest.dump(2) + "\n");
    write_text_file(options.out_dir / "effective_config.json",
                    serialize_pipeline_config(config));
    // Wall times vary run to run, so they live outside the manifest.
    write_text_file(options.out_dir / "timings.csv", timings);
  }
  return result;
}

RunDetectResult run_detect(const PipelineConfig& config, const RunDetectOptions& options) {
  return run_detect(config, load_input(config), options);
}

// ---------------------------------------------------------------------------
// eval

RunEvalResult run_eval(const PipelineConfig& config, const std::filesystem::path& detections,
                       const std::filesystem::path& labels_path,
                       const std::filesystem::path& out_dir) {
  config.validate();
  const auto dets = read_detections(detections);
  const auto labels = read_labels(labels_path);

  int max_label_frame = -1;
  for (const ObjectLabel& l : labels) max_label_frame = std::max(max_label_frame, l.frame_index);
  for (const Detection& d : dets) {
    if (d.frame_index > max_label_frame)
      throw DataError("detections reference frame " + std::to_string(d.frame_index) +
                      " beyond the last labeled frame " + std::to_string(max_label_frame));
  }

  const View view = config.eval.view == "3d" ? View::ThreeD : View::Bev;
  std::vector<MatchResult> matches;
  for (int f = config.eval.min_frame; f <= max_label_frame; ++f) {
    std::vector<Detection> fd;
    std::vector<ObjectLabel> fg;
    for (const Detection& d : dets)
      if (d.frame_index == f) fd.push_back(d);
    for (const ObjectLabel& l : labels)
      if (l.frame_index == f) fg.push_back(l);
    MatchResult m = match_detections(fd, fg, config.eval.iou_threshold, view);
    m.frame_index = f;
    matches.push_back(std::move(m));
  }

  RunEvalResult result;
  result.report = compute_metrics(matches, config.eval.max_distance_bin);
  result.thresholds_met = result.report.total.precision >= config.eval.min_precision &&
                          result.report.total.recall >= config.eval.min_recall;

  std::filesystem::create_directories(out_dir);
  write_metrics_csv(out_dir / "metrics.csv", result.report);
  write_recall_curve_csv(out_dir / "recall_by_distance.csv", result.report);
  std::cout << format_metrics_table(result.report,
                                    "motion detection metrics (" + config.eval.view + " view, iou >= " +
                                        format_number(config.eval.iou_threshold) + ")");
  return result;
}

// ---------------------------------------------------------------------------
// synth

RunSynthResult run_synth(const std::filesystem::path& spec_path,
                         const std::filesystem::path& out_dir,
                         std::optional<std::uint64_t> seed_override) {
  SceneSpec spec = parse_scene_spec_file(spec_path);
  if (seed_override) spec.seed = *seed_override;
  const SyntheticScene scene = generate_synthetic_scene(spec);
  write_sequence(out_dir, scene.sequence);

  json manifest;
  manifest["seed"] = spec.seed;
  manifest["frames"] = scene.sequence.frames.size();
  manifest["truncation_warnings"] = scene.truncation_warnings;
  manifest["cadence_hz"] = spec.cadence_hz;
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");

  RunSynthResult result;
  result.frames = scene.sequence.frames.size();
  result.truncation_warnings = scene.truncation_warnings;
  result.seed = spec.seed;
  return result;
}

}  // namespace emdet
