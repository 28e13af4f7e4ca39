#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "emdet/errors.hpp"
#include "emdet/pipeline.hpp"
#include "emdet/util.hpp"

using namespace emdet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("emdet_pipe_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string small_scene_spec(double mover_speed, int frames = 6, std::uint64_t seed = 5) {
  std::string s;
  s += "cadence_hz 10\nframes " + std::to_string(frames) + "\nseed " + std::to_string(seed) +
       "\n";
  s += "jitter 0.005\nground_radius 18\nground_density 1.5\n";
  s += "object\n  category car\n  center 12 0 0.8\n  size 1.5 1.8 4.2\n  velocity " +
       format_number(mover_speed) + " 0\n  density 140\nend\n";
  s += "object\n  category other\n  center 8 5 0.9\n  size 1.8 1.5 2.0\n  density 120\nend\n";
  return s;
}

PipelineConfig small_config(const fs::path& seq_dir) {
  PipelineConfig cfg;
  cfg.input.sequence_dir = seq_dir.string();
  cfg.bev.rows = 150;
  cfg.bev.cols = 200;
  cfg.bev.x_min = -5.0;
  cfg.bev.y_min = -15.0;
  cfg.workers = 1;
  return cfg;
}

}  // namespace

TEST_CASE("config defaults carry the published parameter values") {
  const PipelineConfig cfg = parse_pipeline_config("{}");
  CHECK(cfg.bev.cell_size == 0.2);
  CHECK(cfg.bev.rows == 200);
  CHECK(cfg.bev.cols == 350);
  CHECK(cfg.search.max_distance == 10);
  CHECK(cfg.search.patch_size == 21);
  CHECK(cfg.search.weight_gauss == 0.1);
  CHECK(cfg.search.weight_occupancy == 0.8);
  CHECK(cfg.search.weight_height == 0.1);
  CHECK(cfg.lowpass_tau == 2.0);
  CHECK(cfg.inhibition.size == 15);
  CHECK(cfg.inhibition.center == 0.56);
  CHECK(cfg.inhibition.border == -0.01);
  CHECK(cfg.fusion.num_frames == 3);
}

TEST_CASE("config round trip is idempotent and hashing is stable") {
  const PipelineConfig cfg = parse_pipeline_config("{\"search\": {\"max_distance\": 7}}");
  const std::string once = serialize_pipeline_config(cfg);
  const PipelineConfig again = parse_pipeline_config(once);
  CHECK(serialize_pipeline_config(again) == once);
  CHECK(config_hash(cfg) == config_hash(again));
  CHECK(again.search.max_distance == 7);
}

TEST_CASE("unknown config keys are rejected") {
  CHECK_THROWS_WITH_AS(parse_pipeline_config("{\"bogus\": 1}"), doctest::Contains("bogus"),
                       ConfigError);
  CHECK_THROWS_WITH_AS(parse_pipeline_config("{\"search\": {\"maxdistance\": 5}}"),
                       doctest::Contains("search.maxdistance"), ConfigError);
  CHECK_THROWS_AS(parse_pipeline_config("not json"), ConfigError);
}

TEST_CASE("synth runs are reproducible byte for byte") {
  const auto spec_path = temp_dir("synth_spec") / "scene.txt";
  write_text_file(spec_path, small_scene_spec(2.0));
  const auto out1 = temp_dir("synth_a");
  const auto out2 = temp_dir("synth_b");
  run_synth(spec_path, out1, std::nullopt);
  run_synth(spec_path, out2, std::nullopt);
  for (const char* name : {"oxts.txt", "labels.txt", "meta.txt", "manifest.json"}) {
    CHECK(read_text_file(out1 / name) == read_text_file(out2 / name));
  }
  const auto a = read_binary_file(out1 / "velodyne" / "000003.bin");
  const auto b = read_binary_file(out2 / "velodyne" / "000003.bin");
  CHECK(a == b);
}

TEST_CASE("zero-jitter synth places points exactly on box faces") {
  const auto dir = temp_dir("synth_faces");
  const char* spec_text =
      "cadence_hz 10\nframes 1\nseed 2\njitter 0\nground_density 0\nground_radius 0\n"
      "object\n  center 10 0 0.75\n  size 1.5 2 4\n  yaw 0.3\n  density 200\nend\n";
  write_text_file(dir / "scene.txt", spec_text);
  run_synth(dir / "scene.txt", dir / "seq", std::nullopt);
  const FrameSequence seq = read_sequence(dir / "seq");
  const Box3D box = seq.frames[0].labels[0].box;
  const Eigen::Matrix3d R = rot_z(box.yaw);
  for (const Point& p : seq.frames[0].cloud.points) {
    const Eigen::Vector3d local = R.transpose() * (Eigen::Vector3d(p.x, p.y, p.z) - box.center);
    const double d = std::max({std::abs(local.x()) - box.l / 2, std::abs(local.y()) - box.w / 2,
                               std::abs(local.z()) - box.h / 2});
    CHECK(std::abs(d) < 1e-5);
  }
}

TEST_CASE("five movers produce five moving tracks") {
  const auto dir = temp_dir("synth_five");
  std::string spec_text = "cadence_hz 10\nframes 3\nseed 4\nground_density 0.5\n";
  for (int i = 0; i < 5; ++i) {
    spec_text += "object\n  center " + std::to_string(8 + 6 * i) + " 2 0.8\n  size 1.5 1.8 4\n";
    spec_text += "  velocity 2 0\n  density 60\nend\n";
  }
  write_text_file(dir / "scene.txt", spec_text);
  run_synth(dir / "scene.txt", dir / "seq", std::nullopt);
  const auto labels = read_labels(dir / "seq" / "labels.txt");
  std::set<int> moving_tracks;
  for (const ObjectLabel& l : labels)
    if (l.is_moving) moving_tracks.insert(l.track_id);
  CHECK(moving_tracks.size() == 5);
}

TEST_CASE("static sequence detects nothing") {
  const auto dir = temp_dir("static_run");
  std::string spec_text =
      "cadence_hz 10\nframes 4\nseed 6\njitter 0.005\nground_radius 18\nground_density 1.5\n"
      "object\n  center 12 0 0.8\n  size 1.5 1.8 4.2\n  density 140\nend\n"
      "object\n  center 8 5 0.9\n  size 1.8 1.5 2\n  density 120\nend\n";
  write_text_file(dir / "scene.txt", spec_text);
  run_synth(dir / "scene.txt", dir / "seq", std::nullopt);

  const PipelineConfig cfg = small_config(dir / "seq");
  RunDetectOptions opt;
  opt.out_dir = dir / "out";
  const RunDetectResult result = run_detect(cfg, opt);
  CHECK(result.detections.empty());
  CHECK(result.frames_processed == 4);
}

TEST_CASE("detect runs are byte-identical and a mover is found") {
  const auto dir = temp_dir("detect_run");
  write_text_file(dir / "scene.txt", small_scene_spec(4.0, 6));
  run_synth(dir / "scene.txt", dir / "seq", std::nullopt);

  const PipelineConfig cfg = small_config(dir / "seq");
  RunDetectOptions opt;
  opt.out_dir = dir / "out1";
  const RunDetectResult r1 = run_detect(cfg, opt);
  opt.out_dir = dir / "out2";
  const RunDetectResult r2 = run_detect(cfg, opt);

  CHECK(!r1.detections.empty());
  CHECK(read_text_file(dir / "out1" / "detections.txt") ==
        read_text_file(dir / "out2" / "detections.txt"));
  CHECK(read_text_file(dir / "out1" / "manifest.json") ==
        read_text_file(dir / "out2" / "manifest.json"));
  CHECK(read_text_file(dir / "out1" / "proposals.txt") ==
        read_text_file(dir / "out2" / "proposals.txt"));

  // The detected car overlaps its label in BEV.
  const auto labels = read_labels(dir / "seq" / "labels.txt");
  bool overlapped = false;
  for (const Detection& d : r1.detections) {
    for (const ObjectLabel& l : labels) {
      if (l.frame_index == d.frame_index && l.is_moving &&
          iou(d.box, l.box, IoUMode::Bev) >= 0.5)
        overlapped = true;
    }
  }
  CHECK(overlapped);
}

TEST_CASE("run_eval on detections identical to the moving labels") {
  const auto dir = temp_dir("eval_perfect");
  write_text_file(dir / "scene.txt", small_scene_spec(3.0, 4));
  run_synth(dir / "scene.txt", dir / "seq", std::nullopt);
  const auto labels = read_labels(dir / "seq" / "labels.txt");
  std::vector<Detection> dets;
  for (const ObjectLabel& l : labels) {
    if (!l.is_moving) continue;
    Detection d;
    d.frame_index = l.frame_index;
    d.category = l.category;
    d.box = l.box;
    d.speed_mps = 3.0;
    dets.push_back(d);
  }
  write_detections(dir / "dets.txt", dets);

  PipelineConfig cfg;
  const RunEvalResult r =
      run_eval(cfg, dir / "dets.txt", dir / "seq" / "labels.txt", dir / "eval");
  CHECK(r.report.total.precision == doctest::Approx(1.0));
  CHECK(r.report.total.recall == doctest::Approx(1.0));
  CHECK(r.report.total.f1 == doctest::Approx(1.0));
  CHECK(fs::exists(dir / "eval" / "metrics.csv"));
  CHECK(fs::exists(dir / "eval" / "recall_by_distance.csv"));
}

TEST_CASE("run_eval with empty detections has zero recall") {
  const auto dir = temp_dir("eval_empty");
  write_text_file(dir / "scene.txt", small_scene_spec(3.0, 3));
  run_synth(dir / "scene.txt", dir / "seq", std::nullopt);
  write_text_file(dir / "dets.txt", "");
  PipelineConfig cfg;
  const RunEvalResult r =
      run_eval(cfg, dir / "dets.txt", dir / "seq" / "labels.txt", dir / "eval");
  CHECK(r.report.total.recall == 0.0);
}

TEST_CASE("run_eval rejects detections beyond the labeled range") {
  const auto dir = temp_dir("eval_mismatch");
  write_text_file(dir / "scene.txt", small_scene_spec(3.0, 3));
  run_synth(dir / "scene.txt", dir / "seq", std::nullopt);
  Detection d;
  d.frame_index = 99;
  d.box = {{1, 1, 1}, 1, 1, 1, 0};
  write_detections(dir / "dets.txt", {d});
  PipelineConfig cfg;
  CHECK_THROWS_WITH_AS(run_eval(cfg, dir / "dets.txt", dir / "seq" / "labels.txt", dir / "eval"),
                       doctest::Contains("99"), DataError);
}

TEST_CASE("eval threshold gating") {
  const auto dir = temp_dir("eval_gate");
  write_text_file(dir / "scene.txt", small_scene_spec(3.0, 3));
  run_synth(dir / "scene.txt", dir / "seq", std::nullopt);
  write_text_file(dir / "dets.txt", "");
  PipelineConfig cfg;
  cfg.eval.min_recall = 0.5;
  const RunEvalResult r =
      run_eval(cfg, dir / "dets.txt", dir / "seq" / "labels.txt", dir / "eval");
  CHECK_FALSE(r.thresholds_met);
}
