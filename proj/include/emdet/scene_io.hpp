#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emdet/geometry.hpp"

namespace emdet {

/// Rigid pose of the sensor: T maps Lidar-frame coordinates into a fixed
/// Earth-anchored metric frame. The first record of a sequence defines the
/// anchor, so the first pose of a sequence is the identity.
struct PoseRecord {
  double timestamp = 0.0;  // seconds
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();

  /// Throws if the rotation block is not orthonormal (1e-6), det != +1, or
  /// the last row is not (0,0,0,1).
  void validate() const;
};

enum class Category : std::uint8_t { Car, Pedestrian, Cyclist, Other };

std::string category_name(Category c);
Category category_from_name(std::string_view name);

struct ObjectLabel {
  int frame_index = 0;
  Category category = Category::Other;
  Box3D box;  // in the Lidar frame of its own frame_index
  int track_id = 0;
  bool is_moving = false;
};

/// One detector output record. Same coordinate conventions as ObjectLabel.
struct Detection {
  int frame_index = 0;
  Category category = Category::Other;
  Box3D box;
  double speed_mps = 0.0;
};

struct Frame {
  PointCloud cloud;
  PoseRecord pose;
  std::vector<ObjectLabel> labels;
};

struct FrameSequence {
  std::vector<Frame> frames;
  double cadence_hz = 10.0;

  /// Timestamps strictly increasing, one valid pose per frame.
  void validate() const;
};

// ---------------------------------------------------------------------------
// Scan files: consecutive little-endian float32 quadruples (x, y, z, intensity)

struct ScanReadResult {
  PointCloud cloud;
  std::size_t dropped_records = 0;  // records rejected for non-finite values
};

/// Throws DataError (naming the byte offset) if the blob length is not a
/// multiple of 16. Non-finite records are dropped and counted, intensity is
/// clamped to [0, 1].
ScanReadResult read_point_cloud(std::span<const std::uint8_t> blob);
ScanReadResult read_point_cloud_file(const std::filesystem::path& path);

std::vector<std::uint8_t> write_point_cloud(const PointCloud& cloud);
void write_point_cloud_file(const std::filesystem::path& path, const PointCloud& cloud);

// ---------------------------------------------------------------------------
// Pose files: one whitespace-separated record per line, first six fields
// lat(deg) lon(deg) alt(m) roll pitch yaw(rad), KITTI oxts layout.

struct GeodeticRef {
  double lat_deg = 0.0;
  double lon_deg = 0.0;
  double alt = 0.0;
  double roll = 0.0;
  double pitch = 0.0;
  double yaw = 0.0;
};

GeodeticRef parse_oxts_line(std::string_view line);

/// Mercator-style local projection anchored at `origin` (scale cos(lat0)).
/// Returns the pose of `rec` relative to the origin pose, so
/// read_pose(origin, origin) is the identity.
PoseRecord read_pose(const GeodeticRef& rec, const GeodeticRef& origin);

/// Inverse of the projection used by read_pose: encodes a metric pose
/// (relative to `origin`) back into an oxts-style record.
GeodeticRef oxts_from_pose(const Eigen::Matrix4d& T, const GeodeticRef& origin);

std::string format_oxts_line(const GeodeticRef& rec);

/// Reads a whole pose file; the first line anchors the sequence. Timestamps
/// are assigned as line_index / cadence_hz.
std::vector<PoseRecord> read_pose_file(const std::filesystem::path& path, double cadence_hz);

// ---------------------------------------------------------------------------
// Label / detection files (line-based text, documented in the README)

std::vector<ObjectLabel> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const std::vector<ObjectLabel>& labels);
std::string format_label_line(const ObjectLabel& l);

/// KITTI tracking label converter. Boxes must already be expressed in the
/// Lidar frame (the camera->Lidar calib transform is out of scope here).
/// is_moving is derived from per-track global center displacement when poses
/// are given, otherwise every object is marked moving.
std::vector<ObjectLabel> read_labels_kitti_tracking(const std::filesystem::path& path,
                                                    const std::vector<PoseRecord>* poses,
                                                    double moving_speed_threshold_mps = 0.5,
                                                    double cadence_hz = 10.0);

std::vector<Detection> read_detections(const std::filesystem::path& path);
void write_detections(const std::filesystem::path& path, const std::vector<Detection>& dets);
std::string format_detection_line(const Detection& d);

// ---------------------------------------------------------------------------
// Synthetic scenes

struct SceneObjectSpec {
  Box3D box;                                   // world frame at t = 0
  Eigen::Vector2d velocity = {0.0, 0.0};       // m/s in the world frame
  double density = 80.0;                       // points per square meter of face
  Category category = Category::Other;
};

struct EgoSpec {
  Eigen::Vector2d start = {0.0, 0.0};
  double start_yaw = 0.0;
  Eigen::Vector2d velocity = {0.0, 0.0};  // m/s, world frame
  double yaw_rate = 0.0;                  // rad/s
  double sensor_height = 1.73;            // meters above ground
};

struct SceneSpec {
  double cadence_hz = 10.0;
  int frames = 10;
  std::uint64_t seed = 1;
  double jitter = 0.0;          // per-axis Gaussian point noise, meters
  double ground_radius = 35.0;  // sampled ground disc around the sensor
  double ground_density = 2.0;  // points per square meter
  // Objects whose center leaves this sensor-frame extent are truncated.
  double extent_x_min = -10.0, extent_x_max = 60.0;
  double extent_y_min = -20.0, extent_y_max = 20.0;
  EgoSpec ego;
  std::vector<SceneObjectSpec> objects;
};

/// Parses the scene description format (key/value lines plus repeated
/// `object ... end` blocks, see README). Throws ConfigError with the line
/// number on schema violations.
SceneSpec parse_scene_spec(std::string_view text);
SceneSpec parse_scene_spec_file(const std::filesystem::path& path);

struct SyntheticScene {
  FrameSequence sequence;
  std::size_t truncation_warnings = 0;  // object-frames skipped outside the extent
};

/// Samples box faces visible from the sensor plus a ground disc, moves
/// objects and ego per spec, and emits exact labels and poses.
SyntheticScene generate_synthetic_scene(const SceneSpec& spec);

/// Sequence directory layout: velodyne/NNNNNN.bin, oxts.txt, labels.txt,
/// meta.txt (cadence_hz, frames).
void write_sequence(const std::filesystem::path& dir, const FrameSequence& seq);
FrameSequence read_sequence(const std::filesystem::path& dir);

}  // namespace emdet
