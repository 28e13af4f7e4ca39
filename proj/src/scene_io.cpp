#include "emdet/scene_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <random>
#include <sstream>

#include "emdet/errors.hpp"
#include "emdet/util.hpp"

namespace emdet {

namespace {

constexpr double kEarthRadius = 6378137.0;

// Fixed geodetic anchor used when a synthetic sequence is serialized; any
// anchor works since poses are relative to the first record.
const GeodeticRef kSynthGeoRef{37.4, -122.1, 5.0, 0.0, 0.0, 0.0};

Eigen::Matrix3d rotation_rpy(double roll, double pitch, double yaw) {
  Eigen::Matrix3d rx = Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()).toRotationMatrix();
  Eigen::Matrix3d ry = Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()).toRotationMatrix();
  Eigen::Matrix3d rz = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  return rz * ry * rx;
}

Eigen::Matrix4d world_pose(const GeodeticRef& rec, double scale) {
  const double lat = rec.lat_deg * M_PI / 180.0;
  const double lon = rec.lon_deg * M_PI / 180.0;
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  T.topLeftCorner<3, 3>() = rotation_rpy(rec.roll, rec.pitch, rec.yaw);
  T(0, 3) = scale * kEarthRadius * lon;
  T(1, 3) = scale * kEarthRadius * std::log(std::tan(M_PI / 4.0 + lat / 2.0));
  T(2, 3) = rec.alt;
  return T;
}

}  // namespace

void PoseRecord::validate() const {
  const Eigen::Matrix3d R = T.topLeftCorner<3, 3>();
  if ((R * R.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6)
    throw DataError("pose rotation block is not orthonormal");
  if (std::abs(R.determinant() - 1.0) > 1e-6)
    throw DataError("pose rotation determinant is not +1");
  Eigen::RowVector4d last = T.row(3);
  if ((last - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 0)
    throw DataError("pose last row must be (0,0,0,1)");
}

std::string category_name(Category c) {
  switch (c) {
    case Category::Car: return "car";
    case Category::Pedestrian: return "pedestrian";
    case Category::Cyclist: return "cyclist";
    default: return "other";
  }
}

Category category_from_name(std::string_view name) {
  if (name == "car" || name == "Car" || name == "Van" || name == "Truck") return Category::Car;
  if (name == "pedestrian" || name == "Pedestrian") return Category::Pedestrian;
  if (name == "cyclist" || name == "Cyclist") return Category::Cyclist;
  return Category::Other;
}

void FrameSequence::validate() const {
  double prev = -std::numeric_limits<double>::infinity();
  for (const Frame& f : frames) {
    if (!(f.pose.timestamp > prev))
      throw DataError("frame timestamps must be strictly increasing");
    prev = f.pose.timestamp;
    f.pose.validate();
  }
}

// ---------------------------------------------------------------------------
// Scan files

ScanReadResult read_point_cloud(std::span<const std::uint8_t> blob) {
  if (blob.size() % 16 != 0) {
    throw DataError("scan blob malformed: trailing partial record at byte offset " +
                    std::to_string((blob.size() / 16) * 16));
  }
  ScanReadResult out;
  out.cloud.points.reserve(blob.size() / 16);
  for (std::size_t off = 0; off < blob.size(); off += 16) {
    float v[4];
    std::memcpy(v, blob.data() + off, 16);
    if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || !std::isfinite(v[2]) ||
        !std::isfinite(v[3])) {
      ++out.dropped_records;
      continue;
    }
    Point p{v[0], v[1], v[2], std::clamp(v[3], 0.f, 1.f)};
    out.cloud.points.push_back(p);
  }
  return out;
}

ScanReadResult read_point_cloud_file(const std::filesystem::path& path) {
  const auto bytes = read_binary_file(path);
  return read_point_cloud(bytes);
}

std::vector<std::uint8_t> write_point_cloud(const PointCloud& cloud) {
  std::vector<std::uint8_t> out(cloud.points.size() * 16);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Point& p = cloud.points[i];
    float v[4] = {p.x, p.y, p.z, p.intensity};
    std::memcpy(out.data() + i * 16, v, 16);
  }
  return out;
}

void write_point_cloud_file(const std::filesystem::path& path, const PointCloud& cloud) {
  const auto bytes = write_point_cloud(cloud);
  write_binary_file(path, bytes.data(), bytes.size());
}

// ---------------------------------------------------------------------------
// Pose files

GeodeticRef parse_oxts_line(std::string_view line) {
  const auto tokens = split_ws(line);
  if (tokens.size() < 6)
    throw DataError("pose record needs at least 6 fields, got " + std::to_string(tokens.size()));
  double v[6];
  for (int i = 0; i < 6; ++i) {
    if (!parse_double(tokens[i], v[i]))
      throw DataError("pose record field " + std::to_string(i) + " is not a number: " +
                      std::string(tokens[i]));
  }
  if (v[0] < -90.0 || v[0] > 90.0)
    throw DataError("latitude outside [-90, 90]: " + std::string(tokens[0]));
  return GeodeticRef{v[0], v[1], v[2], v[3], v[4], v[5]};
}

PoseRecord read_pose(const GeodeticRef& rec, const GeodeticRef& origin) {
  const double scale = std::cos(origin.lat_deg * M_PI / 180.0);
  const Eigen::Matrix4d Wo = world_pose(origin, scale);
  const Eigen::Matrix4d Wr = world_pose(rec, scale);
  // Relative form: differencing the projected positions before rotating
  // avoids cancellation at planet-scale coordinates, and an origin record
  // maps exactly to the identity.
  const Eigen::Matrix3d Ro = Wo.topLeftCorner<3, 3>();
  PoseRecord out;
  out.T.topLeftCorner<3, 3>() = Ro.transpose() * Wr.topLeftCorner<3, 3>();
  out.T.topRightCorner<3, 1>() =
      Ro.transpose() * (Wr.topRightCorner<3, 1>() - Wo.topRightCorner<3, 1>());
  return out;
}

GeodeticRef oxts_from_pose(const Eigen::Matrix4d& T, const GeodeticRef& origin) {
  const double scale = std::cos(origin.lat_deg * M_PI / 180.0);
  const Eigen::Matrix4d W = world_pose(origin, scale) * T;
  GeodeticRef out;
  out.lon_deg = W(0, 3) / (scale * kEarthRadius) * 180.0 / M_PI;
  out.lat_deg = (2.0 * std::atan(std::exp(W(1, 3) / (scale * kEarthRadius))) - M_PI / 2.0) *
                180.0 / M_PI;
  out.alt = W(2, 3);
  const Eigen::Matrix3d R = W.topLeftCorner<3, 3>();
  out.yaw = std::atan2(R(1, 0), R(0, 0));
  out.pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
  out.roll = std::atan2(R(2, 1), R(2, 2));
  return out;
}

std::string format_oxts_line(const GeodeticRef& rec) {
  std::string s;
  s += format_number(rec.lat_deg);
  s += ' ';
  s += format_number(rec.lon_deg);
  s += ' ';
  s += format_number(rec.alt);
  s += ' ';
  s += format_number(rec.roll);
  s += ' ';
  s += format_number(rec.pitch);
  s += ' ';
  s += format_number(rec.yaw);
  return s;
}

std::vector<PoseRecord> read_pose_file(const std::filesystem::path& path, double cadence_hz) {
  if (cadence_hz <= 0) throw ConfigError("cadence_hz must be positive");
  const std::string text = read_text_file(path);
  std::vector<PoseRecord> out;
  std::istringstream ss(text);
  std::string line;
  std::optional<GeodeticRef> origin;
  std::size_t index = 0;
  while (std::getline(ss, line)) {
    if (line.empty() || line[0] == '#') continue;
    const GeodeticRef rec = parse_oxts_line(line);
    if (!origin) origin = rec;
    PoseRecord pose = read_pose(rec, *origin);
    pose.timestamp = static_cast<double>(index) / cadence_hz;
    out.push_back(pose);
    ++index;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Labels and detections

std::string format_label_line(const ObjectLabel& l) {
  std::string s;
  s += std::to_string(l.frame_index);
  s += ' ';
  s += std::to_string(l.track_id);
  s += ' ';
  s += category_name(l.category);
  for (double v : {l.box.h, l.box.w, l.box.l, l.box.center.x(), l.box.center.y(),
                   l.box.center.z(), l.box.yaw}) {
    s += ' ';
    s += format_number(v);
  }
  s += ' ';
  s += l.is_moving ? '1' : '0';
  return s;
}

std::vector<ObjectLabel> read_labels(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::vector<ObjectLabel> out;
  std::istringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto tokens = split_ws(line);
    if (tokens.size() != 11)
      throw DataError("label line " + std::to_string(lineno) + ": expected 11 fields, got " +
                      std::to_string(tokens.size()));
    ObjectLabel l;
    long long frame = 0, track = 0, moving = 0;
    double v[7];
    bool ok = parse_int(tokens[0], frame) && parse_int(tokens[1], track);
    for (int i = 0; i < 7 && ok; ++i) ok = parse_double(tokens[3 + i], v[i]);
    ok = ok && parse_int(tokens[10], moving);
    if (!ok) throw DataError("label line " + std::to_string(lineno) + ": unparsable field");
    l.frame_index = static_cast<int>(frame);
    l.track_id = static_cast<int>(track);
    l.category = category_from_name(tokens[2]);
    l.box.h = v[0];
    l.box.w = v[1];
    l.box.l = v[2];
    l.box.center = {v[3], v[4], v[5]};
    l.box.yaw = v[6];
    l.is_moving = moving != 0;
    if (l.box.h <= 0 || l.box.w <= 0 || l.box.l <= 0)
      throw DataError("label line " + std::to_string(lineno) + ": box dimensions must be positive");
    out.push_back(l);
  }
  return out;
}

void write_labels(const std::filesystem::path& path, const std::vector<ObjectLabel>& labels) {
  std::string text;
  for (const auto& l : labels) {
    text += format_label_line(l);
    text += '\n';
  }
  write_text_file(path, text);
}

std::vector<ObjectLabel> read_labels_kitti_tracking(const std::filesystem::path& path,
                                                    const std::vector<PoseRecord>* poses,
                                                    double moving_speed_threshold_mps,
                                                    double cadence_hz) {
  const std::string text = read_text_file(path);
  std::vector<ObjectLabel> out;
  std::istringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tokens = split_ws(line);
    if (tokens.size() < 17)
      throw DataError("kitti tracking line " + std::to_string(lineno) + ": expected >= 17 fields");
    if (tokens[2] == "DontCare") continue;
    ObjectLabel l;
    long long frame = 0, track = 0;
    double v[7];
    bool ok = parse_int(tokens[0], frame) && parse_int(tokens[1], track);
    for (int i = 0; i < 7 && ok; ++i) ok = parse_double(tokens[10 + i], v[i]);
    if (!ok) throw DataError("kitti tracking line " + std::to_string(lineno) + ": unparsable field");
    l.frame_index = static_cast<int>(frame);
    l.track_id = static_cast<int>(track);
    l.category = category_from_name(tokens[2]);
    l.box.h = v[0];
    l.box.w = v[1];
    l.box.l = v[2];
    l.box.center = {v[3], v[4], v[5]};
    l.box.yaw = v[6];
    l.is_moving = true;
    out.push_back(l);
  }
  if (poses != nullptr) {
    // Per-track world-frame displacement decides is_moving.
    std::map<int, std::vector<std::size_t>> tracks;
    for (std::size_t i = 0; i < out.size(); ++i) tracks[out[i].track_id].push_back(i);
    for (auto& [track, indices] : tracks) {
      std::sort(indices.begin(), indices.end(), [&](std::size_t a, std::size_t b) {
        return out[a].frame_index < out[b].frame_index;
      });
      double max_speed = 0.0;
      for (std::size_t i = 1; i < indices.size(); ++i) {
        const ObjectLabel& a = out[indices[i - 1]];
        const ObjectLabel& b = out[indices[i]];
        if (a.frame_index < 0 || b.frame_index >= static_cast<int>(poses->size())) continue;
        Eigen::Vector4d wa = (*poses)[a.frame_index].T * a.box.center.homogeneous();
        Eigen::Vector4d wb = (*poses)[b.frame_index].T * b.box.center.homogeneous();
        const double dt = (b.frame_index - a.frame_index) / cadence_hz;
        if (dt <= 0) continue;
        max_speed = std::max(max_speed, (wb.head<3>() - wa.head<3>()).norm() / dt);
      }
      const bool moving = max_speed > moving_speed_threshold_mps;
      for (std::size_t i : indices) out[i].is_moving = moving;
    }
  }
  return out;
}

std::string format_detection_line(const Detection& d) {
  std::string s;
  s += std::to_string(d.frame_index);
  s += ' ';
  s += category_name(d.category);
  for (double v : {d.box.center.x(), d.box.center.y(), d.box.center.z(), d.box.h, d.box.w,
                   d.box.l, d.box.yaw, d.speed_mps}) {
    s += ' ';
    s += format_number(v);
  }
  return s;
}

std::vector<Detection> read_detections(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::vector<Detection> out;
  std::istringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto tokens = split_ws(line);
    if (tokens.size() != 10)
      throw DataError("detection line " + std::to_string(lineno) + ": expected 10 fields, got " +
                      std::to_string(tokens.size()));
    Detection d;
    long long frame = 0;
    double v[8];
    bool ok = parse_int(tokens[0], frame);
    for (int i = 0; i < 8 && ok; ++i) ok = parse_double(tokens[2 + i], v[i]);
    if (!ok) throw DataError("detection line " + std::to_string(lineno) + ": unparsable field");
    d.frame_index = static_cast<int>(frame);
    d.category = category_from_name(tokens[1]);
    d.box.center = {v[0], v[1], v[2]};
    d.box.h = v[3];
    d.box.w = v[4];
    d.box.l = v[5];
    d.box.yaw = v[6];
    d.speed_mps = v[7];
    out.push_back(d);
  }
  return out;
}

void write_detections(const std::filesystem::path& path, const std::vector<Detection>& dets) {
  std::string text;
  for (const auto& d : dets) {
    text += format_detection_line(d);
    text += '\n';
  }
  write_text_file(path, text);
}

// ---------------------------------------------------------------------------
// Scene spec parsing

namespace {

[[noreturn]] void spec_error(std::size_t lineno, const std::string& msg) {
  throw ConfigError("scene spec line " + std::to_string(lineno) + ": " + msg);
}

double need_double(const std::vector<std::string_view>& t, std::size_t i, std::size_t lineno) {
  double v;
  if (i >= t.size() || !parse_double(t[i], v)) spec_error(lineno, "expected a number");
  return v;
}

}  // namespace

SceneSpec parse_scene_spec(std::string_view text) {
  SceneSpec spec;
  std::istringstream ss{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  bool in_object = false;
  SceneObjectSpec obj;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto tokens = split_ws(line);
    if (tokens.empty()) continue;
    const std::string_view key = tokens[0];
    if (in_object) {
      if (key == "end") {
        if (obj.box.h <= 0 || obj.box.w <= 0 || obj.box.l <= 0)
          spec_error(lineno, "object needs a positive size");
        if (obj.density <= 0) spec_error(lineno, "object density must be positive");
        spec.objects.push_back(obj);
        in_object = false;
      } else if (key == "category") {
        if (tokens.size() != 2) spec_error(lineno, "category takes one value");
        obj.category = category_from_name(tokens[1]);
      } else if (key == "center") {
        obj.box.center = {need_double(tokens, 1, lineno), need_double(tokens, 2, lineno),
                          need_double(tokens, 3, lineno)};
      } else if (key == "size") {
        obj.box.h = need_double(tokens, 1, lineno);
        obj.box.w = need_double(tokens, 2, lineno);
        obj.box.l = need_double(tokens, 3, lineno);
      } else if (key == "yaw") {
        obj.box.yaw = need_double(tokens, 1, lineno);
      } else if (key == "velocity") {
        obj.velocity = {need_double(tokens, 1, lineno), need_double(tokens, 2, lineno)};
      } else if (key == "density") {
        obj.density = need_double(tokens, 1, lineno);
      } else {
        spec_error(lineno, "unknown object key: " + std::string(key));
      }
      continue;
    }
    if (key == "object") {
      in_object = true;
      obj = SceneObjectSpec{};
    } else if (key == "cadence_hz") {
      spec.cadence_hz = need_double(tokens, 1, lineno);
    } else if (key == "frames") {
      spec.frames = static_cast<int>(need_double(tokens, 1, lineno));
    } else if (key == "seed") {
      spec.seed = static_cast<std::uint64_t>(need_double(tokens, 1, lineno));
    } else if (key == "jitter") {
      spec.jitter = need_double(tokens, 1, lineno);
    } else if (key == "ground_radius") {
      spec.ground_radius = need_double(tokens, 1, lineno);
    } else if (key == "ground_density") {
      spec.ground_density = need_double(tokens, 1, lineno);
    } else if (key == "extent") {
      spec.extent_x_min = need_double(tokens, 1, lineno);
      spec.extent_x_max = need_double(tokens, 2, lineno);
      spec.extent_y_min = need_double(tokens, 3, lineno);
      spec.extent_y_max = need_double(tokens, 4, lineno);
    } else if (key == "ego_start") {
      spec.ego.start = {need_double(tokens, 1, lineno), need_double(tokens, 2, lineno)};
    } else if (key == "ego_yaw") {
      spec.ego.start_yaw = need_double(tokens, 1, lineno);
    } else if (key == "ego_velocity") {
      spec.ego.velocity = {need_double(tokens, 1, lineno), need_double(tokens, 2, lineno)};
    } else if (key == "ego_yaw_rate") {
      spec.ego.yaw_rate = need_double(tokens, 1, lineno);
    } else if (key == "sensor_height") {
      spec.ego.sensor_height = need_double(tokens, 1, lineno);
    } else {
      spec_error(lineno, "unknown key: " + std::string(key));
    }
  }
  if (in_object) throw ConfigError("scene spec: unterminated object block");
  if (spec.frames < 1) throw ConfigError("scene spec: frames must be >= 1");
  if (spec.cadence_hz <= 0) throw ConfigError("scene spec: cadence_hz must be positive");
  if (spec.ground_density < 0 || spec.ground_radius < 0)
    throw ConfigError("scene spec: ground parameters must be non-negative");
  return spec;
}

SceneSpec parse_scene_spec_file(const std::filesystem::path& path) {
  return parse_scene_spec(read_text_file(path));
}

// ---------------------------------------------------------------------------
// Synthetic generation

namespace {

struct FaceSampler {
  Eigen::Vector3d origin;  // face corner
  Eigen::Vector3d e1, e2;  // spanning edges
  Eigen::Vector3d normal;
  double area;
};

std::vector<FaceSampler> box_faces(const Box3D& box) {
  const Eigen::Vector3d ex = rot_z(box.yaw) * Eigen::Vector3d::UnitX();
  const Eigen::Vector3d ey = rot_z(box.yaw) * Eigen::Vector3d::UnitY();
  const Eigen::Vector3d ez = Eigen::Vector3d::UnitZ();
  const Eigen::Vector3d c = box.center;
  std::vector<FaceSampler> faces;
  // four side faces
  faces.push_back({c + ex * (box.l / 2) - ey * (box.w / 2) - ez * (box.h / 2), ey * box.w,
                   ez * box.h, ex, box.w * box.h});
  faces.push_back({c - ex * (box.l / 2) - ey * (box.w / 2) - ez * (box.h / 2), ey * box.w,
                   ez * box.h, -ex, box.w * box.h});
  faces.push_back({c + ey * (box.w / 2) - ex * (box.l / 2) - ez * (box.h / 2), ex * box.l,
                   ez * box.h, ey, box.l * box.h});
  faces.push_back({c - ey * (box.w / 2) - ex * (box.l / 2) - ez * (box.h / 2), ex * box.l,
                   ez * box.h, -ey, box.l * box.h});
  // top face
  faces.push_back({c + ez * (box.h / 2) - ex * (box.l / 2) - ey * (box.w / 2), ex * box.l,
                   ey * box.w, ez, box.l * box.w});
  return faces;
}

}  // namespace

SyntheticScene generate_synthetic_scene(const SceneSpec& spec) {
  for (const auto& o : spec.objects) {
    if (o.density <= 0) throw ConfigError("scene object density must be positive");
    if (o.box.h <= 0 || o.box.w <= 0 || o.box.l <= 0)
      throw ConfigError("scene object size must be positive");
  }
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sigma = spec.jitter;
  auto jitter3 = [&](Eigen::Vector3d p) {
    if (sigma > 0) p += Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng)) * sigma;
    return p;
  };

  SyntheticScene out;
  out.sequence.cadence_hz = spec.cadence_hz;
  for (int t = 0; t < spec.frames; ++t) {
    const double time = t / spec.cadence_hz;
    const double ego_yaw = spec.ego.start_yaw + spec.ego.yaw_rate * time;
    const Eigen::Vector2d ego_xy = spec.ego.start + spec.ego.velocity * time;
    const Eigen::Vector3d sensor_w(ego_xy.x(), ego_xy.y(), spec.ego.sensor_height);

    Eigen::Matrix4d W = Eigen::Matrix4d::Identity();
    W.topLeftCorner<3, 3>() = rot_z(ego_yaw);
    W.topRightCorner<3, 1>() = sensor_w;

    Frame frame;
    frame.pose.timestamp = time;

    std::vector<Eigen::Vector3d> world_points;
    // Ground disc around the sensor.
    const std::size_t n_ground = static_cast<std::size_t>(
        std::llround(M_PI * spec.ground_radius * spec.ground_radius * spec.ground_density));
    for (std::size_t i = 0; i < n_ground; ++i) {
      const double r = spec.ground_radius * std::sqrt(uni(rng));
      const double a = 2.0 * M_PI * uni(rng);
      world_points.push_back(
          jitter3({ego_xy.x() + r * std::cos(a), ego_xy.y() + r * std::sin(a), 0.0}));
    }

    for (std::size_t oi = 0; oi < spec.objects.size(); ++oi) {
      const SceneObjectSpec& o = spec.objects[oi];
      Box3D box = o.box;
      box.center.head<2>() += o.velocity * time;

      // Truncate objects whose center leaves the configured sensor-frame extent.
      const Eigen::Vector3d c_sensor =
          (W.inverse() * box.center.homogeneous()).head<3>();
      if (c_sensor.x() < spec.extent_x_min || c_sensor.x() > spec.extent_x_max ||
          c_sensor.y() < spec.extent_y_min || c_sensor.y() > spec.extent_y_max) {
        ++out.truncation_warnings;
        continue;
      }

      for (const FaceSampler& face : box_faces(box)) {
        const Eigen::Vector3d face_center = face.origin + 0.5 * face.e1 + 0.5 * face.e2;
        if (face.normal.dot(sensor_w - face_center) <= 0) continue;
        const std::size_t n = static_cast<std::size_t>(std::llround(face.area * o.density));
        for (std::size_t i = 0; i < n; ++i) {
          world_points.push_back(jitter3(face.origin + uni(rng) * face.e1 + uni(rng) * face.e2));
        }
      }

      ObjectLabel label;
      label.frame_index = t;
      label.track_id = static_cast<int>(oi);
      label.category = o.category;
      label.box = box;
      label.box.center = c_sensor;
      label.box.yaw = normalize_yaw(box.yaw - ego_yaw);
      label.is_moving = o.velocity.norm() > 0;
      frame.labels.push_back(label);
    }

    const Eigen::Matrix4d W_inv = W.inverse();
    frame.cloud.points.reserve(world_points.size());
    for (const Eigen::Vector3d& wp : world_points) {
      const Eigen::Vector3d sp = (W_inv * wp.homogeneous()).head<3>();
      Point p{static_cast<float>(sp.x()), static_cast<float>(sp.y()), static_cast<float>(sp.z()),
              static_cast<float>(uni(rng))};
      frame.cloud.points.push_back(p);
    }

    // Poses are anchored at the first frame of the sequence.
    if (t == 0) frame.pose.T = Eigen::Matrix4d::Identity();
    frame.pose.T = W;  // temporarily absolute, re-anchored below
    out.sequence.frames.push_back(std::move(frame));
  }

  const Eigen::Matrix4d W0_inv = out.sequence.frames.front().pose.T.inverse();
  for (Frame& f : out.sequence.frames) {
    f.pose.T = W0_inv * f.pose.T;
    f.pose.T.row(3) << 0, 0, 0, 1;
  }
  out.sequence.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Sequence directories

void write_sequence(const std::filesystem::path& dir, const FrameSequence& seq) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "velodyne");
  std::string oxts, labels;
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const Frame& f = seq.frames[i];
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.bin", i);
    write_point_cloud_file(dir / "velodyne" / name, f.cloud);
    oxts += format_oxts_line(oxts_from_pose(f.pose.T, kSynthGeoRef));
    oxts += '\n';
    for (const ObjectLabel& l : f.labels) {
      labels += format_label_line(l);
      labels += '\n';
    }
  }
  write_text_file(dir / "oxts.txt", oxts);
  write_text_file(dir / "labels.txt", labels);
  write_text_file(dir / "meta.txt", "cadence_hz " + format_number(seq.cadence_hz) + "\nframes " +
                                        std::to_string(seq.frames.size()) + "\n");
}

FrameSequence read_sequence(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  FrameSequence seq;
  double cadence = 10.0;
  {
    const std::string meta = read_text_file(dir / "meta.txt");
    std::istringstream ss(meta);
    std::string line;
    while (std::getline(ss, line)) {
      const auto tokens = split_ws(line);
      if (tokens.size() == 2 && tokens[0] == "cadence_hz") {
        if (!parse_double(tokens[1], cadence)) throw DataError("meta.txt: bad cadence_hz");
      }
    }
  }
  seq.cadence_hz = cadence;

  std::vector<fs::path> scans;
  for (const auto& e : fs::directory_iterator(dir / "velodyne")) {
    if (e.path().extension() == ".bin") scans.push_back(e.path());
  }
  std::sort(scans.begin(), scans.end());
  const auto poses = read_pose_file(dir / "oxts.txt", cadence);
  if (poses.size() != scans.size())
    throw DataError("sequence has " + std::to_string(scans.size()) + " scans but " +
                    std::to_string(poses.size()) + " poses");
  std::vector<ObjectLabel> labels;
  if (fs::exists(dir / "labels.txt")) labels = read_labels(dir / "labels.txt");

  for (std::size_t i = 0; i < scans.size(); ++i) {
    Frame f;
    f.cloud = read_point_cloud_file(scans[i]).cloud;
    f.pose = poses[i];
    for (const ObjectLabel& l : labels) {
      if (l.frame_index == static_cast<int>(i)) f.labels.push_back(l);
    }
    seq.frames.push_back(std::move(f));
  }
  seq.validate();
  return seq;
}

}  // namespace emdet
