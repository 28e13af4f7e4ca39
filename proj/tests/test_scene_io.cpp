#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "emdet/errors.hpp"
#include "emdet/preprocess.hpp"
#include "emdet/scene_io.hpp"
#include "emdet/util.hpp"

using namespace emdet;

namespace {

// Independent byte-level encoder: writes the little-endian bit pattern of
// each float digit by digit, no memcpy of whole records.
void push_float_le(std::vector<std::uint8_t>& out, float v) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  out.push_back(bits & 0xff);
  out.push_back((bits >> 8) & 0xff);
  out.push_back((bits >> 16) & 0xff);
  out.push_back((bits >> 24) & 0xff);
}

double haversine_m(double lat1_deg, double lon1_deg, double lat2_deg, double lon2_deg) {
  const double r = 6378137.0;
  const double p1 = lat1_deg * M_PI / 180.0, p2 = lat2_deg * M_PI / 180.0;
  const double dp = p2 - p1, dl = (lon2_deg - lon1_deg) * M_PI / 180.0;
  const double a = std::sin(dp / 2) * std::sin(dp / 2) +
                   std::cos(p1) * std::cos(p2) * std::sin(dl / 2) * std::sin(dl / 2);
  return 2.0 * r * std::asin(std::sqrt(a));
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("emdet_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("read_point_cloud basics") {
  CHECK(read_point_cloud({}).cloud.empty());

  std::vector<std::uint8_t> one;
  push_float_le(one, 1.0f);
  push_float_le(one, 2.0f);
  push_float_le(one, 3.0f);
  push_float_le(one, 0.5f);
  const auto r = read_point_cloud(one);
  REQUIRE(r.cloud.size() == 1);
  CHECK(r.cloud.points[0].x == 1.0f);
  CHECK(r.cloud.points[0].y == 2.0f);
  CHECK(r.cloud.points[0].z == 3.0f);
  CHECK(r.cloud.points[0].intensity == 0.5f);
}

TEST_CASE("read_point_cloud matches the independent decoder on 10 records") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<float> coord(-50.f, 50.f);
  std::uniform_real_distribution<float> inten(0.f, 1.f);
  std::vector<std::uint8_t> blob;
  std::vector<std::array<float, 4>> expected;
  for (int i = 0; i < 10; ++i) {
    std::array<float, 4> rec{coord(rng), coord(rng), coord(rng), inten(rng)};
    expected.push_back(rec);
    for (float v : rec) push_float_le(blob, v);
  }
  REQUIRE(blob.size() == 160);
  const auto r = read_point_cloud(blob);
  REQUIRE(r.cloud.size() == 10);
  for (int i = 0; i < 10; ++i) {
    CHECK(r.cloud.points[i].x == expected[i][0]);
    CHECK(r.cloud.points[i].y == expected[i][1]);
    CHECK(r.cloud.points[i].z == expected[i][2]);
    CHECK(r.cloud.points[i].intensity == expected[i][3]);
  }
}

TEST_CASE("read_point_cloud error and warning paths") {
  std::vector<std::uint8_t> bad(35, 0);
  CHECK_THROWS_WITH_AS(read_point_cloud(bad), doctest::Contains("byte offset 32"), DataError);

  std::vector<std::uint8_t> nan_blob;
  push_float_le(nan_blob, std::numeric_limits<float>::quiet_NaN());
  push_float_le(nan_blob, 0.f);
  push_float_le(nan_blob, 0.f);
  push_float_le(nan_blob, 0.f);
  push_float_le(nan_blob, 1.f);
  push_float_le(nan_blob, 1.f);
  push_float_le(nan_blob, 1.f);
  push_float_le(nan_blob, 0.25f);
  const auto r = read_point_cloud(nan_blob);
  CHECK(r.dropped_records == 1);
  CHECK(r.cloud.size() == 1);
}

TEST_CASE("scan write/read round trip is bit exact") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<float> coord(-80.f, 80.f);
  std::uniform_real_distribution<float> inten(0.f, 1.f);
  PointCloud cloud;
  for (int i = 0; i < 500; ++i)
    cloud.points.push_back({coord(rng), coord(rng), coord(rng), inten(rng)});
  const auto blob = write_point_cloud(cloud);
  const auto again = read_point_cloud(blob);
  CHECK(again.dropped_records == 0);
  REQUIRE(again.cloud.size() == cloud.size());
  CHECK(std::memcmp(blob.data(), write_point_cloud(again.cloud).data(), blob.size()) == 0);
}

TEST_CASE("read_pose identity and pure rotation") {
  GeodeticRef origin{48.5, 9.0, 300.0, 0.01, -0.02, 0.4};
  const PoseRecord self = read_pose(origin, origin);
  CHECK((self.T - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff() < 1e-12);

  GeodeticRef origin0{48.5, 9.0, 300.0, 0.0, 0.0, 0.0};
  GeodeticRef rotated = origin0;
  rotated.yaw = M_PI / 2.0;
  const PoseRecord rot = read_pose(rotated, origin0);
  CHECK(rot.T.topRightCorner<3, 1>().norm() < 1e-9);
  const Eigen::Matrix3d expected = rot_z(M_PI / 2.0);
  CHECK((rot.T.topLeftCorner<3, 3>() - expected).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("read_pose translation matches the great-circle oracle") {
  GeodeticRef origin{0.0, 10.0, 0.0, 0.0, 0.0, 0.0};
  GeodeticRef north = origin;
  north.lat_deg += (10.0 / 6378137.0) * 180.0 / M_PI;  // ~10 m due north
  const double oracle = haversine_m(origin.lat_deg, origin.lon_deg, north.lat_deg, north.lon_deg);
  const PoseRecord pose = read_pose(north, origin);
  const double translation = pose.T.topRightCorner<3, 1>().norm();
  CHECK(translation == doctest::Approx(10.0).epsilon(1e-3));
  CHECK(std::abs(translation - oracle) < 1e-2);
}

TEST_CASE("pose parsing rejects bad records") {
  CHECK_THROWS_AS(parse_oxts_line("1 2 3"), DataError);
  CHECK_THROWS_WITH_AS(parse_oxts_line("95 0 0 0 0 0"), doctest::Contains("latitude"), DataError);
  CHECK_THROWS_WITH_AS(parse_oxts_line("0 zero 0 0 0 0"), doctest::Contains("field 1"), DataError);
}

TEST_CASE("pose record validation") {
  PoseRecord p;
  CHECK_NOTHROW(p.validate());
  p.T(0, 0) = 2.0;
  CHECK_THROWS_AS(p.validate(), DataError);
  PoseRecord q;
  q.T(3, 0) = 0.1;
  CHECK_THROWS_AS(q.validate(), DataError);
}

TEST_CASE("pose composition is associative within 1e-9") {
  SceneSpec spec;
  spec.frames = 6;
  spec.ego.velocity = {4.0, 1.0};
  spec.ego.yaw_rate = 0.1;
  spec.ground_density = 0.0;
  spec.ground_radius = 0.0;
  const auto scene = generate_synthetic_scene(spec);
  const auto& f = scene.sequence.frames;
  for (std::size_t i = 2; i < f.size(); ++i) {
    const Eigen::Matrix4d a_to_c = f[i].pose.T.inverse() * f[i - 2].pose.T;
    const Eigen::Matrix4d via_b = (f[i].pose.T.inverse() * f[i - 1].pose.T) *
                                  (f[i - 1].pose.T.inverse() * f[i - 2].pose.T);
    CHECK((a_to_c - via_b).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("oxts line round trip through the projection") {
  GeodeticRef origin{37.4, -122.1, 5.0, 0.0, 0.0, 0.0};
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  T.topLeftCorner<3, 3>() = rot_z(0.7);
  T.topRightCorner<3, 1>() = Eigen::Vector3d(25.0, -12.0, 0.3);
  const GeodeticRef rec = oxts_from_pose(T, origin);
  const PoseRecord back = read_pose(rec, origin);
  CHECK((back.T - T).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("label and detection text round trips") {
  const auto dir = temp_dir("labels");
  std::vector<ObjectLabel> labels;
  ObjectLabel l;
  l.frame_index = 3;
  l.track_id = 9;
  l.category = Category::Cyclist;
  l.box = {{1.25, -7.5, 0.875}, 1.7, 0.6, 1.8, 0.52359877559829882};
  l.is_moving = true;
  labels.push_back(l);
  write_labels(dir / "labels.txt", labels);
  const auto again = read_labels(dir / "labels.txt");
  REQUIRE(again.size() == 1);
  CHECK(again[0].box.yaw == l.box.yaw);
  CHECK(again[0].box.center.x() == l.box.center.x());
  // Second serialization must be byte-identical to the first.
  write_labels(dir / "labels2.txt", again);
  CHECK(read_text_file(dir / "labels.txt") == read_text_file(dir / "labels2.txt"));

  Detection d;
  d.frame_index = 4;
  d.category = Category::Car;
  d.box = {{10.0, 2.0, 0.8}, 1.6, 1.8, 4.2, 1.1};
  d.speed_mps = 5.5;
  write_detections(dir / "dets.txt", {d});
  const auto dets = read_detections(dir / "dets.txt");
  REQUIRE(dets.size() == 1);
  write_detections(dir / "dets2.txt", dets);
  CHECK(read_text_file(dir / "dets.txt") == read_text_file(dir / "dets2.txt"));
}

TEST_CASE("scene spec parser") {
  const char* good = R"(
cadence_hz 10
frames 4
seed 3
jitter 0.01
object
  category car
  center 12 0 0.8
  size 1.6 1.8 4.2
  velocity 2 0
  density 60
end
)";
  const SceneSpec spec = parse_scene_spec(good);
  CHECK(spec.frames == 4);
  REQUIRE(spec.objects.size() == 1);
  CHECK(spec.objects[0].velocity.x() == 2.0);

  CHECK_THROWS_WITH_AS(parse_scene_spec("frames 2\nbogus_key 1\n"), doctest::Contains("line 2"),
                       ConfigError);
  CHECK_THROWS_AS(parse_scene_spec("object\ncenter 1 2 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_scene_spec("object\ncenter 1 2 3\nsize 1 1 1\ndensity -5\nend\n"),
                  ConfigError);
}

TEST_CASE("synthetic scene: static world has no moving labels") {
  SceneSpec spec;
  spec.frames = 3;
  spec.ground_density = 0.5;
  SceneObjectSpec obj;
  obj.box = {{10.0, 0.0, 0.9}, 1.8, 2.0, 2.0, 0.0};
  obj.density = 40.0;
  spec.objects.push_back(obj);
  const auto scene = generate_synthetic_scene(spec);
  for (const Frame& f : scene.sequence.frames) {
    REQUIRE(f.labels.size() == 1);
    CHECK_FALSE(f.labels[0].is_moving);
  }
}

TEST_CASE("synthetic scene: mover advances exactly per kinematics") {
  SceneSpec spec;
  spec.frames = 5;
  spec.cadence_hz = 10.0;
  spec.ground_density = 0.0;
  spec.ground_radius = 0.0;
  SceneObjectSpec obj;
  obj.box = {{10.0, 0.0, 0.9}, 1.8, 2.0, 2.0, 0.0};
  obj.velocity = {2.0, 0.0};
  obj.density = 40.0;
  spec.objects.push_back(obj);
  const auto scene = generate_synthetic_scene(spec);
  for (std::size_t t = 1; t < scene.sequence.frames.size(); ++t) {
    const auto& prev = scene.sequence.frames[t - 1].labels[0].box.center;
    const auto& curr = scene.sequence.frames[t].labels[0].box.center;
    CHECK((curr - prev - Eigen::Vector3d(0.2, 0.0, 0.0)).norm() < 1e-12);
    CHECK(scene.sequence.frames[t].labels[0].is_moving);
  }
}

TEST_CASE("synthetic scene: static obstacle coincides across frames after compensation") {
  SceneSpec spec;
  spec.frames = 4;
  spec.jitter = 0.02;
  spec.ground_density = 0.0;
  spec.ground_radius = 0.0;
  spec.ego.velocity = {5.0, 0.0};
  SceneObjectSpec obj;
  obj.box = {{18.0, 2.0, 0.9}, 1.8, 2.0, 3.0, 0.3};
  obj.density = 60.0;
  spec.objects.push_back(obj);
  const auto scene = generate_synthetic_scene(spec);

  const Frame& a = scene.sequence.frames[2];
  const Frame& b = scene.sequence.frames[3];
  const PointCloud comp = compensate_ego_motion(a.cloud, a.pose, b.pose);

  // Signed L-infinity distance to the labeled box surface in frame b.
  const Box3D& box = b.labels[0].box;
  const Eigen::Matrix3d R = rot_z(box.yaw);
  std::vector<double> dist;
  for (const Point& p : comp.points) {
    const Eigen::Vector3d local = R.transpose() * (Eigen::Vector3d(p.x, p.y, p.z) - box.center);
    const double d = std::max({std::abs(local.x()) - box.l / 2, std::abs(local.y()) - box.w / 2,
                               std::abs(local.z()) - box.h / 2});
    dist.push_back(std::abs(d));
  }
  std::sort(dist.begin(), dist.end());
  // Surface distance is dominated by the single-axis jitter component.
  CHECK(dist[static_cast<std::size_t>(dist.size() * 0.99)] <= 3.0 * spec.jitter);
  CHECK(dist.back() <= 5.0 * spec.jitter);
}

TEST_CASE("synthetic scene: mover leaving the extent is truncated with a warning") {
  SceneSpec spec;
  spec.frames = 10;
  spec.ground_density = 0.0;
  spec.ground_radius = 0.0;
  SceneObjectSpec obj;
  obj.box = {{58.0, 0.0, 0.9}, 1.8, 2.0, 2.0, 0.0};
  obj.velocity = {10.0, 0.0};  // exits the +x extent after a few frames
  obj.density = 20.0;
  spec.objects.push_back(obj);
  const auto scene = generate_synthetic_scene(spec);
  CHECK(scene.truncation_warnings > 0);
  CHECK(scene.sequence.frames.back().labels.empty());
}

TEST_CASE("sequence directory round trip") {
  SceneSpec spec;
  spec.frames = 3;
  spec.ground_density = 0.2;
  spec.ego.velocity = {3.0, 0.5};
  spec.ego.yaw_rate = 0.05;
  SceneObjectSpec obj;
  obj.box = {{12.0, -2.0, 0.9}, 1.8, 2.0, 4.0, 0.2};
  obj.velocity = {1.5, 0.0};
  obj.density = 30.0;
  spec.objects.push_back(obj);
  const auto scene = generate_synthetic_scene(spec);

  const auto dir = temp_dir("seq");
  write_sequence(dir, scene.sequence);
  const FrameSequence again = read_sequence(dir);
  REQUIRE(again.frames.size() == scene.sequence.frames.size());
  CHECK(again.cadence_hz == scene.sequence.cadence_hz);
  for (std::size_t i = 0; i < again.frames.size(); ++i) {
    CHECK(again.frames[i].cloud.size() == scene.sequence.frames[i].cloud.size());
    CHECK((again.frames[i].pose.T - scene.sequence.frames[i].pose.T).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(again.frames[i].labels.size() == scene.sequence.frames[i].labels.size());
  }
}
