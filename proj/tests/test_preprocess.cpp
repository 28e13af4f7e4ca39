#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "emdet/errors.hpp"
#include "emdet/preprocess.hpp"
#include "emdet/scene_io.hpp"

using namespace emdet;

namespace {

PoseRecord pose_from(double x, double y, double z, double yaw) {
  PoseRecord p;
  p.T.topLeftCorner<3, 3>() = rot_z(yaw);
  p.T.topRightCorner<3, 1>() = Eigen::Vector3d(x, y, z);
  return p;
}

PointCloud random_cloud(std::mt19937& rng, int n, float lo, float hi) {
  std::uniform_real_distribution<float> coord(lo, hi);
  std::uniform_real_distribution<float> inten(0.f, 1.f);
  PointCloud cloud;
  for (int i = 0; i < n; ++i)
    cloud.points.push_back({coord(rng), coord(rng), coord(rng), inten(rng)});
  return cloud;
}

}  // namespace

TEST_CASE("compensation with identical poses is the identity") {
  std::mt19937 rng(3);
  const PointCloud cloud = random_cloud(rng, 200, -30.f, 30.f);
  const PoseRecord pose = pose_from(12.0, -3.0, 0.5, 0.8);
  const PointCloud out = compensate_ego_motion(cloud, pose, pose);
  REQUIRE(out.size() == cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK(out.points[i].x == cloud.points[i].x);
    CHECK(out.points[i].y == cloud.points[i].y);
    CHECK(out.points[i].z == cloud.points[i].z);
    CHECK(out.points[i].intensity == cloud.points[i].intensity);
  }
}

TEST_CASE("compensation with a pure translation shifts every point") {
  PointCloud cloud;
  cloud.points.push_back({1.f, 2.f, 3.f, 0.5f});
  cloud.points.push_back({-4.f, 0.f, 1.f, 0.1f});
  const PoseRecord prev = pose_from(1.0, 0.0, 0.0, 0.0);
  const PoseRecord curr = pose_from(0.0, 0.0, 0.0, 0.0);
  const PointCloud out = compensate_ego_motion(cloud, prev, curr);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK(out.points[i].x == doctest::Approx(cloud.points[i].x + 1.f));
    CHECK(out.points[i].y == doctest::Approx(cloud.points[i].y));
    CHECK(out.points[i].z == doctest::Approx(cloud.points[i].z));
  }
}

TEST_CASE("compensation matches an independent matrix-chain oracle") {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> angle(-M_PI, M_PI);
  std::uniform_real_distribution<double> offset(-20.0, 20.0);
  const PointCloud cloud = random_cloud(rng, 100, -40.f, 40.f);
  const PoseRecord prev = pose_from(offset(rng), offset(rng), offset(rng), angle(rng));
  const PoseRecord curr = pose_from(offset(rng), offset(rng), offset(rng), angle(rng));
  const PointCloud out = compensate_ego_motion(cloud, prev, curr);

  // Oracle path: rotate/translate into the world frame, then solve back with
  // the transposed rotation instead of a 4x4 inverse.
  const Eigen::Matrix3d Rp = prev.T.topLeftCorner<3, 3>();
  const Eigen::Vector3d tp = prev.T.topRightCorner<3, 1>();
  const Eigen::Matrix3d Rc = curr.T.topLeftCorner<3, 3>();
  const Eigen::Vector3d tc = curr.T.topRightCorner<3, 1>();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d p(cloud.points[i].x, cloud.points[i].y, cloud.points[i].z);
    const Eigen::Vector3d world = Rp * p + tp;
    const Eigen::Vector3d expect = Rc.transpose() * (world - tc);
    const Eigen::Vector3d got(out.points[i].x, out.points[i].y, out.points[i].z);
    CHECK((got - expect).norm() < 1e-5);  // float storage limits the comparison
  }
}

TEST_CASE("ground removal on empty input") {
  CHECK(remove_ground({}, GroundConfig{}).empty());
}

TEST_CASE("ground removal keeps exactly the box points on a flat plane") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<float> xy(-8.f, 8.f);
  std::uniform_real_distribution<float> bz(0.3f, 1.8f);
  PointCloud cloud;
  std::set<std::size_t> box_indices;
  for (int i = 0; i < 4000; ++i) cloud.points.push_back({xy(rng), xy(rng), 0.f, 0.f});
  for (int i = 0; i < 500; ++i) {
    std::uniform_real_distribution<float> bx(2.f, 4.f);
    box_indices.insert(cloud.points.size());
    cloud.points.push_back({bx(rng), bx(rng), bz(rng), 0.f});
  }
  const PointCloud kept = remove_ground(cloud, GroundConfig{});
  CHECK(kept.size() == box_indices.size());
  for (const Point& p : kept.points) CHECK(p.z >= 0.3f);
}

TEST_CASE("ground removal on a 5 degree slope") {
  std::mt19937 rng(9);
  std::uniform_real_distribution<float> xy(-10.f, 10.f);
  const float slope = std::tan(5.f * static_cast<float>(M_PI) / 180.f);
  PointCloud cloud;
  const int n_plane = 6000;
  for (int i = 0; i < n_plane; ++i) {
    const float x = xy(rng), y = xy(rng);
    cloud.points.push_back({x, y, slope * x, 0.f});
  }
  const int n_obj = 400;
  std::uniform_real_distribution<float> ox(1.f, 3.f), oz(0.4f, 1.6f);
  for (int i = 0; i < n_obj; ++i) {
    const float x = ox(rng), y = ox(rng);
    cloud.points.push_back({x, y, slope * x + oz(rng), 0.f});
  }
  const PointCloud kept = remove_ground(cloud, GroundConfig{});
  int plane_kept = 0, obj_kept = 0;
  for (const Point& p : kept.points) {
    if (p.z - slope * p.x >= 0.4f - 1e-4f) ++obj_kept;
    else ++plane_kept;
  }
  CHECK(obj_kept >= static_cast<int>(0.95 * n_obj));
  CHECK(plane_kept <= static_cast<int>(0.05 * n_plane));
}

TEST_CASE("voxelization of an empty cloud is all zeros") {
  BevConfig cfg;
  cfg.rows = 20;
  cfg.cols = 30;
  const auto r = voxelize_bev({}, cfg);
  for (int i = 0; i < cfg.rows; ++i)
    for (int j = 0; j < cfg.cols; ++j) {
      CHECK(r.maps.occupancy(i, j) == 0.f);
      CHECK(r.maps.height(i, j) == 0.f);
      CHECK(r.maps.gaussian(i, j) == 0.f);
    }
}

TEST_CASE("voxelization of a single point") {
  BevConfig cfg;
  cfg.rows = 40;
  cfg.cols = 40;
  cfg.x_min = 0.0;
  cfg.y_min = 0.0;
  PointCloud cloud;
  cloud.points.push_back({1.25f, 2.3f, 1.4f, 0.f});
  const auto r = voxelize_bev(cloud, cfg);
  int pr, pc;
  REQUIRE(cfg.cell_of(1.25, 2.3, pr, pc));
  CHECK(pr == 11);
  CHECK(pc == 6);
  for (int i = 0; i < cfg.rows; ++i)
    for (int j = 0; j < cfg.cols; ++j) {
      if (i == pr && j == pc) {
        CHECK(r.maps.occupancy(i, j) == 1.f);
        CHECK(r.maps.height(i, j) == doctest::Approx(1.4f));
      } else {
        CHECK(r.maps.occupancy(i, j) == 0.f);
        CHECK(r.maps.height(i, j) == 0.f);
      }
    }
}

TEST_CASE("mean height and out-of-grid drops") {
  BevConfig cfg;
  cfg.rows = 10;
  cfg.cols = 10;
  cfg.x_min = 0.0;
  cfg.y_min = 0.0;
  PointCloud cloud;
  cloud.points.push_back({0.3f, 0.3f, 1.0f, 0.f});
  cloud.points.push_back({0.35f, 0.32f, 2.0f, 0.f});
  cloud.points.push_back({50.f, 50.f, 1.0f, 0.f});  // outside
  const auto r = voxelize_bev(cloud, cfg);
  CHECK(r.dropped_points == 1);
  CHECK(r.maps.height(1, 1) == doctest::Approx(1.5f));
  CHECK(r.maps.min_z(1, 1) == 1.0f);
  CHECK(r.maps.max_z(1, 1) == 2.0f);
}

TEST_CASE("voxelization is shift equivariant for whole-cell translations") {
  std::mt19937 rng(21);
  BevConfig cfg;
  cfg.rows = 30;
  cfg.cols = 30;
  cfg.x_min = 0.0;
  cfg.y_min = 0.0;
  std::uniform_real_distribution<float> coord(1.5f, 3.5f);
  std::uniform_real_distribution<float> height(0.f, 2.f);
  PointCloud cloud;
  for (int i = 0; i < 300; ++i)
    cloud.points.push_back({coord(rng), coord(rng), height(rng), 0.f});
  PointCloud shifted = cloud;
  const int k = 3;  // cells
  for (Point& p : shifted.points) p.x += static_cast<float>(k * cfg.cell_size);

  const auto a = voxelize_bev(cloud, cfg);
  const auto b = voxelize_bev(shifted, cfg);
  const int radius = cfg.gaussian_size / 2;
  for (int r = radius; r < cfg.rows - radius; ++r) {
    for (int c = radius; c + k < cfg.cols - radius; ++c) {
      CHECK(a.maps.occupancy(r, c) == b.maps.occupancy(r, c + k));
      CHECK(a.maps.height(r, c) == doctest::Approx(b.maps.height(r, c + k)).epsilon(1e-6));
      CHECK(a.maps.gaussian(r, c) == doctest::Approx(b.maps.gaussian(r, c + k)).epsilon(1e-6));
    }
  }
}

TEST_CASE("mean height stays within per-cell z bounds") {
  std::mt19937 rng(31);
  BevConfig cfg;
  cfg.rows = 25;
  cfg.cols = 25;
  cfg.x_min = 0.0;
  cfg.y_min = 0.0;
  std::uniform_real_distribution<float> coord(0.f, 5.f);
  std::uniform_real_distribution<float> height(-1.f, 3.f);
  PointCloud cloud;
  for (int i = 0; i < 2000; ++i)
    cloud.points.push_back({coord(rng), coord(rng), height(rng), 0.f});
  const auto r = voxelize_bev(cloud, cfg);
  for (int i = 0; i < cfg.rows; ++i)
    for (int j = 0; j < cfg.cols; ++j) {
      if (r.maps.occupancy(i, j) == 0.f) continue;
      CHECK(r.maps.height(i, j) >= r.maps.min_z(i, j) - 1e-5f);
      CHECK(r.maps.height(i, j) <= r.maps.max_z(i, j) + 1e-5f);
    }
}

TEST_CASE("gaussian map range and empty-neighborhood zeros") {
  std::mt19937 rng(41);
  BevConfig cfg;
  cfg.rows = 30;
  cfg.cols = 30;
  cfg.x_min = 0.0;
  cfg.y_min = 0.0;
  std::uniform_real_distribution<float> coord(2.f, 4.f);
  PointCloud cloud;
  for (int i = 0; i < 200; ++i) cloud.points.push_back({coord(rng), coord(rng), 1.f, 0.f});
  const auto r = voxelize_bev(cloud, cfg);
  const int radius = cfg.gaussian_size / 2;
  for (int i = 0; i < cfg.rows; ++i) {
    for (int j = 0; j < cfg.cols; ++j) {
      CHECK(r.maps.gaussian(i, j) >= 0.f);
      CHECK(r.maps.gaussian(i, j) <= 1.f + 1e-6f);
      bool any_occupied = false;
      for (int di = -radius; di <= radius && !any_occupied; ++di)
        for (int dj = -radius; dj <= radius && !any_occupied; ++dj)
          if (r.maps.occupancy.at_or(i + di, j + dj, 0.f) == 1.f) any_occupied = true;
      if (!any_occupied) CHECK(r.maps.gaussian(i, j) == 0.f);
    }
  }
}

TEST_CASE("bev config validation") {
  BevConfig cfg;
  cfg.gaussian_size = 4;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = BevConfig{};
  cfg.cell_size = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
