#include "emdet/box_fit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace emdet {

namespace {

struct Extent {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double range() const { return hi - lo; }
  double mid() const { return (lo + hi) / 2.0; }
};

void rotated_extents(const PointCloud& points, double angle, Extent& ex, Extent& ey) {
  const double c = std::cos(angle), s = std::sin(angle);
  for (const Point& p : points.points) {
    // rotate by -angle
    ex.add(c * p.x + s * p.y);
    ey.add(-s * p.x + c * p.y);
  }
}

}  // namespace

CenterEstimate estimate_center(const PointCloud& points) {
  if (points.empty()) throw std::invalid_argument("estimate_center: empty point set");

  CenterEstimate best;
  double best_score = std::numeric_limits<double>::infinity();
  for (const double alpha : {0.0, M_PI / 6.0, M_PI / 3.0}) {
    Extent ex, ey;
    rotated_extents(points, alpha, ex, ey);
    const double score = ex.range() * ex.range() + ey.range() * ey.range();
    if (score < best_score) {
      best_score = score;
      best.alpha = alpha;
      best.range_x = ex.range();
      best.range_y = ey.range();
      const Eigen::Vector2d mid = rot2d(alpha) * Eigen::Vector2d(ex.mid(), ey.mid());
      best.center.head<2>() = mid;
    }
  }
  double z_sum = 0;
  for (const Point& p : points.points) z_sum += p.z;
  best.center.z() = z_sum / static_cast<double>(points.size());
  return best;
}

namespace {

// Collinear inputs make every candidate frame score identically, so the
// heading is taken from the farthest-point diameter instead.
bool collinear_direction(const PointCloud& points, double& yaw) {
  const Point& p0 = points.points.front();
  double best_d2 = 0.0;
  Eigen::Vector2d dir(0, 0);
  for (const Point& p : points.points) {
    const Eigen::Vector2d d(p.x - p0.x, p.y - p0.y);
    if (d.squaredNorm() > best_d2) {
      best_d2 = d.squaredNorm();
      dir = d;
    }
  }
  if (best_d2 == 0.0) {
    yaw = 0.0;
    return true;  // a single repeated location
  }
  const Eigen::Vector2d n(-dir.y(), dir.x());
  const double scale = std::sqrt(best_d2);
  double max_off = 0.0;
  for (const Point& p : points.points) {
    const Eigen::Vector2d d(p.x - p0.x, p.y - p0.y);
    max_off = std::max(max_off, std::abs(n.dot(d)) / scale);
  }
  if (max_off > 1e-6) return false;
  yaw = std::atan2(dir.y(), dir.x());
  return true;
}

}  // namespace

FittedBox fit_box(const PointCloud& points, const CenterEstimate& center) {
  if (points.empty()) throw std::invalid_argument("fit_box: empty point set");

  constexpr double kStep = M_PI / 180.0;
  constexpr int kHalfSteps = 15;
  constexpr double kMinWidth = 0.1;

  double line_yaw = 0.0;
  const bool is_line = collinear_direction(points, line_yaw);

  double best_area = std::numeric_limits<double>::infinity();
  double best_yaw = center.alpha;
  Extent best_ex, best_ey;
  for (int i = -kHalfSteps; i <= kHalfSteps; ++i) {
    const double yaw = is_line ? line_yaw : center.alpha + i * kStep;
    Extent ex, ey;
    rotated_extents(points, yaw, ex, ey);
    const double area = ex.range() * ey.range();
    if (area < best_area) {
      best_area = area;
      best_yaw = yaw;
      best_ex = ex;
      best_ey = ey;
    }
    if (is_line) break;
  }

  Extent ez;
  for (const Point& p : points.points) ez.add(p.z);

  FittedBox out;
  Box3D& box = out.box;
  box.center.head<2>() = rot2d(best_yaw) * Eigen::Vector2d(best_ex.mid(), best_ey.mid());
  box.yaw = normalize_yaw(best_yaw);
  // Length runs along the heading; swap so l >= w and keep yaw consistent.
  double along = best_ex.range(), across = best_ey.range();
  if (across > along) {
    std::swap(along, across);
    box.yaw = normalize_yaw(best_yaw + M_PI / 2.0);
  }
  box.l = along;
  box.w = across;
  box.h = std::max(ez.range(), 1e-6);
  box.center.z() = ez.mid();
  if (box.w < kMinWidth) {
    box.w = kMinWidth;
    out.degenerate = true;
  }
  if (box.l < kMinWidth) {
    box.l = kMinWidth;
    out.degenerate = true;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rotated IoU via convex polygon clipping

namespace {

using Poly = std::vector<Eigen::Vector2d>;

double cross(const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

// Sutherland-Hodgman: keep the part of `poly` on the left of edge a->b.
Poly clip_edge(const Poly& poly, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  Poly out;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d& p = poly[i];
    const Eigen::Vector2d& q = poly[(i + 1) % n];
    const double dp = cross(a, b, p);
    const double dq = cross(a, b, q);
    if (dp >= 0) out.push_back(p);
    if ((dp > 0 && dq < 0) || (dp < 0 && dq > 0)) {
      const double t = dp / (dp - dq);
      out.push_back(p + t * (q - p));
    }
  }
  return out;
}

double polygon_area(const Poly& poly) {
  if (poly.size() < 3) return 0.0;
  double acc = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Eigen::Vector2d& p = poly[i];
    const Eigen::Vector2d& q = poly[(i + 1) % poly.size()];
    acc += p.x() * q.y() - q.x() * p.y();
  }
  return std::abs(acc) / 2.0;
}

double bev_intersection(const Box3D& a, const Box3D& b) {
  const auto ca = a.bev_corners();
  const auto cb = b.bev_corners();
  Poly poly(ca.begin(), ca.end());
  for (int i = 0; i < 4 && !poly.empty(); ++i) {
    poly = clip_edge(poly, cb[i], cb[(i + 1) % 4]);
  }
  return polygon_area(poly);
}

}  // namespace

double iou(const Box3D& a, const Box3D& b, IoUMode mode) {
  const double inter_bev = bev_intersection(a, b);
  const double area_a = a.w * a.l, area_b = b.w * b.l;
  if (mode == IoUMode::Bev) {
    const double uni = area_a + area_b - inter_bev;
    return uni > 0 ? std::clamp(inter_bev / uni, 0.0, 1.0) : 0.0;
  }
  const double dz = std::max(0.0, std::min(a.z_max(), b.z_max()) - std::max(a.z_min(), b.z_min()));
  const double inter = inter_bev * dz;
  const double uni = area_a * a.h + area_b * b.h - inter;
  return uni > 0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

Category classify_by_size(const Box3D& box) {
  struct Prior {
    Category cat;
    double h, w, l;
  };
  static const Prior priors[] = {
      {Category::Car, 1.6, 1.8, 4.2},
      {Category::Pedestrian, 1.7, 0.6, 0.6},
      {Category::Cyclist, 1.7, 0.6, 1.8},
  };
  Category best = Category::Other;
  double best_d = 2.5;  // beyond this distance in size space nothing matches
  for (const Prior& p : priors) {
    const double d = std::hypot(box.h - p.h, box.w - p.w, box.l - p.l);
    if (d < best_d) {
      best_d = d;
      best = p.cat;
    }
  }
  return best;
}

}  // namespace emdet
