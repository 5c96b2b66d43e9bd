#include "hitl/geometry.hpp"

#include <algorithm>
#include <limits>

namespace hitl::world {

double wrap_angle(double angle) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double a = std::fmod(angle, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

Pose2 Pose2::compose(const Pose2& o) const {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {x + c * o.x - s * o.y, y + s * o.x + c * o.y, wrap_angle(theta + o.theta)};
}

Pose2 Pose2::inverse() const {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {-(c * x + s * y), -(-s * x + c * y), wrap_angle(-theta)};
}

Vec2 Pose2::apply(Vec2 p) const {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {x + c * p.x - s * p.y, y + s * p.x + c * p.y};
}

Pose2 relative(const Pose2& from, const Pose2& to) { return from.inverse().compose(to); }

PoseError pose_error(const Pose2& a, const Pose2& b) {
  return {std::hypot(a.x - b.x, a.y - b.y), std::abs(wrap_angle(a.theta - b.theta))};
}

Polygon Polygon::box(double hx, double hy) { return {{{-hx, -hy}, {hx, -hy}, {hx, hy}, {-hx, hy}}}; }

Polygon Polygon::transformed(const Pose2& pose) const {
  Polygon out;
  out.vertices.reserve(vertices.size());
  for (const auto& v : vertices) out.vertices.push_back(pose.apply(v));
  return out;
}

bool point_in_polygon(Vec2 p, const Polygon& poly) {
  const auto& v = poly.vertices;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 a = v[i];
    const Vec2 b = v[(i + 1) % v.size()];
    if ((b - a).cross(p - a) < 0.0) return false;
  }
  return !v.empty();
}

double point_segment_distance(Vec2 p, const Segment& s) {
  const Vec2 d = s.b - s.a;
  const double len2 = d.dot(d);
  double t = len2 > 0.0 ? (p - s.a).dot(d) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return (p - (s.a + d * t)).norm();
}

namespace {

int orientation(Vec2 a, Vec2 b, Vec2 c) {
  const double v = (b - a).cross(c - a);
  if (v > 1e-12) return 1;
  if (v < -1e-12) return -1;
  return 0;
}

bool on_segment(Vec2 a, Vec2 b, Vec2 p) {
  return std::min(a.x, b.x) - 1e-12 <= p.x && p.x <= std::max(a.x, b.x) + 1e-12 &&
         std::min(a.y, b.y) - 1e-12 <= p.y && p.y <= std::max(a.y, b.y) + 1e-12;
}

void project(const Polygon& poly, Vec2 axis, double& lo, double& hi) {
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (const auto& v : poly.vertices) {
    const double d = v.dot(axis);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
}

bool separated_along_edges(const Polygon& a, const Polygon& b, double tolerance) {
  const auto& v = a.vertices;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 e = v[(i + 1) % v.size()] - v[i];
    const double len = e.norm();
    if (len == 0.0) continue;
    const Vec2 axis{-e.y / len, e.x / len};
    double alo = 0, ahi = 0, blo = 0, bhi = 0;
    project(a, axis, alo, ahi);
    project(b, axis, blo, bhi);
    if (ahi <= blo + tolerance || bhi <= alo + tolerance) return true;
  }
  return false;
}

}  // namespace

bool segments_intersect(const Segment& s, const Segment& t) {
  const int o1 = orientation(s.a, s.b, t.a);
  const int o2 = orientation(s.a, s.b, t.b);
  const int o3 = orientation(t.a, t.b, s.a);
  const int o4 = orientation(t.a, t.b, s.b);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && on_segment(s.a, s.b, t.a)) return true;
  if (o2 == 0 && on_segment(s.a, s.b, t.b)) return true;
  if (o3 == 0 && on_segment(t.a, t.b, s.a)) return true;
  if (o4 == 0 && on_segment(t.a, t.b, s.b)) return true;
  return false;
}

bool segment_intersects_polygon(const Segment& seg, const Polygon& poly) {
  if (point_in_polygon(seg.a, poly) || point_in_polygon(seg.b, poly)) return true;
  const auto& v = poly.vertices;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (segments_intersect(seg, {v[i], v[(i + 1) % v.size()]})) return true;
  }
  return false;
}

bool polygons_overlap(const Polygon& a, const Polygon& b, double tolerance) {
  if (a.vertices.empty() || b.vertices.empty()) return false;
  return !separated_along_edges(a, b, tolerance) && !separated_along_edges(b, a, tolerance);
}

double polygon_distance(const Polygon& a, const Polygon& b) {
  if (polygons_overlap(a, b, 0.0)) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  auto edges_to_points = [&best](const Polygon& edges, const Polygon& points) {
    const auto& v = edges.vertices;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const Segment e{v[i], v[(i + 1) % v.size()]};
      for (const auto& p : points.vertices) best = std::min(best, point_segment_distance(p, e));
    }
  };
  edges_to_points(a, b);
  edges_to_points(b, a);
  return best;
}

}  // namespace hitl::world
