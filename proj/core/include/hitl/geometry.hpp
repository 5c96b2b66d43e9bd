#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <vector>

namespace hitl::world {

/// Wraps an angle into (-pi, pi].
double wrap_angle(double angle);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }

  bool operator==(const Vec2&) const = default;
};

/// Planar rigid transform. `theta` is kept in (-pi, pi].
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  static Pose2 identity() { return {}; }

  Vec2 position() const { return {x, y}; }
  /// this * other
  Pose2 compose(const Pose2& other) const;
  Pose2 inverse() const;
  Vec2 apply(Vec2 point) const;

  bool operator==(const Pose2&) const = default;
};

inline Pose2 operator*(const Pose2& a, const Pose2& b) { return a.compose(b); }

/// Relative transform taking `from` to `to`: from.inverse() * to.
Pose2 relative(const Pose2& from, const Pose2& to);

struct PoseError {
  double position = 0.0;
  double angle = 0.0;
};

/// Translation distance and absolute wrapped angle difference.
PoseError pose_error(const Pose2& a, const Pose2& b);

/// Convex polygon, vertices in counter-clockwise order.
struct Polygon {
  std::vector<Vec2> vertices;

  static Polygon box(double half_x, double half_y);
  Polygon transformed(const Pose2& pose) const;
};

struct Segment {
  Vec2 a;
  Vec2 b;
};

bool point_in_polygon(Vec2 point, const Polygon& polygon);
double point_segment_distance(Vec2 point, const Segment& segment);
bool segments_intersect(const Segment& s, const Segment& t);
bool segment_intersects_polygon(const Segment& segment, const Polygon& polygon);
/// Separating-axis overlap test with a small tolerance so touching faces do not count.
bool polygons_overlap(const Polygon& a, const Polygon& b, double tolerance = 1e-9);
/// Minimum distance between two convex polygons; zero when they overlap.
double polygon_distance(const Polygon& a, const Polygon& b);

}  // namespace hitl::world
