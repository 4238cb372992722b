#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "core/transform.hpp"

namespace scaletwin {

using Polygon = std::vector<Vec2>;

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;  // rad
};

struct Rect2 {
  Vec2 min{-10.0, -10.0};
  Vec2 max{10.0, 10.0};

  bool contains(const Vec2& p) const {
    return p.x() >= min.x() && p.x() <= max.x() && p.y() >= min.y() && p.y() <= max.y();
  }
};

struct OrientedRect {
  Vec2 center = Vec2::Zero();
  double yaw = 0.0;
  double half_length = 0.0;  // along heading
  double half_width = 0.0;

  std::array<Vec2, 4> corners() const;
};

struct RayHit {
  Vec2 point;
  double distance = 0.0;
};

double signed_area(const Polygon& poly);
bool is_simple(const Polygon& poly);
bool is_convex(const Polygon& poly);
/// Boundary points count as inside.
bool point_in_polygon(const Polygon& poly, const Vec2& p);
Polygon oriented_box(const Vec2& center, double length, double width, double yaw);

/// Nearest intersection of a ray with one segment. A ray running along the
/// segment hits at the nearest point of the overlap.
std::optional<double> ray_segment(const Vec2& origin, const Vec2& dir, const Vec2& a, const Vec2& b);

/// Nearest hit against the closed boundaries of `polygons`, limited to `max_dist`.
std::optional<RayHit> raycast_polygons(std::span<const Polygon> polygons, const Vec2& origin, const Vec2& dir,
                                       double max_dist);

/// Separating-axis test on convex polygons; contact with zero overlap area is
/// not an overlap.
bool convex_overlap(std::span<const Vec2> a, std::span<const Vec2> b);

}  // namespace scaletwin
