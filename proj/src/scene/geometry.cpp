#include "scene/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace scaletwin {

namespace {

constexpr double kParallelEps = 1e-12;
constexpr double kOverlapEps = 1e-12;

bool segments_intersect(const Vec2& p1, const Vec2& p2, const Vec2& q1, const Vec2& q2) {
  auto orient = [](const Vec2& a, const Vec2& b, const Vec2& c) { return cross2(b - a, c - a); };
  auto on_segment = [](const Vec2& a, const Vec2& b, const Vec2& p) {
    return std::min(a.x(), b.x()) <= p.x() && p.x() <= std::max(a.x(), b.x()) && std::min(a.y(), b.y()) <= p.y() &&
           p.y() <= std::max(a.y(), b.y());
  };
  const double d1 = orient(q1, q2, p1), d2 = orient(q1, q2, p2);
  const double d3 = orient(p1, p2, q1), d4 = orient(p1, p2, q2);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  if (d1 == 0 && on_segment(q1, q2, p1)) return true;
  if (d2 == 0 && on_segment(q1, q2, p2)) return true;
  if (d3 == 0 && on_segment(p1, p2, q1)) return true;
  if (d4 == 0 && on_segment(p1, p2, q2)) return true;
  return false;
}

void project(std::span<const Vec2> poly, const Vec2& axis, double& lo, double& hi) {
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (const Vec2& p : poly) {
    const double d = p.dot(axis);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
}

bool separated_on_edges(std::span<const Vec2> a, std::span<const Vec2> b) {
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 edge = a[(i + 1) % n] - a[i];
    const Vec2 axis(-edge.y(), edge.x());
    const double len = axis.norm();
    if (len == 0.0) continue;
    double alo, ahi, blo, bhi;
    project(a, axis, alo, ahi);
    project(b, axis, blo, bhi);
    const double overlap = std::min(ahi, bhi) - std::max(alo, blo);
    if (overlap <= kOverlapEps * len) return true;
  }
  return false;
}

}  // namespace

std::array<Vec2, 4> OrientedRect::corners() const {
  const Vec2 f(std::cos(yaw), std::sin(yaw));
  const Vec2 l(-f.y(), f.x());
  return {center + f * half_length + l * half_width, center - f * half_length + l * half_width,
          center - f * half_length - l * half_width, center + f * half_length - l * half_width};
}

double signed_area(const Polygon& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) a += cross2(poly[i], poly[(i + 1) % poly.size()]);
  return 0.5 * a;
}

bool is_simple(const Polygon& poly) {
  const std::size_t n = poly.size();
  if (n < 3 || signed_area(poly) == 0.0) return false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
      const Vec2 &a1 = poly[i], &a2 = poly[(i + 1) % n];
      const Vec2 &b1 = poly[j], &b2 = poly[(j + 1) % n];
      if (adjacent) {
        // Adjacent edges may only share their common vertex; reject folds back.
        const Vec2& shared = (j == i + 1) ? a2 : a1;
        const Vec2& far_a = (j == i + 1) ? a1 : a2;
        const Vec2& far_b = (j == i + 1) ? b2 : b1;
        if (cross2(far_a - shared, far_b - shared) == 0.0 && (far_a - shared).dot(far_b - shared) > 0.0) return false;
        continue;
      }
      if (segments_intersect(a1, a2, b1, b2)) return false;
    }
  }
  return true;
}

bool is_convex(const Polygon& poly) {
  if (!is_simple(poly)) return false;
  const std::size_t n = poly.size();
  int sign = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double c = cross2(poly[(i + 1) % n] - poly[i], poly[(i + 2) % n] - poly[(i + 1) % n]);
    if (c == 0.0) continue;
    const int s = c > 0.0 ? 1 : -1;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return true;
}

bool point_in_polygon(const Polygon& poly, const Vec2& p) {
  const std::size_t n = poly.size();
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 &a = poly[i], &b = poly[j];
    // On-edge check.
    if (cross2(b - a, p - a) == 0.0 && (p - a).dot(p - b) <= 0.0) return true;
    if ((a.y() > p.y()) != (b.y() > p.y())) {
      const double x = a.x() + (p.y() - a.y()) * (b.x() - a.x()) / (b.y() - a.y());
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

Polygon oriented_box(const Vec2& center, double length, double width, double yaw) {
  OrientedRect r{center, yaw, 0.5 * length, 0.5 * width};
  const auto c = r.corners();
  return {c[2], c[3], c[0], c[1]};  // counter-clockwise from rear-right
}

std::optional<double> ray_segment(const Vec2& origin, const Vec2& dir, const Vec2& a, const Vec2& b) {
  const Vec2 e = b - a;
  const Vec2 ap = a - origin;
  const double denom = cross2(dir, e);
  const double scale = std::max(1.0, e.norm());
  if (std::abs(denom) > kParallelEps * scale) {
    const double t = cross2(ap, e) / denom;
    const double u = cross2(ap, dir) / denom;
    if (t >= 0.0 && u >= 0.0 && u <= 1.0) return t;
    return std::nullopt;
  }
  if (std::abs(cross2(ap, dir)) > kParallelEps * std::max(1.0, ap.norm())) return std::nullopt;
  // Collinear: nearest point of the overlap between ray and segment.
  const double ta = ap.dot(dir);
  const double tb = (b - origin).dot(dir);
  if (std::max(ta, tb) < 0.0) return std::nullopt;
  return std::max(0.0, std::min(ta, tb));
}

std::optional<RayHit> raycast_polygons(std::span<const Polygon> polygons, const Vec2& origin, const Vec2& dir,
                                       double max_dist) {
  double best = std::numeric_limits<double>::infinity();
  for (const Polygon& poly : polygons) {
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (auto t = ray_segment(origin, dir, poly[i], poly[(i + 1) % n]); t && *t < best) best = *t;
    }
  }
  if (!std::isfinite(best)) return std::nullopt;
  const Vec2 point = origin + dir * best;
  const double dist = (point - origin).norm();
  if (dist > max_dist) return std::nullopt;
  return RayHit{point, dist};
}

bool convex_overlap(std::span<const Vec2> a, std::span<const Vec2> b) {
  if (a.size() < 3 || b.size() < 3) return false;
  return !separated_on_edges(a, b) && !separated_on_edges(b, a);
}

}  // namespace scaletwin
