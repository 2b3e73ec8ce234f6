#include "dynvla/world/geometry.hpp"

#include <algorithm>
#include <limits>
#include <numbers>

namespace dynvla::world {

double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a < 0) a += two_pi;
  return a - std::numbers::pi;
}

Vec2 to_world(const Pose2& frame, Vec2 local) {
  const double c = std::cos(frame.yaw), s = std::sin(frame.yaw);
  return {frame.x + c * local.x - s * local.y, frame.y + s * local.x + c * local.y};
}

Vec2 to_local(const Pose2& frame, Vec2 world) {
  const double c = std::cos(frame.yaw), s = std::sin(frame.yaw);
  const double dx = world.x - frame.x, dy = world.y - frame.y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

Pose2 to_world(const Pose2& frame, const Pose2& local) {
  const Vec2 p = to_world(frame, Vec2{local.x, local.y});
  return {p.x, p.y, wrap_angle(frame.yaw + local.yaw)};
}

Pose2 to_local(const Pose2& frame, const Pose2& world) {
  const Vec2 p = to_local(frame, Vec2{world.x, world.y});
  return {p.x, p.y, wrap_angle(world.yaw - frame.yaw)};
}

Pose2 compose(const Pose2& pose, const EgoAction& delta) {
  return to_world(pose, Pose2{delta.dx, delta.dy, delta.dyaw});
}

EgoAction relative_motion(const Pose2& from, const Pose2& to) {
  const Pose2 rel = to_local(from, to);
  return {rel.x, rel.y, rel.yaw};
}

std::array<Vec2, 4> OrientedBox::corners() const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const Vec2 ax{c * half_extents.x, s * half_extents.x};
  const Vec2 ay{-s * half_extents.y, c * half_extents.y};
  return {center + ax + ay, center - ax + ay, center - ax - ay, center + ax - ay};
}

bool OrientedBox::contains(Vec2 p) const {
  const Vec2 d = p - center;
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double lx = c * d.x + s * d.y;
  const double ly = -s * d.x + c * d.y;
  return std::abs(lx) <= half_extents.x && std::abs(ly) <= half_extents.y;
}

namespace {

void project_box(const std::array<Vec2, 4>& pts, Vec2 axis, double& lo, double& hi) {
  lo = std::numeric_limits<double>::infinity();
  hi = -lo;
  for (const Vec2& p : pts) {
    const double v = dot(p, axis);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
}

double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

}  // namespace

bool overlaps(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const std::array<Vec2, 4> axes{Vec2{std::cos(a.yaw), std::sin(a.yaw)},
                                 Vec2{-std::sin(a.yaw), std::cos(a.yaw)},
                                 Vec2{std::cos(b.yaw), std::sin(b.yaw)},
                                 Vec2{-std::sin(b.yaw), std::cos(b.yaw)}};
  for (const Vec2& axis : axes) {
    double alo, ahi, blo, bhi;
    project_box(ca, axis, alo, ahi);
    project_box(cb, axis, blo, bhi);
    if (ahi < blo || bhi < alo) return false;
  }
  return true;
}

double project_on_segment(Vec2 p, const Segment& s) {
  const Vec2 d = s.b - s.a;
  const double len2 = dot(d, d);
  if (len2 == 0.0) return 0.0;
  return std::clamp(dot(p - s.a, d) / len2, 0.0, 1.0);
}

double distance_to_segment(Vec2 p, const Segment& s) {
  const double t = project_on_segment(p, s);
  return norm(p - (s.a + t * (s.b - s.a)));
}

bool segments_intersect(const Segment& s, const Segment& t) {
  const Vec2 r = s.b - s.a, q = t.b - t.a;
  const double denom = cross(r, q);
  const Vec2 w = t.a - s.a;
  if (denom == 0.0) {
    if (cross(w, r) != 0.0) return false;  // parallel, disjoint lines
    const double rr = dot(r, r);
    if (rr == 0.0) return distance_to_segment(s.a, t) == 0.0;
    const double t0 = dot(w, r) / rr;
    const double t1 = t0 + dot(q, r) / rr;
    return std::max(t0, t1) >= 0.0 && std::min(t0, t1) <= 1.0;
  }
  const double u = cross(w, q) / denom;
  const double v = cross(w, r) / denom;
  return u >= 0.0 && u <= 1.0 && v >= 0.0 && v <= 1.0;
}

bool Polygon::contains(Vec2 p) const {
  const std::size_t n = vertices.size();
  if (n < 3) return false;
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = vertices[i], b = vertices[j];
    if (distance_to_segment(p, {a, b}) == 0.0) return true;
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

double Polygon::distance_to_boundary(Vec2 p) const {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t n = vertices.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    best = std::min(best, distance_to_segment(p, {vertices[j], vertices[i]}));
  }
  return best;
}

bool Polygon::is_simple() const {
  const std::size_t n = vertices.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    const Segment e{vertices[i], vertices[(i + 1) % n]};
    for (std::size_t j = i + 1; j < n; ++j) {
      // adjacent edges share a vertex by construction
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      const Segment f{vertices[j], vertices[(j + 1) % n]};
      if (segments_intersect(e, f)) return false;
    }
  }
  return true;
}

double polyline_length(std::span<const Vec2> line) {
  double total = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) total += norm(line[i] - line[i - 1]);
  return total;
}

double arc_length_projection(std::span<const Vec2> line, Vec2 p) {
  double best_dist = std::numeric_limits<double>::infinity();
  double best_arc = 0.0;
  double offset = 0.0;
  for (std::size_t i = 1; i < line.size(); ++i) {
    const Segment s{line[i - 1], line[i]};
    const double t = project_on_segment(p, s);
    const double seg_len = norm(s.b - s.a);
    const double d = distance_to_segment(p, s);
    if (d < best_dist) {
      best_dist = d;
      best_arc = offset + t * seg_len;
    }
    offset += seg_len;
  }
  return best_arc;
}

}  // namespace dynvla::world
