#pragma once

#include <array>
#include <cmath>
#include <span>
#include <vector>

namespace dynvla::world {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Vec2&, const Vec2&) = default;
};

inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

// Planar pose; yaw measured counter-clockwise from +x.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  Vec2 position() const { return {x, y}; }
  friend bool operator==(const Pose2&, const Pose2&) = default;
};

// Relative motion (dx, dy, dyaw) expressed in the frame of the starting pose.
struct EgoAction {
  double dx = 0.0;
  double dy = 0.0;
  double dyaw = 0.0;
  friend bool operator==(const EgoAction&, const EgoAction&) = default;
};

double wrap_angle(double a);

// Point given in `frame` coordinates -> world coordinates, and back.
Vec2 to_world(const Pose2& frame, Vec2 local);
Vec2 to_local(const Pose2& frame, Vec2 world);
Pose2 to_world(const Pose2& frame, const Pose2& local);
Pose2 to_local(const Pose2& frame, const Pose2& world);

Pose2 compose(const Pose2& pose, const EgoAction& delta);
EgoAction relative_motion(const Pose2& from, const Pose2& to);

// Rectangle aligned with its body frame.
struct OrientedBox {
  Vec2 center;
  double yaw = 0.0;
  Vec2 half_extents;  // (half length along heading, half width)

  std::array<Vec2, 4> corners() const;
  bool contains(Vec2 p) const;
};

// Separating-axis test on the two boxes' edge normals. Touching counts as
// overlap.
bool overlaps(const OrientedBox& a, const OrientedBox& b);

using Polyline = std::vector<Vec2>;

struct Segment {
  Vec2 a;
  Vec2 b;
};

double distance_to_segment(Vec2 p, const Segment& s);
// Parameter of the projection of p on s, in [0, 1].
double project_on_segment(Vec2 p, const Segment& s);
bool segments_intersect(const Segment& s, const Segment& t);

struct Polygon {
  std::vector<Vec2> vertices;

  bool contains(Vec2 p) const;  // even-odd rule, boundary counted as inside
  double distance_to_boundary(Vec2 p) const;
  bool is_simple() const;
};

double polyline_length(std::span<const Vec2> line);
// Arc length of the closest point on the polyline.
double arc_length_projection(std::span<const Vec2> line, Vec2 p);

}  // namespace dynvla::world
