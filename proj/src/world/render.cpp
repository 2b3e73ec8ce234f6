#include "dynvla/world/render.hpp"

#include <cmath>

namespace dynvla::world {

namespace {

constexpr double kDashPeriod = 6.0;
constexpr double kDashLength = 3.0;

bool on_marking(const Road& road, Vec2 p, double half_width) {
  for (const Marking& m : road.markings) {
    if (distance_to_segment(p, m.segment) > half_width) continue;
    if (!m.dashed) return true;
    const double along = project_on_segment(p, m.segment) * norm(m.segment.b - m.segment.a);
    if (std::fmod(along, kDashPeriod) < kDashLength) return true;
  }
  return false;
}

bool on_agent(const WorldState& s, Vec2 p) {
  for (const Agent& a : s.agents) {
    if (a.footprint().contains(p)) return true;
  }
  return false;
}

}  // namespace

Vec2 GridMapping::cell_center_world(int row, int col) const {
  const double half = 0.5 * size;
  const double forward = (half - row - 0.5) * meters_per_cell;
  const double left = (half - col - 0.5) * meters_per_cell;
  return to_world(anchor, Vec2{forward, left});
}

Vec2 GridMapping::world_to_grid(Vec2 p) const {
  const Vec2 local = to_local(anchor, p);
  const double half = 0.5 * size;
  return {half - local.x / meters_per_cell - 0.5, half - local.y / meters_per_cell - 0.5};
}

Observation render_observation(const WorldState& state, const RenderConfig& cfg, std::optional<Pose2> anchor) {
  const GridMapping grid{anchor.value_or(state.ego_pose), cfg.obs_size, cfg.meters_per_pixel};
  Observation obs{cfg.obs_size, cfg.obs_size, cfg.channels,
                  std::vector<float>(static_cast<std::size_t>(cfg.obs_size) * cfg.obs_size * cfg.channels, 0.0f)};
  const OrientedBox ego = state.ego_footprint();
  const double line_half_width = 0.5 * cfg.meters_per_pixel;
  for (int r = 0; r < obs.height; ++r) {
    for (int c = 0; c < obs.width; ++c) {
      const Vec2 p = grid.cell_center_world(r, c);
      float* px = &obs.data[(static_cast<std::size_t>(r) * obs.width + c) * obs.channels];
      if (on_marking(state.road, p, line_half_width)) {
        px[0] = 1.0f;
      } else if (state.road.drivable.contains(p)) {
        px[0] = 0.4f;
      }
      if (obs.channels > 1 && on_agent(state, p)) px[1] = 1.0f;
      if (obs.channels > 2 && ego.contains(p)) px[2] = 1.0f;
    }
  }
  return obs;
}

BevMap render_bev(const WorldState& state, const RenderConfig& cfg, std::optional<Pose2> anchor) {
  const GridMapping grid{anchor.value_or(state.ego_pose), cfg.bev_size, cfg.bev_meters_per_cell()};
  BevMap bev{cfg.bev_size, cfg.bev_size,
             std::vector<std::uint8_t>(static_cast<std::size_t>(cfg.bev_size) * cfg.bev_size, kBevBackground)};
  const OrientedBox ego = state.ego_footprint();
  const double line_half_width = 0.5 * grid.meters_per_cell;
  for (int r = 0; r < bev.height; ++r) {
    for (int c = 0; c < bev.width; ++c) {
      const Vec2 p = grid.cell_center_world(r, c);
      std::uint8_t cls = kBevBackground;
      if (ego.contains(p)) {
        cls = kBevEgo;
      } else if (on_agent(state, p)) {
        cls = kBevAgent;
      } else if (on_marking(state.road, p, line_half_width)) {
        cls = kBevLaneMarking;
      } else if (state.road.drivable.contains(p)) {
        cls = kBevDrivable;
      }
      bev.data[static_cast<std::size_t>(r) * bev.width + c] = cls;
    }
  }
  return bev;
}

std::optional<Vec2> class_centroid(const BevMap& bev, std::uint8_t cls) {
  double sr = 0.0, sc = 0.0;
  std::size_t n = 0;
  for (int r = 0; r < bev.height; ++r) {
    for (int c = 0; c < bev.width; ++c) {
      if (bev.at(r, c) != cls) continue;
      sr += r;
      sc += c;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return Vec2{sr / n, sc / n};
}

}  // namespace dynvla::world
