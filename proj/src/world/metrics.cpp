#include "dynvla/world/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "dynvla/common/error.hpp"

namespace dynvla::world {

double compose_pdms(double nc, double dac, double ttc, double comfort, double ep) {
  return nc * dac * (5.0 * ep + 5.0 * ttc + 2.0 * comfort) / 12.0;
}

RewardBreakdown compose_pdms(RewardBreakdown r) {
  r.pdms = compose_pdms(r.nc, r.dac, r.ttc, r.comfort, r.ep);
  return r;
}

bool has_collision(const std::vector<WorldState>& rollout) {
  for (const WorldState& s : rollout) {
    const OrientedBox ego = s.ego_footprint();
    for (const Agent& a : s.agents) {
      if (overlaps(ego, a.footprint())) return true;
    }
  }
  return false;
}

bool stays_drivable(const std::vector<WorldState>& rollout, double tolerance) {
  for (const WorldState& s : rollout) {
    const OrientedBox ego = s.ego_footprint();
    const Polygon& road = s.road.drivable;
    for (const Vec2& c : ego.corners()) {
      if (!road.contains(c) && road.distance_to_boundary(c) > tolerance) return false;
    }
    // Reflex road corners poking into the footprint (e.g. a lane closure).
    const OrientedBox shrunk{ego.center, ego.yaw,
                             {ego.half_extents.x - tolerance, ego.half_extents.y - tolerance}};
    for (const Vec2& v : road.vertices) {
      if (shrunk.contains(v)) return false;
    }
  }
  return true;
}

namespace {

Vec2 ego_velocity(const std::vector<WorldState>& rollout, std::size_t i) {
  const WorldState& s = rollout[i];
  if (i == 0) return {s.ego_speed * std::cos(s.ego_pose.yaw), s.ego_speed * std::sin(s.ego_pose.yaw)};
  return (1.0 / s.dt) * (s.ego_pose.position() - rollout[i - 1].ego_pose.position());
}

}  // namespace

bool ttc_ok(const std::vector<WorldState>& rollout, const MetricConfig& cfg) {
  const int probes = static_cast<int>(std::lround(cfg.ttc_threshold / cfg.ttc_resolution));
  for (std::size_t i = 0; i < rollout.size(); ++i) {
    const WorldState& s = rollout[i];
    const Vec2 ev = ego_velocity(rollout, i);
    for (const Agent& a : s.agents) {
      for (int k = 0; k < probes; ++k) {
        const double tau = k * cfg.ttc_resolution;
        const OrientedBox ego{s.ego_pose.position() + tau * ev, s.ego_pose.yaw, s.ego_half_extents};
        const OrientedBox other{a.pose.position() + tau * a.velocity, a.pose.yaw, a.half_extents};
        if (overlaps(ego, other)) return false;
      }
    }
  }
  return true;
}

bool is_comfortable(const std::vector<WorldState>& rollout, const MetricConfig& cfg) {
  if (rollout.size() < 2) return true;
  const double dt = rollout.front().dt;
  double prev_speed = rollout.front().ego_speed;
  double prev_rate = 0.0;
  for (std::size_t i = 1; i < rollout.size(); ++i) {
    const double speed = norm(rollout[i].ego_pose.position() - rollout[i - 1].ego_pose.position()) / dt;
    if (std::abs(speed - prev_speed) / dt > cfg.max_accel + 1e-9) return false;
    const double rate = wrap_angle(rollout[i].ego_pose.yaw - rollout[i - 1].ego_pose.yaw) / dt;
    if (i >= 2 && std::abs(rate - prev_rate) > cfg.max_yaw_rate_change + 1e-9) return false;
    prev_speed = speed;
    prev_rate = rate;
  }
  return true;
}

RewardBreakdown score_pdms(const std::vector<WorldState>& rollout, const Polyline& route, double expert_progress,
                           const MetricConfig& cfg) {
  DYNVLA_EXPECT(!rollout.empty(), "score_pdms needs a non-empty rollout");
  DYNVLA_EXPECT(expert_progress >= 0.0, "expert progress must be non-negative");
  RewardBreakdown r;
  r.nc = has_collision(rollout) ? 0.0 : 1.0;
  r.dac = stays_drivable(rollout, cfg.dac_tolerance) ? 1.0 : 0.0;
  r.ttc = ttc_ok(rollout, cfg) ? 1.0 : 0.0;
  r.comfort = is_comfortable(rollout, cfg) ? 1.0 : 0.0;
  if (expert_progress < cfg.min_expert_progress) {
    r.ep = 1.0;
  } else {
    r.ep = std::clamp(route_progress(rollout, route) / expert_progress, 0.0, 1.0);
  }
  return compose_pdms(r);
}

double compute_ade(const Trajectory& pred, const Trajectory& gt) {
  DYNVLA_EXPECT(pred.size() == gt.size(), "ADE needs equal waypoint counts");
  if (pred.size() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    total += std::hypot(pred.waypoints[i].x - gt.waypoints[i].x, pred.waypoints[i].y - gt.waypoints[i].y);
  }
  return total / static_cast<double>(pred.size());
}

double compute_collision_rate(const std::vector<std::vector<WorldState>>& rollouts) {
  DYNVLA_EXPECT(!rollouts.empty(), "collision rate needs at least one rollout");
  const auto hits = std::count_if(rollouts.begin(), rollouts.end(), [](const auto& r) { return has_collision(r); });
  return static_cast<double>(hits) / static_cast<double>(rollouts.size());
}

}  // namespace dynvla::world
