#include "dynvla/world/expert.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dynvla/common/error.hpp"

namespace dynvla::world {

namespace {

// Cubic Hermite lateral profile y(s) from (0, y0, slope0) to (length, y1, 0).
struct LateralProfile {
  double y0 = 0.0;
  double y1 = 0.0;
  double slope0 = 0.0;
  double length = 1.0;

  double y(double s) const {
    if (s >= length) return y1;
    const double t = std::max(s, 0.0) / length;
    const double h00 = 2 * t * t * t - 3 * t * t + 1;
    const double h10 = t * t * t - 2 * t * t + t;
    const double h01 = -2 * t * t * t + 3 * t * t;
    return h00 * y0 + h10 * length * slope0 + h01 * y1;
  }

  double slope(double s) const {
    if (s >= length) return 0.0;
    const double t = std::max(s, 0.0) / length;
    const double d00 = 6 * t * t - 6 * t;
    const double d10 = 3 * t * t - 4 * t + 1;
    const double d01 = -6 * t * t + 6 * t;
    return (d00 * y0 + d01 * y1) / length + d10 * slope0;
  }
};

// Lateral half-extent of a box along world y and longitudinal along world x.
double extent_y(const Vec2& half, double yaw) {
  return std::abs(std::sin(yaw)) * half.x + std::abs(std::cos(yaw)) * half.y;
}
double extent_x(const Vec2& half, double yaw) {
  return std::abs(std::cos(yaw)) * half.x + std::abs(std::sin(yaw)) * half.y;
}

double choose_target_lane(const WorldState& s, const PlannerConfig& cfg) {
  const double ego_x = s.ego_pose.x;
  const double route_y = s.route.front().y;
  double best_y = s.ego_pose.y;
  double best_cost = std::numeric_limits<double>::infinity();
  for (const Polyline& lane : s.road.lane_centerlines) {
    if (lane.size() < 2) continue;
    double end_x = -std::numeric_limits<double>::infinity();
    for (const Vec2& p : lane) end_x = std::max(end_x, p.x);
    if (end_x < ego_x + cfg.lane_lookahead) continue;
    const double lane_y = lane.front().y;
    const double cost = std::abs(lane_y - route_y);
    if (cost < best_cost) {
      best_cost = cost;
      best_y = lane_y;
    }
  }
  return best_y;
}

double idm_accel(const PlannerConfig& cfg, double v, double v_desired, double gap, double closing_speed) {
  const double s_star = cfg.min_gap + std::max(0.0, v * cfg.time_headway +
                                                         v * closing_speed /
                                                             (2.0 * std::sqrt(cfg.max_accel * cfg.comfort_decel)));
  const double ratio = s_star / std::max(gap, 0.1);
  const double free_term = v_desired > 0.05 ? std::pow(v / v_desired, 4) : 1.0;
  return cfg.max_accel * (1.0 - free_term - ratio * ratio);
}

}  // namespace

Trajectory expert_trajectory(const WorldState& state, const PlannerConfig& cfg) {
  DYNVLA_EXPECT(state.route.size() >= 2, "expert needs a route");
  const Pose2 origin = state.ego_pose;
  const double hl = state.ego_half_extents.x;
  const double hw = state.ego_half_extents.y;

  LateralProfile lateral;
  lateral.y0 = origin.y;
  lateral.y1 = choose_target_lane(state, cfg);
  lateral.slope0 = std::tan(std::clamp(origin.yaw, -1.0, 1.0));
  lateral.length = std::clamp(3.0 * std::max(state.ego_speed, 1.0), 10.0, 18.0);

  const int per_waypoint = static_cast<int>(std::lround(state.dt / cfg.substep));
  const double h = state.dt / per_waypoint;
  double x = origin.x;
  double v = state.ego_speed;
  double t = state.time();
  std::vector<Agent> agents = state.agents;

  Trajectory traj;
  traj.waypoints.reserve(cfg.waypoints);
  for (int wp = 0; wp < cfg.waypoints; ++wp) {
    for (int k = 0; k < per_waypoint; ++k) {
      const double s = x - origin.x;
      const double ego_y = lateral.y(s);

      double accel = state.desired_speed > 0.05
                         ? idm_accel(cfg, v, state.desired_speed, std::numeric_limits<double>::infinity(), 0.0)
                         : -std::min(cfg.comfort_decel, v / h);

      for (const Agent& a : agents) {
        const double ahead = a.pose.x - x;
        if (ahead <= 0.0) continue;
        bool in_corridor = false;
        for (double dt_look = 0.0; dt_look <= cfg.anticipation + 1e-9; dt_look += 0.5) {
          const Agent future = dt_look > 0.0 ? advance_agent(a, t, dt_look) : a;
          const double future_y = lateral.y(s + v * dt_look);
          if (std::abs(future.pose.y - future_y) <
              extent_y(future.half_extents, future.pose.yaw) + hw + cfg.corridor_margin) {
            in_corridor = true;
            break;
          }
        }
        if (!in_corridor) continue;
        const double gap = ahead - extent_x(a.half_extents, a.pose.yaw) - hl;
        accel = std::min(accel, idm_accel(cfg, v, std::max(state.desired_speed, 0.1), gap, v - a.velocity.x));
      }
      for (const Segment& curb : state.road.curbs) {
        const double cx = std::min(curb.a.x, curb.b.x);
        if (cx <= x) continue;
        const double lo = std::min(curb.a.y, curb.b.y), hi = std::max(curb.a.y, curb.b.y);
        if (ego_y + hw + cfg.corridor_margin < lo || ego_y - hw - cfg.corridor_margin > hi) continue;
        accel = std::min(accel, idm_accel(cfg, v, std::max(state.desired_speed, 0.1), cx - x - hl, v));
      }

      accel = std::clamp(accel, cfg.accel_floor, cfg.max_accel);
      const double v_next = std::max(0.0, v + accel * h);
      const double heading = std::atan(lateral.slope(s));
      x += 0.5 * (v + v_next) * h * std::cos(heading);
      v = v_next;
      for (Agent& a : agents) a = advance_agent(a, t, h);
      t += h;
    }
    const double s = x - origin.x;
    const Pose2 world{x, lateral.y(s), std::atan(lateral.slope(s))};
    traj.waypoints.push_back(to_local(origin, world));
  }
  return traj;
}

std::vector<WorldState> rollout_trajectory(const WorldState& state, const Trajectory& traj) {
  std::vector<WorldState> out;
  out.reserve(traj.size() + 1);
  out.push_back(state);
  const Pose2 origin = state.ego_pose;
  for (const Pose2& wp : traj.waypoints) {
    const Pose2 target = to_world(origin, wp);
    const WorldState& prev = out.back();
    out.push_back(step_world(prev, relative_motion(prev.ego_pose, target)));
  }
  return out;
}

double route_progress(const std::vector<WorldState>& rollout, const Polyline& route) {
  if (rollout.empty()) return 0.0;
  return arc_length_projection(route, rollout.back().ego_pose.position()) -
         arc_length_projection(route, rollout.front().ego_pose.position());
}

}  // namespace dynvla::world
