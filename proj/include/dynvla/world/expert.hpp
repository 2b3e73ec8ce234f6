#pragma once

#include <vector>

#include "dynvla/world/world.hpp"

namespace dynvla::world {

// Waypoints in the ego frame at decision time, spaced `state.dt` apart.
struct Trajectory {
  std::vector<Pose2> waypoints;

  std::size_t size() const { return waypoints.size(); }
  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

struct PlannerConfig {
  int waypoints = 8;
  double substep = 0.1;
  // Intelligent-driver-model longitudinal control.
  double max_accel = 1.5;
  double comfort_decel = 2.5;
  double min_gap = 2.5;
  double time_headway = 1.2;
  double accel_floor = -4.0;
  // Agents that will enter the ego corridor within this many seconds are
  // treated as leaders.
  double anticipation = 5.0;
  double corridor_margin = 0.3;
  // Lanes whose centreline ends within this distance are considered closed.
  double lane_lookahead = 40.0;
};

// Route-following IDM planner with lane selection around closed lanes.
// Agents are predicted with their true scripts.
Trajectory expert_trajectory(const WorldState& state, const PlannerConfig& cfg = {});

// Kinematic replay: the ego tracks the waypoints exactly while agents follow
// their scripts. Returns traj.size() + 1 states, starting with `state`.
std::vector<WorldState> rollout_trajectory(const WorldState& state, const Trajectory& traj);

// Ego progress along the route between the first and last rollout state.
double route_progress(const std::vector<WorldState>& rollout, const Polyline& route);

}  // namespace dynvla::world
