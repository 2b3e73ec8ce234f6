#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dynvla/world/geometry.hpp"

namespace dynvla::world {

enum class ScenarioKind { LeadVehicleStop, LateralCutIn, CurbAhead, OpenRoad, CrossingAgent };

inline constexpr ScenarioKind kAllScenarioKinds[] = {
    ScenarioKind::LeadVehicleStop, ScenarioKind::LateralCutIn, ScenarioKind::CurbAhead,
    ScenarioKind::OpenRoad, ScenarioKind::CrossingAgent};

std::string_view to_string(ScenarioKind kind);
// Accepts the hyphenated names ("lead-vehicle-stop", ...); "cut-in" is an
// alias for lateral-cut-in. Throws ConfigError on anything else.
ScenarioKind parse_scenario_kind(std::string_view name);

enum class Behavior { ConstantVelocity, StopAtTrigger, LaneChange };

// Scripted agent behaviour. Trigger times are absolute simulation seconds.
struct AgentScript {
  Behavior behavior = Behavior::ConstantVelocity;
  double trigger_time = 0.0;
  double decel = 0.0;          // StopAtTrigger, m/s^2
  double target_y = 0.0;       // LaneChange, world y of the target lane
  double lateral_speed = 0.0;  // LaneChange, m/s
};

struct Agent {
  Pose2 pose;
  Vec2 velocity;
  Vec2 half_extents;
  AgentScript script;

  OrientedBox footprint() const { return {pose.position(), pose.yaw, half_extents}; }
};

struct Marking {
  Segment segment;
  bool dashed = false;
};

struct Road {
  Polygon drivable;
  std::vector<Polyline> lane_centerlines;
  std::vector<Segment> curbs;
  std::vector<Marking> markings;
};

inline constexpr double kDefaultDt = 0.5;
inline constexpr double kLaneWidth = 3.5;
inline constexpr Vec2 kEgoHalfExtents{2.25, 1.0};

struct WorldState {
  int time_index = 0;
  double dt = kDefaultDt;
  Pose2 ego_pose;
  double ego_speed = 0.0;
  double ego_accel = 0.0;
  Vec2 ego_half_extents = kEgoHalfExtents;
  double desired_speed = 0.0;  // cruise target used by the expert
  std::vector<Agent> agents;
  Road road;
  Polyline route;
  ScenarioKind kind = ScenarioKind::OpenRoad;
  std::uint64_t seed = 0;

  double time() const { return time_index * dt; }
  OrientedBox ego_footprint() const { return {ego_pose.position(), ego_pose.yaw, ego_half_extents}; }
};

// Throws ContractViolation describing the first broken invariant.
void validate(const WorldState& state);

WorldState spawn_scenario(ScenarioKind kind, std::uint64_t seed);

// Exact kinematic advance of one scripted agent from absolute time t by h seconds.
Agent advance_agent(const Agent& agent, double t, double h);

// Ego follows `ego_delta`; agents follow their scripts. Out-of-road ego
// positions are allowed (metrics penalise them).
WorldState step_world(const WorldState& state, const EgoAction& ego_delta);

// Freezes every agent and the ego in place; used to build static scenes.
WorldState make_static(WorldState state);

}  // namespace dynvla::world
