#include "dynvla/world/world.hpp"

#include <algorithm>
#include <cmath>

#include "dynvla/common/error.hpp"
#include "dynvla/common/rng.hpp"

namespace dynvla::world {

namespace {

constexpr double kRoadStart = -60.0;
constexpr double kRoadEnd = 300.0;
constexpr double kRightLaneY = -0.5 * kLaneWidth;
constexpr double kLeftLaneY = 0.5 * kLaneWidth;
constexpr Vec2 kCarHalfExtents{2.25, 1.0};
constexpr Vec2 kPedestrianHalfExtents{0.4, 0.4};

Road straight_two_lane_road() {
  Road road;
  road.drivable.vertices = {{kRoadStart, -kLaneWidth}, {kRoadEnd, -kLaneWidth},
                            {kRoadEnd, kLaneWidth}, {kRoadStart, kLaneWidth}};
  road.lane_centerlines = {{{kRoadStart, kRightLaneY}, {kRoadEnd, kRightLaneY}},
                           {{kRoadStart, kLeftLaneY}, {kRoadEnd, kLeftLaneY}}};
  road.markings = {{{{kRoadStart, 0.0}, {kRoadEnd, 0.0}}, true},
                   {{{kRoadStart, -kLaneWidth}, {kRoadEnd, -kLaneWidth}}, false},
                   {{{kRoadStart, kLaneWidth}, {kRoadEnd, kLaneWidth}}, false}};
  return road;
}

// Right lane ends at x = curb_x.
Road narrowing_road(double curb_x) {
  Road road;
  road.drivable.vertices = {{kRoadStart, -kLaneWidth}, {curb_x, -kLaneWidth}, {curb_x, 0.0},
                            {kRoadEnd, 0.0},           {kRoadEnd, kLaneWidth},   {kRoadStart, kLaneWidth}};
  road.lane_centerlines = {{{kRoadStart, kRightLaneY}, {curb_x, kRightLaneY}},
                           {{kRoadStart, kLeftLaneY}, {kRoadEnd, kLeftLaneY}}};
  road.curbs = {{{curb_x, -kLaneWidth}, {curb_x, 0.0}}};
  road.markings = {{{{kRoadStart, 0.0}, {curb_x, 0.0}}, true},
                   {{{curb_x, 0.0}, {kRoadEnd, 0.0}}, false},
                   {{{kRoadStart, -kLaneWidth}, {curb_x, -kLaneWidth}}, false},
                   {{{kRoadStart, kLaneWidth}, {kRoadEnd, kLaneWidth}}, false},
                   {road.curbs.front(), false}};
  return road;
}

Agent car(double x, double y, double speed, AgentScript script = {}) {
  Agent a;
  a.pose = {x, y, 0.0};
  a.velocity = {speed, 0.0};
  a.half_extents = kCarHalfExtents;
  a.script = script;
  return a;
}

double heading_of(Vec2 v, double fallback) {
  return norm(v) > 1e-9 ? std::atan2(v.y, v.x) : fallback;
}

}  // namespace

std::string_view to_string(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::LeadVehicleStop: return "lead-vehicle-stop";
    case ScenarioKind::LateralCutIn: return "lateral-cut-in";
    case ScenarioKind::CurbAhead: return "curb-ahead";
    case ScenarioKind::OpenRoad: return "open-road";
    case ScenarioKind::CrossingAgent: return "crossing-agent";
  }
  return "unknown";
}

ScenarioKind parse_scenario_kind(std::string_view name) {
  for (ScenarioKind k : kAllScenarioKinds) {
    if (to_string(k) == name) return k;
  }
  if (name == "cut-in") return ScenarioKind::LateralCutIn;
  throw ConfigError("unknown scenario kind: " + std::string(name));
}

void validate(const WorldState& state) {
  DYNVLA_EXPECT(state.dt > 0.0, "dt must be positive");
  DYNVLA_EXPECT(state.ego_half_extents.x > 0.0 && state.ego_half_extents.y > 0.0,
                "ego half-extents must be positive");
  for (const Agent& a : state.agents) {
    DYNVLA_EXPECT(a.half_extents.x > 0.0 && a.half_extents.y > 0.0,
                  "agent half-extents must be positive");
  }
  DYNVLA_EXPECT(state.road.drivable.is_simple(), "drivable polygon must be simple");
  DYNVLA_EXPECT(state.route.size() >= 2, "route needs at least two vertices");
}

WorldState spawn_scenario(ScenarioKind kind, std::uint64_t seed) {
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(kind)));
  WorldState s;
  s.kind = kind;
  s.seed = seed;
  s.ego_pose = {0.0, kRightLaneY, 0.0};
  s.road = straight_two_lane_road();
  s.route = {{kRoadStart, kRightLaneY}, {kRoadEnd, kRightLaneY}};

  switch (kind) {
    case ScenarioKind::OpenRoad: {
      if (rng.bernoulli(0.15)) {
        s.ego_speed = 0.0;
        s.desired_speed = 0.0;
      } else {
        s.ego_speed = rng.uniform(1.0, 6.0);
        s.desired_speed = std::clamp(s.ego_speed + rng.uniform(-1.0, 1.0), 1.0, 6.0);
      }
      const auto n = rng.below(3);
      std::vector<double> placed;
      for (std::uint64_t i = 0; i < n; ++i) {
        const double x = rng.uniform(-12.0, 25.0);
        const double v = rng.uniform(0.0, 6.0);
        const bool clear = std::none_of(placed.begin(), placed.end(),
                                        [&](double p) { return std::abs(p - x) < 7.0; });
        if (!clear) continue;
        placed.push_back(x);
        s.agents.push_back(car(x, kLeftLaneY, v));
      }
      break;
    }
    case ScenarioKind::LeadVehicleStop: {
      s.ego_speed = rng.uniform(2.0, 6.0);
      s.desired_speed = s.ego_speed;
      const double x = rng.uniform(12.0, 22.0);
      const double v = std::min(6.0, rng.uniform(std::max(1.0, s.ego_speed - 1.5), s.ego_speed + 0.5));
      AgentScript script{Behavior::StopAtTrigger, rng.uniform(0.5, 3.0), rng.uniform(1.5, 3.0)};
      s.agents.push_back(car(x, kRightLaneY, v, script));
      break;
    }
    case ScenarioKind::LateralCutIn: {
      s.ego_speed = rng.uniform(2.0, 6.0);
      s.desired_speed = s.ego_speed;
      const double x = rng.uniform(7.0, 14.0);
      const double v = std::min(6.0, rng.uniform(std::max(1.0, s.ego_speed - 1.0), s.ego_speed + 0.5));
      AgentScript script;
      script.behavior = Behavior::LaneChange;
      script.trigger_time = rng.uniform(0.5, 2.0);
      script.target_y = kRightLaneY;
      script.lateral_speed = rng.uniform(0.8, 1.2);
      s.agents.push_back(car(x, kLeftLaneY, v, script));
      break;
    }
    case ScenarioKind::CurbAhead: {
      s.ego_speed = rng.uniform(1.0, 4.0);
      s.desired_speed = s.ego_speed;
      s.road = narrowing_road(rng.uniform(15.0, 20.0));
      break;
    }
    case ScenarioKind::CrossingAgent: {
      s.ego_speed = rng.uniform(2.0, 6.0);
      s.desired_speed = s.ego_speed;
      const double x = rng.uniform(14.0, 24.0);
      const double dir = rng.bernoulli(0.5) ? 1.0 : -1.0;
      Agent ped;
      ped.pose = {x, -dir * 5.0, dir * 0.5 * 3.141592653589793};
      ped.velocity = {0.0, dir * rng.uniform(1.0, 1.6)};
      ped.half_extents = kPedestrianHalfExtents;
      s.agents.push_back(ped);
      break;
    }
  }
  return s;
}

Agent advance_agent(const Agent& agent, double t, double h) {
  Agent a = agent;
  const AgentScript& sc = a.script;
  switch (sc.behavior) {
    case Behavior::ConstantVelocity: {
      a.pose.x += a.velocity.x * h;
      a.pose.y += a.velocity.y * h;
      break;
    }
    case Behavior::StopAtTrigger: {
      double speed = norm(a.velocity);
      const Vec2 dir = speed > 0.0 ? (1.0 / speed) * a.velocity : Vec2{std::cos(a.pose.yaw), std::sin(a.pose.yaw)};
      const double cruise = std::clamp(sc.trigger_time - t, 0.0, h);
      double travel = speed * cruise;
      const double braking = std::min(h - cruise, sc.decel > 0.0 ? speed / sc.decel : 0.0);
      if (sc.decel > 0.0 && braking > 0.0) {
        travel += speed * braking - 0.5 * sc.decel * braking * braking;
        speed = std::max(0.0, speed - sc.decel * braking);
      }
      if (sc.decel > 0.0 && t + h >= sc.trigger_time && speed < 1e-12) speed = 0.0;
      a.pose.x += dir.x * travel;
      a.pose.y += dir.y * travel;
      a.velocity = speed * dir;
      break;
    }
    case Behavior::LaneChange: {
      a.pose.x += a.velocity.x * h;
      const double before = std::clamp(sc.trigger_time - t, 0.0, h);
      const double remaining = sc.target_y - a.pose.y;
      double vy = 0.0;
      if (std::abs(remaining) > 0.0 && sc.lateral_speed > 0.0) {
        const double window = h - before;
        const double needed = std::abs(remaining) / sc.lateral_speed;
        const double moved = std::min(window, needed) * sc.lateral_speed;
        a.pose.y += std::copysign(moved, remaining);
        if (window > 0.0 && needed > window) vy = std::copysign(sc.lateral_speed, remaining);
        if (window <= 0.0) vy = 0.0;
      }
      a.velocity.y = vy;
      break;
    }
  }
  a.pose.yaw = heading_of(a.velocity, a.pose.yaw);
  return a;
}

WorldState step_world(const WorldState& state, const EgoAction& ego_delta) {
  WorldState next = state;
  next.time_index = state.time_index + 1;
  next.ego_pose = compose(state.ego_pose, ego_delta);
  next.ego_speed = std::hypot(ego_delta.dx, ego_delta.dy) / state.dt;
  next.ego_accel = (next.ego_speed - state.ego_speed) / state.dt;
  for (Agent& a : next.agents) a = advance_agent(a, state.time(), state.dt);
  return next;
}

WorldState make_static(WorldState state) {
  state.ego_speed = 0.0;
  state.ego_accel = 0.0;
  state.desired_speed = 0.0;
  for (Agent& a : state.agents) {
    a.velocity = {0.0, 0.0};
    a.script = AgentScript{};
  }
  return state;
}

}  // namespace dynvla::world
