#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dynvla/common/error.hpp"
#include "dynvla/common/rng.hpp"
#include "dynvla/world/dataset.hpp"
#include "dynvla/world/expert.hpp"
#include "dynvla/world/metrics.hpp"
#include "dynvla/world/render.hpp"

using namespace dynvla;
using namespace dynvla::world;
namespace fs = std::filesystem;

namespace {

bool same_state(const WorldState& a, const WorldState& b) {
  if (!(a.ego_pose == b.ego_pose) || a.ego_speed != b.ego_speed || a.agents.size() != b.agents.size()) return false;
  for (std::size_t i = 0; i < a.agents.size(); ++i) {
    if (!(a.agents[i].pose == b.agents[i].pose) || !(a.agents[i].velocity == b.agents[i].velocity)) return false;
  }
  return a.road.drivable.vertices == b.road.drivable.vertices && a.route == b.route;
}

WorldState empty_road() {
  auto s = spawn_scenario(ScenarioKind::OpenRoad, 0);
  s.agents.clear();
  s.ego_speed = 3.0;
  s.desired_speed = 3.0;
  return s;
}

Trajectory straight(double step, int n = 8) {
  Trajectory t;
  for (int i = 1; i <= n; ++i) t.waypoints.push_back({step * i, 0.0, 0.0});
  return t;
}

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("dynvla_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("spawn is deterministic per kind and seed") {
  for (auto kind : kAllScenarioKinds) {
    CHECK(same_state(spawn_scenario(kind, 0), spawn_scenario(kind, 0)));
    CHECK_NOTHROW(validate(spawn_scenario(kind, 42)));
  }
  CHECK_THROWS_AS(parse_scenario_kind("roundabout"), ConfigError);
  CHECK(parse_scenario_kind("cut-in") == ScenarioKind::LateralCutIn);
}

TEST_CASE("lead-vehicle-stop has exactly one agent ahead on the route") {
  const auto s = spawn_scenario(ScenarioKind::LeadVehicleStop, 7);
  int ahead_on_route = 0;
  for (const auto& a : s.agents) {
    const Vec2 local = to_local(s.ego_pose, a.pose.position());
    double d = INFINITY;
    for (std::size_t i = 0; i + 1 < s.route.size(); ++i) d = std::min(d, distance_to_segment(a.pose.position(), {s.route[i], s.route[i + 1]}));
    if (local.x > 0.0 && d < 0.5 * kLaneWidth) ++ahead_on_route;
  }
  CHECK(ahead_on_route == 1);
}

TEST_CASE("curb-ahead puts a curb across the route within 20 m") {
  const auto s = spawn_scenario(ScenarioKind::CurbAhead, 3);
  bool hit = false;
  for (const auto& curb : s.road.curbs) {
    for (std::size_t i = 0; i + 1 < s.route.size(); ++i) {
      if (!segments_intersect(curb, {s.route[i], s.route[i + 1]})) continue;
      const double along = to_local(s.ego_pose, 0.5 * (curb.a + curb.b)).x;
      hit = hit || (along > 0.0 && along <= 20.0);
    }
  }
  CHECK(hit);
}

TEST_CASE("step_world kinematics") {
  auto s = spawn_scenario(ScenarioKind::OpenRoad, 1);
  s.agents.clear();
  SUBCASE("zero delta keeps the ego in place") {
    const auto n = step_world(s, {0, 0, 0});
    CHECK(n.ego_pose == s.ego_pose);
    CHECK(n.time_index == s.time_index + 1);
  }
  SUBCASE("unit forward delta moves one metre along the heading") {
    s.ego_pose.yaw = 0.3;
    const auto n = step_world(s, {1, 0, 0});
    CHECK(n.ego_pose.x - s.ego_pose.x == doctest::Approx(std::cos(0.3)).epsilon(1e-12));
    CHECK(n.ego_pose.y - s.ego_pose.y == doctest::Approx(std::sin(0.3)).epsilon(1e-12));
  }
  SUBCASE("constant-velocity agent moves 3 v dt in three steps") {
    Agent a;
    a.pose = {10, 1.75, 0};
    a.velocity = {2.5, 0.0};
    a.half_extents = {2.25, 1.0};
    s.agents.push_back(a);
    auto n = s;
    for (int i = 0; i < 3; ++i) n = step_world(n, {0, 0, 0});
    CHECK(n.agents[0].pose.x - 10.0 == doctest::Approx(3 * 2.5 * s.dt).epsilon(1e-12));
  }
}

TEST_CASE("episode deltas compose to the final pose") {
  const auto states = simulate_states(ScenarioKind::LateralCutIn, 11, 12);
  Pose2 p = states.front().ego_pose;
  for (std::size_t i = 0; i + 1 < states.size(); ++i) p = compose(p, relative_motion(states[i].ego_pose, states[i + 1].ego_pose));
  CHECK(std::abs(p.x - states.back().ego_pose.x) < 1e-9);
  CHECK(std::abs(p.y - states.back().ego_pose.y) < 1e-9);
}

TEST_CASE("rendering") {
  const auto s = empty_road();
  const auto bev = render_bev(s);
  SUBCASE("an empty world has no agent cells") {
    for (auto c : bev.data) CHECK(c != kBevAgent);
    CHECK(class_centroid(bev, kBevEgo).has_value());
  }
  SUBCASE("deterministic") {
    CHECK(render_bev(s) == bev);
    CHECK(render_observation(s) == render_observation(s));
  }
  SUBCASE("agent lands on the predicted cells") {
    auto t = s;
    Agent a;
    a.pose = {s.ego_pose.x + 8.0, s.ego_pose.y + 4.0, 0.0};
    a.half_extents = {1.0, 1.0};
    t.agents.push_back(a);
    const auto b = render_bev(t);
    RenderConfig rc;
    // Up is forward, columns grow to the right; the agent is 8 m ahead, 4 m left.
    const double mpc = rc.bev_meters_per_cell();
    const double row = rc.bev_size / 2.0 - 8.0 / mpc, col = rc.bev_size / 2.0 - 4.0 / mpc;
    const auto c = class_centroid(b, kBevAgent);
    REQUIRE(c.has_value());
    CHECK(std::abs(c->x - (row - 0.5)) <= 0.5);
    CHECK(std::abs(c->y - (col - 0.5)) <= 0.5);
  }
}

TEST_CASE("expert planner") {
  SUBCASE("empty road keeps the lane centreline") {
    const auto s = empty_road();
    const auto plan = expert_trajectory(s);
    CHECK(plan.size() == 8);
    for (const auto& w : plan.waypoints) CHECK(std::abs(to_world(s.ego_pose, w).y - s.ego_pose.y) < 1e-6);
    CHECK(expert_trajectory(s) == plan);
  }
  SUBCASE("stopped lead vehicle 8 m ahead brings the plan to a halt") {
    auto s = empty_road();
    s.ego_speed = 2.0;
    Agent lead;
    lead.pose = {s.ego_pose.x + 8.0, s.ego_pose.y, 0.0};
    lead.half_extents = kEgoHalfExtents;
    s.agents.push_back(lead);
    const auto plan = expert_trajectory(s);
    const auto& a = plan.waypoints[6];
    const auto& b = plan.waypoints[7];
    CHECK(std::hypot(b.x - a.x, b.y - a.y) < 0.1);
  }
  SUBCASE("expert scores full marks on every scenario kind") {
    for (auto kind : kAllScenarioKinds) {
      for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto s = spawn_scenario(kind, seed);
        const auto plan = expert_trajectory(s);
        const auto roll = rollout_trajectory(s, plan);
        const auto b = score_pdms(roll, s.route, route_progress(roll, s.route));
        CHECK(b.pdms >= 0.9);
      }
    }
  }
}

TEST_CASE("rollout replay") {
  const auto s = empty_road();
  SUBCASE("zero plan keeps the ego") {
    Trajectory zero;
    zero.waypoints.assign(8, Pose2{});
    const auto roll = rollout_trajectory(s, zero);
    CHECK(roll.size() == 9);
    for (const auto& r : roll) CHECK(r.ego_pose == s.ego_pose);
  }
  SUBCASE("straight plan lands on its waypoints") {
    const auto plan = straight(1.5);
    const auto roll = rollout_trajectory(s, plan);
    for (std::size_t i = 0; i < plan.size(); ++i) {
      const auto w = to_world(s.ego_pose, plan.waypoints[i]);
      CHECK(roll[i + 1].ego_pose.x == doctest::Approx(w.x).epsilon(1e-12));
      CHECK(roll[i + 1].ego_pose.y == doctest::Approx(w.y).epsilon(1e-12));
    }
    const auto again = rollout_trajectory(s, plan);
    CHECK(again.back().ego_pose == roll.back().ego_pose);
  }
}

TEST_CASE("pdms composition") {
  CHECK(compose_pdms(1, 1, 1, 1, 1) == doctest::Approx(1.0));
  CHECK(compose_pdms(0, 1, 1, 1, 1) == 0.0);
  CHECK(compose_pdms(1, 0, 1, 1, 1) == 0.0);
  CHECK(std::abs(compose_pdms(1, 1, 1, 0.999, 0.875) - 0.9478) <= 1e-3);

  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double nc = rng.bernoulli(0.5), dac = rng.bernoulli(0.8), ttc = rng.uniform(), c = rng.uniform(),
                 ep = rng.uniform();
    const double oracle = nc * dac * (5.0 * ep + 5.0 * ttc + 2.0 * c) / 12.0;
    CHECK(std::abs(compose_pdms(nc, dac, ttc, c, ep) - oracle) <= 1e-12);
    // Raising one subscore never lowers the total.
    CHECK(compose_pdms(nc, dac, ttc, c, std::min(1.0, ep + 0.1)) >= compose_pdms(nc, dac, ttc, c, ep));
    CHECK(compose_pdms(nc, dac, std::min(1.0, ttc + 0.1), c, ep) >= compose_pdms(nc, dac, ttc, c, ep));
  }
}

TEST_CASE("head-on plan scores zero") {
  auto s = empty_road();
  Agent oncoming;
  oncoming.pose = {s.ego_pose.x + 12.0, s.ego_pose.y, 3.141592653589793};
  oncoming.velocity = {-4.0, 0.0};
  oncoming.half_extents = kEgoHalfExtents;
  s.agents.push_back(oncoming);
  const auto roll = rollout_trajectory(s, straight(1.5));
  const auto b = score_pdms(roll, s.route, 10.0);
  CHECK(b.nc == 0.0);
  CHECK(b.pdms == 0.0);
}

TEST_CASE("ADE") {
  const auto a = straight(1.0);
  CHECK(compute_ade(a, a) == 0.0);
  auto b = a;
  for (auto& w : b.waypoints) w.x += 1.0;
  CHECK(compute_ade(a, b) == doctest::Approx(1.0));
  Rng rng(3);
  Trajectory p, q;
  double oracle = 0.0;
  for (int i = 0; i < 8; ++i) {
    p.waypoints.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5), 0});
    q.waypoints.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5), 0});
    oracle += std::sqrt(std::pow(p.waypoints[i].x - q.waypoints[i].x, 2) + std::pow(p.waypoints[i].y - q.waypoints[i].y, 2));
  }
  CHECK(compute_ade(p, q) == doctest::Approx(oracle / 8).epsilon(1e-12));
  CHECK(compute_ade(p, q) == compute_ade(q, p));
  Trajectory shorter = q;
  shorter.waypoints.pop_back();
  CHECK_THROWS_AS(compute_ade(p, shorter), ContractViolation);
}

TEST_CASE("collision rate counts rollouts with any overlap") {
  auto s = empty_road();
  const auto clear = rollout_trajectory(s, straight(1.0));
  auto blocked_state = s;
  Agent wall;
  wall.pose = {s.ego_pose.x + 3.0, s.ego_pose.y, 0.0};
  wall.half_extents = {1.0, 1.0};
  blocked_state.agents.push_back(wall);
  const auto hit = rollout_trajectory(blocked_state, straight(1.0));
  REQUIRE(has_collision(hit));
  REQUIRE_FALSE(has_collision(clear));
  CHECK(compute_collision_rate({clear, clear}) == 0.0);
  CHECK(compute_collision_rate({hit, hit}) == 1.0);
  std::vector<std::vector<WorldState>> ten(7, clear);
  for (int i = 0; i < 3; ++i) ten.push_back(hit);
  CHECK(compute_collision_rate(ten) == doctest::Approx(0.3));
}

TEST_CASE("dataset generation") {
  DatasetConfig cfg;
  cfg.episodes = 10;
  cfg.frames = 4;
  const auto d1 = temp_dir("ds1"), d2 = temp_dir("ds2");
  const auto m1 = generate_dataset(cfg, 1, d1);
  generate_dataset(cfg, 1, d2);
  CHECK(m1.entries.size() == 10);
  for (const auto& e : m1.entries) CHECK(e.frames == 4);
  CHECK(slurp(d1 / "manifest.txt") == slurp(d2 / "manifest.txt"));
  CHECK(Manifest::parse(m1.to_text()).to_text() == m1.to_text());

  const auto eps = load_dataset(d1);
  REQUIRE(eps.size() == 10);
  const auto direct = simulate_episode(eps[3].kind, eps[3].seed, cfg);
  CHECK(direct.observations == eps[3].observations);
  CHECK(direct.bevs == eps[3].bevs);
  CHECK(direct.expert == eps[3].expert);
  for (const auto& ep : eps) {
    CHECK(ep.bevs.size() == ep.size());
    CHECK(ep.expert.size() == ep.size());
    CHECK(ep.ego_actions.size() == ep.size());
    CHECK(ep.pair_next_observations.size() == ep.size());
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("scenario mix sampling matches its weights") {
  DatasetConfig cfg;
  cfg.episodes = 100;
  cfg.mix = {{ScenarioKind::OpenRoad, 0.5}, {ScenarioKind::LateralCutIn, 0.5}};
  int open = 0;
  for (const auto& [k, s] : plan_episodes(cfg, 1)) {
    CHECK((k == ScenarioKind::OpenRoad || k == ScenarioKind::LateralCutIn));
    open += k == ScenarioKind::OpenRoad;
  }
  // Binomial(100, 0.5): 4 standard deviations either side.
  CHECK(std::abs(open - 50) <= 20);
}

TEST_CASE("unwritable dataset directory is an I/O error") {
  DatasetConfig cfg;
  cfg.episodes = 1;
  cfg.frames = 2;
  const auto file = temp_dir("blocker");
  { std::ofstream(file) << "x"; }
  CHECK_THROWS_AS(generate_dataset(cfg, 1, file / "sub"), IoError);
  fs::remove_all(file);
}
