#include <doctest.h>

#include <cmath>

#include "dynvla/common/error.hpp"
#include "dynvla/common/rng.hpp"
#include "dynvla/rft/group_math.hpp"
#include "dynvla/rft/rewards.hpp"
#include "dynvla/world/expert.hpp"

using namespace dynvla;
using namespace dynvla::rft;

namespace {

RewardSetup default_setup(double lambda_fmt = 1.0) {
  policy::SequenceSpec spec;
  return {policy::make_layout(spec, 64, 64), spec, {}, lambda_fmt};
}

std::vector<int> sequence_for(const world::Trajectory& plan, const RewardSetup& s) {
  policy::CotContent cot;
  cot.dynamics.steps = s.spec.horizon;
  cot.dynamics.n_ego = s.spec.n_ego;
  cot.dynamics.n_env = s.spec.n_env;
  cot.dynamics.ids.assign(static_cast<std::size_t>(s.spec.cot_content_length()), 0);
  return policy::build_target_sequence(s.layout, s.spec, cot, codec::encode_actions(plan, s.spec.codec).ids).tokens;
}

world::WorldState empty_road() {
  auto st = world::spawn_scenario(world::ScenarioKind::OpenRoad, 2);
  st.agents.clear();
  st.ego_speed = 4.0;
  st.desired_speed = 4.0;
  return st;
}

}  // namespace

TEST_CASE("format reward") {
  const auto s = default_setup();
  const auto ctx = make_scenario_context(empty_road());
  const auto good = sequence_for(world::expert_trajectory(ctx.state), s);
  CHECK(format_reward(good, s) == 1.0);
  auto cut = good;
  cut.pop_back();
  CHECK(format_reward(cut, s) == 0.0);
  auto misplaced = good;
  misplaced[2] = s.layout.action().lo;
  CHECK(format_reward(misplaced, s) == 0.0);
}

TEST_CASE("trajectory reward") {
  const auto s = default_setup();
  const auto ctx = make_scenario_context(empty_road());
  SUBCASE("expert tokens on an empty road") {
    CHECK(trajectory_reward(sequence_for(world::expert_trajectory(ctx.state), s), ctx, s) >= 0.9);
  }
  SUBCASE("head-on plan is gated to zero") {
    auto st = ctx.state;
    world::Agent oncoming;
    oncoming.pose = {st.ego_pose.x + 14.0, st.ego_pose.y, 3.141592653589793};
    oncoming.velocity = {-4.0, 0.0};
    oncoming.half_extents = world::kEgoHalfExtents;
    st.agents.push_back(oncoming);
    const ScenarioContext head_on{st, ctx.expert_progress};
    const auto tokens = sequence_for(world::expert_trajectory(ctx.state), s);
    const auto score = score_trajectory(tokens, head_on, s);
    CHECK(score.breakdown.nc == 0.0);
    CHECK(score.reward() == 0.0);
  }
  SUBCASE("unparseable action span") {
    std::vector<int> junk(32, policy::kPad);
    CHECK(trajectory_reward(junk, ctx, s) == 0.0);
    CHECK(total_reward(junk, ctx, s) == 0.0);
  }
}

TEST_CASE("total reward composition and bounds") {
  CHECK(total_reward(0.8, 1.0, 1.0) == doctest::Approx(1.8));
  CHECK(total_reward(0.8, 1.0, 0.0) == doctest::Approx(0.8));
  const auto s = default_setup(1.0);
  Rng rng(9);
  for (int i = 0; i < 10; ++i) {
    const auto st = world::spawn_scenario(world::kAllScenarioKinds[i % 5], static_cast<std::uint64_t>(i));
    const auto ctx = make_scenario_context(st);
    world::Trajectory plan;
    for (int k = 1; k <= 8; ++k) plan.waypoints.push_back({rng.uniform(0, 3) * k, rng.uniform(-0.3, 0.3) * k, 0.0});
    const double r = total_reward(sequence_for(plan, s), ctx, s);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0 + s.lambda_fmt);
  }
}

TEST_CASE("group advantages") {
  const std::vector<double> r{1, 0, 0, 1};
  const auto a = group_advantages(r);
  const std::vector<double> expect{1, -1, -1, 1};
  for (int i = 0; i < 4; ++i) CHECK(a[i] == doctest::Approx(expect[i]).epsilon(1e-7));
  for (double v : group_advantages(std::vector<double>{0.3, 0.3, 0.3, 0.3})) CHECK(v == 0.0);

  const std::vector<double> r3{0.2, 0.5, 0.8};
  const double mean = 0.5, sd = std::sqrt((0.09 + 0.0 + 0.09) / 3.0);
  const auto a3 = group_advantages(r3);
  for (int i = 0; i < 3; ++i) CHECK(a3[i] == doctest::Approx((r3[i] - mean) / (sd + 1e-8)).epsilon(1e-12));

  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> g(8);
    for (auto& v : g) v = rng.uniform(0, 2);
    const auto adv = group_advantages(g);
    double sum = 0.0, sq = 0.0;
    for (double v : adv) sum += v, sq += v * v;
    CHECK(std::abs(sum) < 1e-6);
    CHECK(sq / 8.0 == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("clipped token term") {
  CHECK(clipped_token_term(1.5, 1.0, 0.2) == doctest::Approx(1.2));
  CHECK(clipped_token_term(0.5, -1.0, 0.2) == doctest::Approx(-0.8));
  Rng rng(6);
  for (int i = 0; i < 1000; ++i) {
    const double rho = rng.uniform(0.0, 3.0), adv = rng.uniform(-2.0, 2.0);
    const double clipped = std::clamp(rho, 0.8, 1.2);
    const double t = clipped_token_term(rho, adv, 0.2);
    CHECK(t <= std::max(rho * adv, clipped * adv) + 1e-15);
    if (rho >= 0.8 && rho <= 1.2) CHECK(t == doctest::Approx(rho * adv));
  }
}

TEST_CASE("categorical KL") {
  const std::vector<double> p{0.9, 0.1}, q{0.5, 0.5};
  CHECK(categorical_kl(p, p) == 0.0);
  CHECK(categorical_kl(p, q) == doctest::Approx(0.9 * std::log(1.8) + 0.1 * std::log(0.2)).epsilon(1e-12));
  Rng rng(8);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> a(6), b(6);
    double sa = 0, sb = 0;
    for (int k = 0; k < 6; ++k) sa += a[k] = rng.uniform(0.01, 1), sb += b[k] = rng.uniform(0.01, 1);
    for (int k = 0; k < 6; ++k) a[k] /= sa, b[k] /= sb;
    CHECK(categorical_kl(a, b) >= 0.0);
  }
  const std::vector<double> bad{0.5, 0.6};
  CHECK_THROWS_AS(categorical_kl(bad, q), ContractViolation);
}

TEST_CASE("group objective") {
  RolloutGroup g;
  g.rewards = {1, 0, 0, 1};
  g.advantages = group_advantages(g.rewards);
  for (int i = 0; i < 4; ++i) {
    const std::size_t len = static_cast<std::size_t>(3 + i);
    g.sequences.push_back(std::vector<int>(len, 7));
    g.logp_current.push_back(std::vector<double>(len, -1.0));
    g.logp_old.push_back(std::vector<double>(len, -1.0));
    g.logp_ref.push_back(std::vector<double>(len, -1.2));
    g.token_kl.push_back(std::vector<double>(len, 0.05));
  }
  SUBCASE("on policy without KL is the mean advantage") {
    const auto v = grpo_objective(g, 0.2, 0.0);
    double mean = 0.0;
    for (double a : g.advantages) mean += a / 4.0;
    CHECK(v.value == doctest::Approx(mean).epsilon(1e-12));
    CHECK(v.clip_fraction == 0.0);
  }
  SUBCASE("KL is subtracted once") {
    const auto v = grpo_objective(g, 0.2, 0.5);
    CHECK(v.kl == doctest::Approx(0.05));
    CHECK(v.value == doctest::Approx(v.surrogate - 0.025));
  }
  SUBCASE("non-finite ratios are skipped and counted") {
    g.logp_old[0][1] = -INFINITY;
    const auto v = grpo_objective(g, 0.2, 0.0);
    CHECK(v.skipped_tokens == 1);
    CHECK(std::isfinite(v.value));
  }
}
