#include "dynvla/rft/rewards.hpp"

namespace dynvla::rft {

ScenarioContext make_scenario_context(const world::WorldState& state, const world::PlannerConfig& planner) {
  const auto plan = world::expert_trajectory(state, planner);
  const auto rollout = world::rollout_trajectory(state, plan);
  return {state, world::route_progress(rollout, state.route)};
}

double format_reward(std::span<const int> tokens, const RewardSetup& setup) {
  return policy::parse_sequence(tokens, setup.layout, setup.spec).ok() ? 1.0 : 0.0;
}

world::RewardBreakdown score_plan(const world::Trajectory& plan, const ScenarioContext& ctx,
                                  const world::MetricConfig& metrics) {
  const auto rollout = world::rollout_trajectory(ctx.state, plan);
  return world::score_pdms(rollout, ctx.state.route, ctx.expert_progress, metrics);
}

TrajectoryScore score_trajectory(std::span<const int> tokens, const ScenarioContext& ctx, const RewardSetup& setup) {
  TrajectoryScore score;
  const auto ids = policy::parse_action_span(tokens, setup.layout, setup.spec);
  if (!ids) return score;
  score.action_parsed = true;
  score.breakdown = score_plan(codec::decode_actions(*ids, setup.spec.codec), ctx, setup.metrics);
  return score;
}

double trajectory_reward(std::span<const int> tokens, const ScenarioContext& ctx, const RewardSetup& setup) {
  return score_trajectory(tokens, ctx, setup).reward();
}

double total_reward(std::span<const int> tokens, const ScenarioContext& ctx, const RewardSetup& setup) {
  return total_reward(trajectory_reward(tokens, ctx, setup), format_reward(tokens, setup), setup.lambda_fmt);
}

}  // namespace dynvla::rft
