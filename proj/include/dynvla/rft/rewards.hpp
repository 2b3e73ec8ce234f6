#pragma once

#include <span>

#include "dynvla/policy/sequence.hpp"
#include "dynvla/world/metrics.hpp"

namespace dynvla::rft {

// A closed-loop scoring context: the decision-time state plus the progress
// the expert achieves from it.
struct ScenarioContext {
  world::WorldState state;
  double expert_progress = 0.0;
};

ScenarioContext make_scenario_context(const world::WorldState& state, const world::PlannerConfig& planner = {});

struct RewardSetup {
  policy::VocabLayout layout;
  policy::SequenceSpec spec;
  world::MetricConfig metrics;
  double lambda_fmt = 1.0;
};

double format_reward(std::span<const int> tokens, const RewardSetup& setup);

struct TrajectoryScore {
  bool action_parsed = false;
  world::RewardBreakdown breakdown;  // all zero when unparsed
  double reward() const { return breakdown.pdms; }
};

TrajectoryScore score_trajectory(std::span<const int> tokens, const ScenarioContext& ctx, const RewardSetup& setup);
double trajectory_reward(std::span<const int> tokens, const ScenarioContext& ctx, const RewardSetup& setup);

inline double total_reward(double r_traj, double r_fmt, double lambda_fmt) { return r_traj + lambda_fmt * r_fmt; }
double total_reward(std::span<const int> tokens, const ScenarioContext& ctx, const RewardSetup& setup);

// Plan scoring shared by the reward and the evaluation suites.
world::RewardBreakdown score_plan(const world::Trajectory& plan, const ScenarioContext& ctx,
                                  const world::MetricConfig& metrics = {});

}  // namespace dynvla::rft
