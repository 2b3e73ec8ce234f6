#pragma once

#include <optional>
#include <vector>

#include "dynvla/harness/eval.hpp"
#include "dynvla/policy/model.hpp"
#include "dynvla/policy/train.hpp"
#include "dynvla/rft/train.hpp"

namespace dynvla::harness {

struct DecodeSetup {
  policy::VocabLayout layout;
  policy::SequenceSpec spec;
  policy::SamplingConfig sampling;  // greedy unless changed
  int batch = 25;
};

struct PlannedBatch {
  std::vector<std::vector<int>> tokens;
  std::vector<std::optional<world::Trajectory>> plans;  // empty when the action span does not parse
};

PlannedBatch plan_with_policy(policy::PolicyImpl& policy, const std::vector<policy::PolicyContext>& contexts,
                              const DecodeSetup& setup);

std::vector<policy::PolicyContext> suite_contexts(const std::vector<Scenario>& suite);

// Greedy unconstrained decoding; malformed outputs score zero.
ClosedLoopReport run_eval_closedloop(policy::PolicyImpl& policy, const std::vector<Scenario>& suite,
                                     const policy::VocabLayout& layout, const policy::SequenceSpec& spec,
                                     const world::MetricConfig& metrics = {});

// Greedy constrained decoding against the expert plan of each sample.
OpenLoopReport run_eval_openloop(policy::PolicyImpl& policy, const std::vector<policy::SftSample>& samples,
                                 const policy::VocabLayout& layout, const policy::SequenceSpec& spec,
                                 const world::PlannerConfig& planner = {});

// RFT over a scenario pool with the format-and-trajectory reward.
rft::RftTask make_driving_task(const std::vector<Scenario>& pool, const rft::RewardSetup& reward);

}  // namespace dynvla::harness
