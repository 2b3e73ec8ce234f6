#include "dynvla/harness/policy_eval.hpp"

#include <map>

#include "dynvla/codec/action_codec.hpp"
#include "dynvla/common/error.hpp"
#include "dynvla/common/rng.hpp"

namespace dynvla::harness {

PlannedBatch plan_with_policy(policy::PolicyImpl& policy, const std::vector<policy::PolicyContext>& contexts,
                              const DecodeSetup& setup) {
  PlannedBatch out;
  for (std::size_t start = 0; start < contexts.size(); start += static_cast<std::size_t>(setup.batch)) {
    const auto end = std::min(contexts.size(), start + static_cast<std::size_t>(setup.batch));
    const std::vector<policy::PolicyContext> chunk(contexts.begin() + static_cast<std::ptrdiff_t>(start),
                                                   contexts.begin() + static_cast<std::ptrdiff_t>(end));
    auto sampling = setup.sampling;
    sampling.seed = mix_seed(setup.sampling.seed, start);
    const auto gen = policy::generate(policy, policy::make_context_batch(chunk), sampling, &setup.layout, &setup.spec);
    for (const auto& seq : gen.tokens) {
      const auto ids = policy::parse_action_span(seq, setup.layout, setup.spec);
      out.plans.push_back(ids ? std::optional(codec::decode_actions(*ids, setup.spec.codec)) : std::nullopt);
      out.tokens.push_back(seq);
    }
  }
  return out;
}

std::vector<policy::PolicyContext> suite_contexts(const std::vector<Scenario>& suite) {
  std::vector<policy::PolicyContext> ctx;
  ctx.reserve(suite.size());
  for (const auto& s : suite) ctx.push_back({&s.obs_prev, &s.obs_t, s.summary});
  return ctx;
}

ClosedLoopReport run_eval_closedloop(policy::PolicyImpl& policy, const std::vector<Scenario>& suite,
                                     const policy::VocabLayout& layout, const policy::SequenceSpec& spec,
                                     const world::MetricConfig& metrics) {
  torch::NoGradGuard guard;
  DecodeSetup setup{layout, spec, {}, 25};
  const auto planned = plan_with_policy(policy, suite_contexts(suite), setup);
  return score_closed_loop(suite, planned.plans, metrics);
}

OpenLoopReport run_eval_openloop(policy::PolicyImpl& policy, const std::vector<policy::SftSample>& samples,
                                 const policy::VocabLayout& layout, const policy::SequenceSpec& spec,
                                 const world::PlannerConfig& planner) {
  torch::NoGradGuard guard;
  DecodeSetup setup{layout, spec, {}, 25};
  setup.sampling.constrained = true;
  std::vector<policy::PolicyContext> ctx;
  for (const auto& s : samples) ctx.push_back(s.ctx);
  const auto planned = plan_with_policy(policy, ctx, setup);

  std::map<const world::EpisodeRecord*, std::vector<world::WorldState>> states;
  std::map<const world::EpisodeRecord*, int> episode_index;
  std::vector<OpenLoopRow> rows;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto* ep = samples[i].episode;
    DYNVLA_EXPECT(ep != nullptr, "open-loop sample without its episode");
    auto it = states.find(ep);
    if (it == states.end()) {
      it = states.emplace(ep, world::simulate_states(ep->kind, ep->seed, static_cast<int>(ep->size()), planner)).first;
      episode_index.emplace(ep, static_cast<int>(episode_index.size()));
    }
    auto row = score_open_loop_sample(it->second.at(static_cast<std::size_t>(samples[i].frame)), planned.plans[i],
                                      samples[i].expert);
    row.episode = episode_index[ep];
    row.frame = samples[i].frame;
    rows.push_back(row);
  }
  return OpenLoopReport::from_rows(std::move(rows));
}

rft::RftTask make_driving_task(const std::vector<Scenario>& pool, const rft::RewardSetup& reward) {
  DYNVLA_EXPECT(!pool.empty(), "RFT scenario pool must not be empty");
  rft::RftTask task;
  task.num_contexts = pool.size();
  task.max_length = static_cast<int>(reward.spec.length());
  task.stop_token = policy::kEoa;
  task.contexts = [&pool](std::span<const std::size_t> ids) {
    std::vector<policy::PolicyContext> ctx;
    for (auto i : ids) ctx.push_back({&pool[i].obs_prev, &pool[i].obs_t, pool[i].summary});
    return policy::make_context_batch(ctx);
  };
  task.reward = [&pool, reward](std::size_t i, const std::vector<int>& tokens) {
    rft::RolloutReward r;
    const double fmt = rft::format_reward(tokens, reward);
    r.trajectory = rft::trajectory_reward(tokens, pool[i].ctx, reward);
    r.format_ok = fmt > 0.5;
    r.total = rft::total_reward(r.trajectory, fmt, reward.lambda_fmt);
    return r;
  };
  return task;
}

}  // namespace dynvla::harness
