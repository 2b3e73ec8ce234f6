#include <doctest.h>

#include <cmath>

#include "dynvla/common/error.hpp"
#include "dynvla/common/rng.hpp"
#include "dynvla/nn/train_util.hpp"
#include "dynvla/rft/bandit.hpp"
#include "dynvla/rft/group_math.hpp"

using namespace dynvla;
using namespace dynvla::rft;

namespace {

torch::Tensor logp_of(double ratio) { return torch::full({1, 1}, std::log(ratio), torch::kDouble); }

RftConfig bandit_config(int steps) {
  RftConfig c;
  c.group = 32;
  c.contexts_per_step = 4;
  c.beta = 1e-3;
  c.seed = 11;
  c.optim.max_lr = 5e-4;
  c.optim.warmup = 10;
  c.optim.total = steps;
  c.optim.weight_decay = 0.0;
  return c;
}

// Bandit scores with a pool of distinct random contexts.
RftTask many_contexts(const BanditTask& bandit, int count, std::uint64_t seed) {
  torch::manual_seed(seed);
  policy::ContextBatch pool;
  pool.obs_prev = torch::rand({count, 16, 16, 3});
  pool.obs_t = torch::rand({count, 16, 16, 3});
  pool.state = torch::randn({count, policy::kStateFeatures});
  RftTask task = bandit.as_task();
  task.num_contexts = static_cast<std::size_t>(count);
  task.contexts = [pool](std::span<const std::size_t> ids) {
    std::vector<std::int64_t> rows(ids.begin(), ids.end());
    return pool.index(torch::tensor(rows, torch::kLong));
  };
  return task;
}

policy::ContextBatch all_contexts(const RftTask& task) {
  std::vector<std::size_t> ids(task.num_contexts);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  return task.contexts(ids);
}

policy::SamplingConfig greedy(int length) {
  policy::SamplingConfig s;
  s.max_length = length;
  s.stop_token = -1;
  return s;
}

}  // namespace

TEST_CASE("rft config validation") {
  RftConfig c;
  CHECK_NOTHROW(c.validate());
  c.group = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.clip = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.beta = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("tensor objective examples") {
  const auto mask = torch::ones({1, 1}, torch::kBool);
  const auto kl0 = torch::zeros({1, 1}, torch::kDouble);
  auto term = [&](double ratio, double adv) {
    return grpo_objective(logp_of(ratio), logp_of(1.0), kl0, mask, torch::tensor({adv}, torch::kDouble), 0.2, 0.0)
        .objective.item<double>();
  };
  CHECK(term(1.5, 1.0) == doctest::Approx(1.2));
  CHECK(term(0.5, -1.0) == doctest::Approx(-0.8));
  CHECK(term(1.1, 1.0) == doctest::Approx(1.1));
}

TEST_CASE("tensor objective agrees with the scalar form") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 4, lmax = 6;
    RolloutGroup g;
    auto cur = torch::zeros({n, lmax}, torch::kDouble), old = torch::zeros({n, lmax}, torch::kDouble);
    auto kl = torch::zeros({n, lmax}, torch::kDouble);
    auto mask = torch::zeros({n, lmax}, torch::kBool);
    for (int i = 0; i < n; ++i) {
      const int len = 1 + static_cast<int>(rng.below(lmax));
      g.sequences.emplace_back(static_cast<std::size_t>(len), 0);
      std::vector<double> c, o, k;
      for (int t = 0; t < len; ++t) {
        c.push_back(rng.uniform(-3.0, -0.1));
        o.push_back(c.back() + rng.uniform(-0.4, 0.4));
        k.push_back(rng.uniform(0.0, 0.2));
        cur[i][t] = c.back();
        old[i][t] = o.back();
        kl[i][t] = k.back();
        mask[i][t] = true;
      }
      g.logp_current.push_back(c);
      g.logp_old.push_back(o);
      g.logp_ref.push_back(c);
      g.token_kl.push_back(k);
      g.rewards.push_back(rng.uniform());
    }
    g.advantages = group_advantages(g.rewards);
    const auto scalar = grpo_objective(g, 0.2, 0.05);
    const auto tensor = grpo_objective(cur, old, kl, mask, torch::tensor(g.advantages, torch::kDouble), 0.2, 0.05);
    CHECK(tensor.objective.item<double>() == doctest::Approx(scalar.value).epsilon(1e-12));
    CHECK(tensor.kl.item<double>() == doctest::Approx(scalar.kl).epsilon(1e-12));
    CHECK(tensor.clip_fraction == doctest::Approx(scalar.clip_fraction));
  }
}

TEST_CASE("non-finite ratios are skipped") {
  auto cur = torch::zeros({1, 3}, torch::kDouble), old = torch::zeros({1, 3}, torch::kDouble);
  old[0][1] = -INFINITY;
  const auto r = grpo_objective(cur, old, torch::zeros({1, 3}, torch::kDouble), torch::ones({1, 3}, torch::kBool),
                                torch::ones({1}, torch::kDouble), 0.2, 0.0);
  CHECK(r.skipped_tokens == 1);
  // the skipped token drops out of the sum but not out of the length
  CHECK(r.objective.item<double>() == doctest::Approx(2.0 / 3.0));
  RolloutGroup g;
  g.logp_current = {{0.0, 0.0, 0.0}};
  g.logp_old = {{0.0, -INFINITY, 0.0}};
  g.advantages = {1.0};
  const auto s = grpo_objective(g, 0.2, 0.0);
  CHECK(s.skipped_tokens == 1);
  CHECK(s.value == doctest::Approx(r.objective.item<double>()));
}

TEST_CASE("token KL matches the categorical form") {
  torch::manual_seed(18);
  const auto a = torch::randn({2, 3, 7}, torch::kDouble), b = torch::randn({2, 3, 7}, torch::kDouble);
  const auto kl = token_kl(a, b);
  const auto pa = torch::softmax(a, -1), pb = torch::softmax(b, -1);
  for (int i = 0; i < 2; ++i) {
    for (int t = 0; t < 3; ++t) {
      std::vector<double> p(7), q(7);
      for (int v = 0; v < 7; ++v) p[v] = pa[i][t][v].item<double>(), q[v] = pb[i][t][v].item<double>();
      CHECK(kl[i][t].item<double>() == doctest::Approx(categorical_kl(p, q)).epsilon(1e-10));
    }
  }
  CHECK(token_kl(a, a).abs().max().item<double>() == 0.0);
}

TEST_CASE("equal rewards with zero KL weight leave the policy unchanged") {
  SUBCASE("objective gradient") {
    auto logits = torch::randn({4, 3, 5}, torch::kDouble).requires_grad_();
    const auto tokens = torch::randint(0, 5, {4, 3}, torch::kLong);
    const auto logp = torch::log_softmax(logits, -1).gather(-1, tokens.unsqueeze(-1)).squeeze(-1);
    const auto adv = torch::tensor(group_advantages(std::vector<double>(4, 0.7)), torch::kDouble);
    const auto r = grpo_objective(logp, logp.detach(), token_kl(logits, logits.detach() + 0.1),
                                  torch::ones({4, 3}, torch::kBool), adv, 0.2, 0.0);
    r.objective.backward();
    CHECK(logits.grad().abs().max().item<double>() == 0.0);
  }
  SUBCASE("training") {
    auto bandit = BanditTask::random(16, 3, 2);
    torch::manual_seed(3);
    policy::Policy p(bandit.policy_config());
    auto task = bandit.as_task();
    task.reward = [](std::size_t, const std::vector<int>&) { return RolloutReward{0.5, 0.5, true}; };
    auto cfg = bandit_config(5);
    cfg.group = 8;
    cfg.beta = 0.0;
    cfg.optim.warmup = 1;
    auto res = train_rft(*p, task, cfg);
    for (const auto& item : p->named_parameters()) {
      CHECK(torch::equal(item.value(), res.model->named_parameters()[item.key()]));
    }
  }
}

TEST_CASE("bandit reaches the enumerated argmax") {
  const auto bandit = BanditTask::random(16, 3, 5);
  const auto best = bandit.enumerate_argmax();
  for (std::size_t t = 0; t < best.size(); ++t) CHECK(bandit.scores[t][static_cast<std::size_t>(best[t])] == 1.0);
  torch::manual_seed(3);
  policy::Policy p(bandit.policy_config());
  auto res = train_rft(*p, bandit.as_task(), bandit_config(300));
  const auto g = policy::generate(*res.model, bandit.context(), greedy(bandit.length));
  CHECK(g.tokens[0] == best);

  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 100; ++i) head += res.telemetry[i].mean_reward, tail += res.telemetry[200 + i].mean_reward;
  CHECK(tail > head);
}

TEST_CASE("a dominant KL term keeps the reference decodes") {
  const auto bandit = BanditTask::random(16, 3, 6);
  const auto task = many_contexts(bandit, 20, 4);
  torch::manual_seed(3);
  policy::Policy p(bandit.policy_config());
  const auto ctx = all_contexts(task);
  const auto before = policy::generate(*p, ctx, greedy(bandit.length)).tokens;
  auto run = [&](double beta) {
    auto cfg = bandit_config(60);
    cfg.beta = beta;
    auto res = train_rft(*p, task, cfg);
    const auto after = policy::generate(*res.model, ctx, greedy(bandit.length)).tokens;
    int same = 0;
    for (std::size_t i = 0; i < after.size(); ++i) same += after[i] == before[i];
    return static_cast<double>(same) / static_cast<double>(after.size());
  };
  CHECK(run(1e3) >= 0.9);
  CHECK(run(0.0) < 0.9);  // without the KL term the same budget does move the decodes
}

TEST_CASE("collapse detector") {
  const auto bandit = BanditTask::random(16, 3, 7);
  torch::manual_seed(3);
  policy::Policy p(bandit.policy_config());
  auto task = bandit.as_task();
  task.reward = [](std::size_t, const std::vector<int>&) { return RolloutReward{0.0, 0.0, false}; };
  auto cfg = bandit_config(50);
  cfg.group = 4;
  cfg.collapse_window = 3;
  int steps = 0;
  try {
    train_rft(*p, task, cfg, [&](const RftTelemetry&) { ++steps; });
    FAIL("expected a collapse fault");
  } catch (const TrainingFault& e) {
    CHECK(std::string(e.what()).find("collapse") != std::string::npos);
    CHECK(e.diagnostics().find("format-valid") != std::string::npos);
  }
  CHECK(steps == 3);
}

TEST_CASE("multiple inner updates use the ratio") {
  const auto bandit = BanditTask::random(16, 3, 8);
  torch::manual_seed(3);
  policy::Policy p(bandit.policy_config());
  auto cfg = bandit_config(20);
  cfg.inner_updates = 3;
  cfg.optim.max_lr = 5e-3;
  cfg.optim.warmup = 1;
  auto res = train_rft(*p, bandit.as_task(), cfg);
  REQUIRE(res.telemetry.size() == 20u);
  double clipped = 0.0;
  for (const auto& row : res.telemetry) {
    CHECK(std::isfinite(row.mean_kl));
    clipped += row.clip_frac;
  }
  // the first inner update is on-policy, so the logged clip fraction is 0
  CHECK(clipped == 0.0);
  const auto again = train_rft(*p, bandit.as_task(), cfg);
  CHECK(again.telemetry.back().mean_reward == res.telemetry.back().mean_reward);
}

TEST_CASE("rft telemetry format") {
  CHECK(rft_telemetry_header() == "step mean_reward fmt_valid_frac mean_kl clip_frac");
  RftTelemetry t;
  t.step = 3;
  t.mean_reward = 1.5;
  CHECK(t.to_row().rfind("3 1.5 ", 0) == 0);
}
