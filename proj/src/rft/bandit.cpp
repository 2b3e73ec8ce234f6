#include "dynvla/rft/bandit.hpp"

#include <cmath>

#include "dynvla/common/error.hpp"
#include "dynvla/common/rng.hpp"

namespace dynvla::rft {

BanditTask BanditTask::random(int vocab, int length, std::uint64_t seed) {
  DYNVLA_EXPECT(vocab >= 2 && length >= 1, "bandit needs at least two tokens and one position");
  BanditTask t;
  t.vocab = vocab;
  t.length = length;
  Rng rng(seed);
  t.scores.assign(static_cast<std::size_t>(length), std::vector<double>(static_cast<std::size_t>(vocab)));
  for (auto& row : t.scores) {
    for (auto& s : row) s = rng.uniform(0.0, 0.6);
    row[rng.below(static_cast<std::uint64_t>(vocab))] = 1.0;
  }
  return t;
}

double BanditTask::reward(const std::vector<int>& tokens) const {
  if (static_cast<int>(tokens.size()) != length) return 0.0;
  double r = 0.0;
  for (int i = 0; i < length; ++i) {
    const int tok = tokens[static_cast<std::size_t>(i)];
    if (tok < 0 || tok >= vocab) return 0.0;
    r += scores[static_cast<std::size_t>(i)][static_cast<std::size_t>(tok)];
  }
  return r / length;
}

std::vector<int> BanditTask::enumerate_argmax() const {
  std::vector<int> seq(static_cast<std::size_t>(length), 0), best = seq;
  double best_r = reward(seq);
  while (true) {
    int i = length - 1;
    while (i >= 0 && seq[static_cast<std::size_t>(i)] == vocab - 1) seq[static_cast<std::size_t>(i--)] = 0;
    if (i < 0) break;
    ++seq[static_cast<std::size_t>(i)];
    const double r = reward(seq);
    if (r > best_r) {
      best_r = r;
      best = seq;
    }
  }
  return best;
}

policy::PolicyConfig BanditTask::policy_config() const {
  policy::PolicyConfig c;
  c.obs_side = 16;
  c.patch = 8;
  c.hidden = 32;
  c.heads = 2;
  c.layers = 2;
  c.ff_ratio = 2;
  c.vocab_size = vocab;
  c.max_target_len = length;
  return c;
}

policy::ContextBatch BanditTask::context() const {
  policy::ContextBatch b;
  b.obs_prev = torch::zeros({1, 16, 16, 3});
  b.obs_t = torch::zeros({1, 16, 16, 3});
  b.state = torch::zeros({1, policy::kStateFeatures});
  return b;
}

RftTask BanditTask::as_task() const {
  RftTask task;
  task.num_contexts = 1;
  task.max_length = length;
  task.stop_token = -1;
  const auto ctx = context();
  task.contexts = [ctx](std::span<const std::size_t> ids) {
    return ctx.index(torch::zeros({static_cast<std::int64_t>(ids.size())}, torch::kLong));
  };
  const BanditTask self = *this;
  task.reward = [self](std::size_t, const std::vector<int>& tokens) {
    RolloutReward r;
    r.trajectory = self.reward(tokens);
    r.format_ok = static_cast<int>(tokens.size()) == self.length;
    r.total = r.trajectory;
    return r;
  };
  return task;
}

}  // namespace dynvla::rft
