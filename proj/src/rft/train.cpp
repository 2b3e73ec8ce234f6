#include "dynvla/rft/train.hpp"

#include <cmath>
#include <sstream>

#include "dynvla/common/error.hpp"
#include "dynvla/common/rng.hpp"
#include "dynvla/nn/train_util.hpp"
#include "dynvla/rft/group_math.hpp"

namespace dynvla::rft {

void RftConfig::validate() const {
  if (group < 2) throw ConfigError("group size must be at least 2");
  if (!(clip > 0.0 && clip < 1.0)) throw ConfigError("clip epsilon must lie in (0, 1)");
  if (beta < 0.0) throw ConfigError("KL coefficient must be non-negative");
  if (contexts_per_step < 1 || inner_updates < 1) throw ConfigError("bad RFT batch shape");
  if (!(temperature > 0.0)) throw ConfigError("rollout temperature must be positive");
}

GrpoTerms grpo_objective(const torch::Tensor& logp_current, const torch::Tensor& logp_old,
                         const torch::Tensor& token_kl, const torch::Tensor& mask, const torch::Tensor& advantages,
                         double clip_eps, double beta) {
  DYNVLA_EXPECT(logp_current.sizes() == logp_old.sizes() && logp_current.sizes() == mask.sizes(),
                "per-token tensors must share a shape");
  auto ratio = torch::exp(logp_current - logp_old.detach());
  auto finite = torch::isfinite(ratio) & mask;
  GrpoTerms t;
  t.skipped_tokens = static_cast<int>((mask & ~torch::isfinite(ratio)).sum().item<std::int64_t>());
  auto safe_ratio = torch::where(finite, ratio, torch::ones_like(ratio));
  auto adv = advantages.to(ratio.scalar_type()).unsqueeze(1);
  auto term = torch::min(safe_ratio * adv, torch::clamp(safe_ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv);
  auto m = mask.to(ratio.scalar_type());
  auto len = m.sum(1).clamp_min(1.0);
  auto f = finite.to(ratio.scalar_type());
  t.surrogate = ((term * f).sum(1) / len).mean();
  t.kl = ((token_kl * m).sum(1) / len).mean();
  t.objective = t.surrogate - beta * t.kl;
  const double counted = f.sum().item<double>();
  const auto outside = ((safe_ratio < 1.0 - clip_eps) | (safe_ratio > 1.0 + clip_eps)) & finite;
  t.clip_fraction = counted > 0 ? outside.sum().item<double>() / counted : 0.0;
  return t;
}

torch::Tensor token_kl(const torch::Tensor& logits_current, const torch::Tensor& logits_reference) {
  auto lp = torch::log_softmax(logits_current, -1);
  auto lq = torch::log_softmax(logits_reference, -1);
  return (lp.exp() * (lp - lq)).sum(-1);
}

std::string RftTelemetry::to_row() const {
  std::ostringstream os;
  os.precision(8);
  os << step << ' ' << mean_reward << ' ' << fmt_valid_frac << ' ' << mean_kl << ' ' << clip_frac;
  return os.str();
}

std::string rft_telemetry_header() { return "step mean_reward fmt_valid_frac mean_kl clip_frac"; }

RftResult train_rft(policy::PolicyImpl& sft, const RftTask& task, const RftConfig& cfg,
                    const std::function<void(const RftTelemetry&)>& on_step) {
  cfg.validate();
  DYNVLA_EXPECT(task.num_contexts > 0 && task.contexts && task.reward, "incomplete RFT task");
  torch::manual_seed(cfg.seed);
  RftResult res;
  res.model = policy::Policy(sft.config());
  nn::copy_state(sft, *res.model);
  policy::Policy reference(sft.config());
  nn::copy_state(sft, *reference);
  for (auto& p : reference->parameters()) p.set_requires_grad(false);

  nn::Optimizer optim(res.model->parameters(), cfg.optim);
  Rng rng(mix_seed(cfg.seed, 0x726674));
  int low_format_streak = 0;
  const int g = cfg.group;

  for (std::int64_t step = 0; step < cfg.optim.total; ++step) {
    std::vector<std::size_t> ctx_ids;
    for (int c = 0; c < cfg.contexts_per_step; ++c) ctx_ids.push_back(static_cast<std::size_t>(rng.below(task.num_contexts)));
    const auto ctx = task.contexts(ctx_ids);
    const auto rows = torch::arange(static_cast<std::int64_t>(ctx_ids.size()), torch::kLong).repeat_interleave(g);
    const auto rctx = ctx.index(rows);

    policy::SamplingConfig sampling;
    sampling.temperature = cfg.temperature;
    sampling.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(step) + 1);
    sampling.max_length = task.max_length;
    sampling.stop_token = task.stop_token;
    const auto gen = policy::generate(*res.model, rctx, sampling);

    const std::size_t n = gen.tokens.size();
    std::vector<double> rewards(n), advantages;
    double reward_sum = 0.0, fmt_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = task.reward(ctx_ids[i / static_cast<std::size_t>(g)], gen.tokens[i]);
      rewards[i] = r.total;
      reward_sum += r.total;
      fmt_sum += r.format_ok ? 1.0 : 0.0;
    }
    for (std::size_t c = 0; c < ctx_ids.size(); ++c) {
      const auto a = group_advantages(std::span<const double>(rewards).subspan(c * g, static_cast<std::size_t>(g)));
      advantages.insert(advantages.end(), a.begin(), a.end());
    }

    std::size_t lmax = 1;
    for (const auto& s : gen.tokens) lmax = std::max(lmax, s.size());
    std::vector<std::int64_t> flat(n * lmax, policy::kPad);
    auto mask = torch::zeros({static_cast<std::int64_t>(n), static_cast<std::int64_t>(lmax)}, torch::kBool);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(gen.tokens[i].begin(), gen.tokens[i].end(), flat.begin() + static_cast<std::ptrdiff_t>(i * lmax));
      mask[static_cast<std::int64_t>(i)].slice(0, 0, static_cast<std::int64_t>(gen.tokens[i].size())).fill_(true);
    }
    const auto tokens = torch::tensor(flat, torch::kLong).view({static_cast<std::int64_t>(n), static_cast<std::int64_t>(lmax)});
    const auto adv = torch::tensor(advantages, torch::kDouble);

    torch::Tensor ref_logits;
    torch::Tensor logp_old;
    {
      torch::NoGradGuard guard;
      ref_logits = reference->forward(rctx, tokens);
      if (cfg.inner_updates > 1) {
        logp_old = torch::log_softmax(res.model->forward(rctx, tokens), -1).gather(-1, tokens.unsqueeze(-1)).squeeze(-1);
      }
    }
    RftTelemetry row;
    row.step = step;
    row.mean_reward = reward_sum / static_cast<double>(n);
    row.fmt_valid_frac = fmt_sum / static_cast<double>(n);
    for (int inner = 0; inner < cfg.inner_updates; ++inner) {
      optim.zero_grad();
      const auto logits = res.model->forward(rctx, tokens);
      const auto logp = torch::log_softmax(logits, -1).gather(-1, tokens.unsqueeze(-1)).squeeze(-1);
      const auto old = cfg.inner_updates > 1 ? logp_old : logp.detach();
      const auto kl = token_kl(logits, ref_logits);
      const auto terms = grpo_objective(logp, old, kl, mask, adv, cfg.clip, cfg.beta);
      const auto loss = -terms.objective;
      if (!std::isfinite(loss.item<double>())) {
        throw TrainingFault("non-finite RFT objective", "step " + std::to_string(step));
      }
      loss.backward();
      optim.step(step);
      if (inner == 0) {
        row.mean_kl = terms.kl.item<double>();
        row.clip_frac = terms.clip_fraction;
      }
    }
    res.telemetry.push_back(row);
    if (on_step) on_step(row);

    low_format_streak = row.fmt_valid_frac < cfg.collapse_threshold ? low_format_streak + 1 : 0;
    if (low_format_streak >= cfg.collapse_window) {
      std::ostringstream os;
      os << "format-valid fraction below " << cfg.collapse_threshold << " for " << low_format_streak
         << " steps; last row: " << row.to_row();
      throw TrainingFault("RFT collapse", os.str());
    }
  }
  return res;
}

}  // namespace dynvla::rft
