#include "dynvla/policy/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "dynvla/common/error.hpp"
#include "dynvla/common/rng.hpp"
#include "dynvla/nn/train_util.hpp"

namespace dynvla::policy {

void PolicyConfig::validate() const {
  if (obs_side % patch != 0) throw ConfigError("observation side must be divisible by the policy patch");
  if (hidden % heads != 0 || layers < 1) throw ConfigError("bad policy transformer shape");
  if (vocab_size < 2 || max_target_len < 1) throw ConfigError("bad policy vocabulary or length");
}

std::vector<float> state_features(const world::EgoStateSummary& s) {
  return {static_cast<float>(s.speed / 5.0), static_cast<float>(s.accel / 2.0),
          s.command == world::DrivingCommand::Left ? 1.0f : 0.0f,
          s.command == world::DrivingCommand::Right ? 1.0f : 0.0f};
}

ContextBatch ContextBatch::index(const torch::Tensor& rows) const {
  return {obs_prev.index_select(0, rows), obs_t.index_select(0, rows), state.index_select(0, rows)};
}

ContextBatch make_context_batch(const std::vector<PolicyContext>& contexts) {
  DYNVLA_EXPECT(!contexts.empty(), "empty context batch");
  std::vector<const world::Observation*> prev, cur;
  std::vector<float> st;
  for (const auto& c : contexts) {
    DYNVLA_EXPECT(c.obs_prev && c.obs_t && c.obs_prev->data.size() == c.obs_t->data.size(),
                  "context observations differ in shape");
    prev.push_back(c.obs_prev);
    cur.push_back(c.obs_t);
    const auto f = state_features(c.state);
    st.insert(st.end(), f.begin(), f.end());
  }
  return {nn::observations_tensor(prev), nn::observations_tensor(cur),
          torch::tensor(st, torch::kFloat).view({static_cast<std::int64_t>(contexts.size()), kStateFeatures})};
}

PolicyImpl::PolicyImpl(PolicyConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  const nn::PatchConfig pc{cfg_.obs_side, cfg_.patch, cfg_.channels, cfg_.hidden};
  patch_embed = register_module("patch_embed", nn::PatchEmbed(pc));
  pos_prev = register_parameter("pos_prev", torch::randn({pc.count(), cfg_.hidden}) * 0.02);
  state_proj = register_module("state_proj", torch::nn::Linear(kStateFeatures, cfg_.hidden));
  state_pos = register_parameter("state_pos", torch::randn({1, cfg_.hidden}) * 0.02);
  token_embed = register_module("token_embed", torch::nn::Embedding(cfg_.vocab_size, cfg_.hidden));
  token_pos = register_parameter("token_pos", torch::randn({cfg_.max_target_len, cfg_.hidden}) * 0.02);
  trunk = register_module("trunk", nn::TransformerStack(nn::TransformerConfig{
                                       cfg_.layers, cfg_.hidden, cfg_.heads, cfg_.ff_ratio,
                                       cfg_.prefix_length() + cfg_.max_target_len, true}));
  head = register_module("head", torch::nn::Linear(cfg_.hidden, cfg_.vocab_size));
  torch::NoGradGuard guard;
  token_embed->weight.mul_(0.02);
}

torch::Tensor PolicyImpl::encode_context(const ContextBatch& ctx) {
  DYNVLA_EXPECT(ctx.obs_prev.sizes() == ctx.obs_t.sizes(), "context observation shapes differ");
  auto prev = patch_embed->proj(nn::to_patches(ctx.obs_prev, cfg_.patch)) + pos_prev;
  auto cur = patch_embed(ctx.obs_t);
  auto st = (state_proj(ctx.state) + state_pos).unsqueeze(1);
  return torch::cat({prev, cur, st}, 1);
}

torch::Tensor PolicyImpl::run(const ContextBatch& ctx, const torch::Tensor& inputs) {
  auto prefix = encode_context(ctx);
  const auto p = prefix.size(1);
  const auto l = inputs.size(1);
  DYNVLA_EXPECT(l <= cfg_.max_target_len, "target longer than the policy's maximum");
  torch::Tensor seq = prefix;
  if (l > 0) seq = torch::cat({prefix, token_embed(inputs) + token_pos.slice(0, 0, l)}, 1);
  return trunk(seq, nn::prefix_causal_mask(p, p + l, torch::TensorOptions().dtype(prefix.scalar_type())));
}

torch::Tensor PolicyImpl::forward(const ContextBatch& ctx, const torch::Tensor& tokens) {
  DYNVLA_EXPECT(tokens.dim() == 2 && tokens.size(0) == ctx.size() && tokens.size(1) >= 1, "bad target batch");
  const auto l = tokens.size(1);
  auto h = run(ctx, tokens.slice(1, 0, l - 1));
  const auto p = cfg_.prefix_length();
  return head(h.slice(1, p - 1, p - 1 + l));
}

torch::Tensor PolicyImpl::next_logits(const ContextBatch& ctx, const torch::Tensor& tokens) {
  auto h = run(ctx, tokens);
  return head(h.select(1, h.size(1) - 1));
}

SpanMasks span_masks(const SequenceSpec& spec, bool include_markers) {
  const int l = spec.length();
  auto dyn = torch::zeros({l}, torch::kBool);
  auto act = torch::zeros({l}, torch::kBool);
  int a0 = 0;
  if (spec.has_cot()) {
    const int c = spec.cot_content_length();
    if (include_markers) {
      dyn.slice(0, 0, c + 2).fill_(true);
    } else {
      dyn.slice(0, 1, c + 1).fill_(true);
    }
    a0 = c + 2;
  }
  const int n = spec.action_length();
  if (include_markers) {
    act.slice(0, a0, a0 + n + 2).fill_(true);
  } else {
    act.slice(0, a0 + 1, a0 + n + 1).fill_(true);
  }
  return {dyn, act};
}

SftLoss sft_loss(const torch::Tensor& logits, const torch::Tensor& targets, const SpanMasks& masks, double lambda_act) {
  DYNVLA_EXPECT(logits.dim() == 3 && targets.sizes() == logits.sizes().slice(0, 2), "logits/targets shape mismatch");
  auto nll = -torch::log_softmax(logits, -1).gather(-1, targets.unsqueeze(-1)).squeeze(-1);  // [B, L]
  auto span_mean = [&](const torch::Tensor& m) {
    auto mm = m.to(nll.scalar_type()).unsqueeze(0).expand_as(nll);
    const double count = mm.sum().item<double>();
    return count > 0 ? (nll * mm).sum() / count : torch::zeros({}, nll.options());
  };
  SftLoss out;
  out.l_dyn = span_mean(masks.dyn);
  out.l_act = span_mean(masks.act);
  out.total = out.l_dyn + lambda_act * out.l_act;
  if (!std::isfinite(out.total.item<double>())) {
    std::ostringstream os;
    os << "l_dyn=" << out.l_dyn.item<double>() << " l_act=" << out.l_act.item<double>();
    throw TrainingFault("non-finite SFT loss", os.str());
  }
  return out;
}

namespace {

int pick(const std::vector<double>& logits, const SamplingConfig& s, Rng& rng, double& logprob) {
  const auto v = logits.size();
  if (s.temperature <= 0.0) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v; ++i) {
      if (logits[i] > logits[best]) best = i;
    }
    double mx = logits[best], z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    logprob = -std::log(z);
    return static_cast<int>(best);
  }
  std::vector<double> p(v);
  double mx = -std::numeric_limits<double>::infinity();
  for (double l : logits) mx = std::max(mx, l / s.temperature);
  double z = 0.0;
  for (std::size_t i = 0; i < v; ++i) z += (p[i] = std::exp(logits[i] / s.temperature - mx));
  for (auto& x : p) x /= z;
  if (s.top_k > 0 || s.top_p < 1.0) {
    std::vector<std::size_t> order(v);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
    std::vector<double> kept(v, 0.0);
    double cum = 0.0;
    for (std::size_t r = 0; r < v; ++r) {
      if (s.top_k > 0 && static_cast<int>(r) >= s.top_k) break;
      if (r > 0 && cum >= s.top_p) break;
      kept[order[r]] = p[order[r]];
      cum += p[order[r]];
    }
    for (std::size_t i = 0; i < v; ++i) p[i] = kept[i] / cum;
  }
  double u = rng.uniform();
  std::size_t chosen = v - 1;
  for (std::size_t i = 0; i < v; ++i) {
    if (p[i] <= 0.0) continue;
    chosen = i;
    if (u < p[i]) break;
    u -= p[i];
  }
  logprob = std::log(p[chosen]);
  return static_cast<int>(chosen);
}

}  // namespace

Generation generate(PolicyImpl& policy, const ContextBatch& ctx, const SamplingConfig& sampling,
                    const VocabLayout* layout, const SequenceSpec* spec) {
  torch::NoGradGuard guard;
  DYNVLA_EXPECT(!sampling.constrained || (layout && spec), "constrained decoding needs the template");
  int max_len = sampling.max_length;
  if (max_len <= 0) max_len = spec ? spec->length() : policy.config().max_target_len;
  max_len = std::min(max_len, policy.config().max_target_len);
  const auto b = ctx.size();
  Generation g;
  g.tokens.resize(static_cast<std::size_t>(b));
  g.logprobs.resize(static_cast<std::size_t>(b));
  std::vector<bool> done(static_cast<std::size_t>(b), false);
  Rng rng(mix_seed(sampling.seed, 0x67656e));
  auto seq = torch::empty({b, 0}, torch::kLong);
  for (int pos = 0; pos < max_len; ++pos) {
    auto logits = policy.next_logits(ctx, seq).to(torch::kDouble).contiguous();
    const auto v = logits.size(1);
    std::vector<std::int64_t> next(static_cast<std::size_t>(b), kPad);
    IdRange legal{0, static_cast<int>(v)};
    if (sampling.constrained) legal = legal_range(*layout, *spec, static_cast<std::size_t>(pos));
    for (std::int64_t i = 0; i < b; ++i) {
      if (done[static_cast<std::size_t>(i)]) continue;
      const double* row = logits.data_ptr<double>() + i * v;
      std::vector<double> l(row, row + v);
      if (sampling.constrained) {
        for (std::int64_t k = 0; k < v; ++k) {
          if (!legal.contains(static_cast<int>(k))) l[static_cast<std::size_t>(k)] = -std::numeric_limits<double>::infinity();
        }
      }
      double lp = 0.0;
      const int tok = pick(l, sampling, rng, lp);
      next[static_cast<std::size_t>(i)] = tok;
      g.tokens[static_cast<std::size_t>(i)].push_back(tok);
      g.logprobs[static_cast<std::size_t>(i)].push_back(lp);
      if (sampling.stop_token >= 0 && tok == sampling.stop_token) done[static_cast<std::size_t>(i)] = true;
    }
    if (std::all_of(done.begin(), done.end(), [](bool d) { return d; })) break;
    seq = torch::cat({seq, torch::tensor(next, torch::kLong).view({b, 1})}, 1);
  }
  return g;
}

}  // namespace dynvla::policy
