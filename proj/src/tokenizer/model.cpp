#include "dynvla/tokenizer/model.hpp"

#include <cmath>
#include <sstream>

#include "dynvla/common/error.hpp"
#include "dynvla/tokenizer/codebook_usage.hpp"

namespace dynvla::tokenizer {

void TokenizerConfig::validate() const {
  if (n_ego <= 0 || n_env <= 0 || m_ego <= 0 || m_env <= 0 || d_vq <= 0) {
    throw ConfigError("token counts, codebook sizes and code dim must be positive");
  }
  if (lambda_bev < 0 || lambda_vq < 0 || lambda_act_reg < 0 || beta_commit < 0 || perceptual_weight < 0) {
    throw ConfigError("loss weights must be non-negative");
  }
  if (!image_branch && !bev_branch) throw ConfigError("at least one decoder branch must be enabled");
  if (obs_side % patch != 0 || bev_side % bev_patch != 0) throw ConfigError("patch sizes must divide the grids");
  if (hidden % heads != 0) throw ConfigError("hidden dim must be divisible by heads");
}

std::vector<BranchSpec> branches(const TokenizerConfig& cfg) {
  if (cfg.decoupled) return {{"ego", cfg.n_ego, cfg.m_ego}, {"env", cfg.n_env, cfg.m_env}};
  return {{"shared", cfg.n_ego + cfg.n_env, cfg.m_ego + cfg.m_env}};
}

QuantizeResult quantize(const torch::Tensor& e, const torch::Tensor& codebook, double beta_commit,
                        const FrozenAssignment* frozen) {
  DYNVLA_EXPECT(e.dim() == 3 && codebook.dim() == 2 && e.size(2) == codebook.size(1), "quantizer shape mismatch");
  DYNVLA_EXPECT(torch::isfinite(e).all().item<bool>(), "non-finite quantizer input");
  const auto b = e.size(0), n = e.size(1), d = e.size(2);
  torch::Tensor ids;
  if (frozen) {
    ids = frozen->ids;
  } else {
    auto q = e.detach().to(torch::kFloat).contiguous();
    auto cb = codebook.detach().to(torch::kFloat).contiguous();
    const auto found = nearest_codes(std::span<const float>(q.data_ptr<float>(), static_cast<std::size_t>(q.numel())),
                                     std::span<const float>(cb.data_ptr<float>(), static_cast<std::size_t>(cb.numel())),
                                     static_cast<int>(d));
    ids = torch::tensor(std::vector<std::int64_t>(found.begin(), found.end()), torch::kLong).view({b, n});
  }
  auto c = codebook.index_select(0, ids.reshape({-1})).view({b, n, d});
  QuantizeResult r;
  r.ids = ids;
  r.z_q = frozen ? e + frozen->offset : e + (c - e).detach();
  const auto sg_e = frozen ? frozen->e : e.detach();
  const auto sg_c = frozen ? frozen->code : c.detach();
  r.vq_loss = (sg_e - c).pow(2).sum(-1).mean() + beta_commit * (e - sg_c).pow(2).sum(-1).mean();
  return r;
}

torch::Tensor lookup(const torch::Tensor& ids, const torch::Tensor& codebook) {
  DYNVLA_EXPECT(ids.numel() == 0 || (ids.min().item<std::int64_t>() >= 0 &&
                                     ids.max().item<std::int64_t>() < codebook.size(0)),
                "code id out of range");
  auto sizes = ids.sizes().vec();
  sizes.push_back(codebook.size(1));
  return codebook.index_select(0, ids.reshape({-1})).view(sizes);
}

PerceptualNetImpl::PerceptualNetImpl(int channels, std::uint64_t seed) {
  c1 = register_module("c1", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, 16, 4).stride(2).padding(1)));
  c2 = register_module("c2", torch::nn::Conv2d(torch::nn::Conv2dOptions(16, 32, 4).stride(2).padding(1)));
  c3 = register_module("c3", torch::nn::Conv2d(torch::nn::Conv2dOptions(32, 32, 3).stride(2).padding(1)));
  auto gen = at::detail::createCPUGenerator(seed);
  torch::NoGradGuard guard;
  for (auto* conv : {&c1, &c2, &c3}) {
    auto& w = (*conv)->weight;
    const double fan_in = static_cast<double>(w.size(1) * w.size(2) * w.size(3));
    w.copy_(at::randn(w.sizes(), gen, torch::kFloat) / std::sqrt(fan_in));
    (*conv)->bias.zero_();
  }
  for (auto& p : parameters()) p.set_requires_grad(false);
}

torch::Tensor PerceptualNetImpl::distance(const torch::Tensor& a, const torch::Tensor& b) {
  auto fa = a.permute({0, 3, 1, 2});
  auto fb = b.permute({0, 3, 1, 2});
  torch::Tensor total = torch::zeros({}, a.options());
  for (auto* conv : {&c1, &c2, &c3}) {
    fa = torch::tanh((*conv)->forward(fa));
    fb = torch::tanh((*conv)->forward(fb));
    total = total + (fa - fb).pow(2).mean();
  }
  return total;
}

TokenizerImpl::TokenizerImpl(TokenizerConfig cfg) : cfg_(cfg), branches_(branches(cfg)) {
  cfg_.validate();
  const nn::PatchConfig img{cfg_.obs_side, cfg_.patch, cfg_.channels, cfg_.hidden};
  const int p = img.count();
  const int n = cfg_.total_tokens();

  img_embed = register_module("img_embed", nn::PatchEmbed(img));
  pos_next = register_parameter("pos_next", torch::randn({p, cfg_.hidden}) * 0.02);
  for (const auto& br : branches_) {
    queries_.push_back(register_parameter("query_" + br.name, torch::randn({br.tokens, cfg_.hidden}) * 0.02));
  }
  encoder = register_module(
      "encoder", nn::TransformerStack(nn::TransformerConfig{cfg_.enc_layers, cfg_.hidden, cfg_.heads, cfg_.ff_ratio,
                                                            2 * p + n, false}));
  for (const auto& br : branches_) {
    to_vq_.push_back(register_module("to_vq_" + br.name, torch::nn::Linear(cfg_.hidden, cfg_.d_vq)));
    codebooks_.push_back(register_parameter("codebook_" + br.name, torch::randn({br.codes, cfg_.d_vq}) * 0.5));
  }

  const nn::TransformerConfig dec{cfg_.dec_layers, cfg_.hidden, cfg_.heads, cfg_.ff_ratio, 0, false};
  if (cfg_.image_branch) {
    dec_img_embed = register_module("dec_img_embed", nn::PatchEmbed(img));
    z_img = register_module("z_img", torch::nn::Linear(cfg_.d_vq, cfg_.hidden));
    z_img_pos = register_parameter("z_img_pos", torch::randn({n, cfg_.hidden}) * 0.02);
    auto dc = dec;
    dc.max_len = p + n;
    dec_img = register_module("dec_img", nn::TransformerStack(dc));
    head_img = register_module("head_img", torch::nn::Linear(cfg_.hidden, 2 * img.patch_values()));
    torch::NoGradGuard guard;
    head_img->bias.slice(0, 0, img.patch_values()).fill_(-4.0);
  }
  if (cfg_.bev_branch) {
    const nn::PatchConfig bev{cfg_.bev_side, cfg_.bev_patch, cfg_.bev_classes, cfg_.hidden};
    dec_bev_embed = register_module("dec_bev_embed", nn::PatchEmbed(bev));
    z_bev = register_module("z_bev", torch::nn::Linear(cfg_.d_vq, cfg_.hidden));
    z_bev_pos = register_parameter("z_bev_pos", torch::randn({n, cfg_.hidden}) * 0.02);
    auto dc = dec;
    dc.max_len = bev.count() + n;
    dec_bev = register_module("dec_bev", nn::TransformerStack(dc));
    head_bev = register_module("head_bev", torch::nn::Linear(cfg_.hidden, bev.patch_values()));
    bev_gain = register_parameter("bev_gain", torch::full({1}, 4.0));
  }
  if (cfg_.decoupled) {
    act1 = register_module("act1", torch::nn::Linear(cfg_.n_ego * cfg_.d_vq, cfg_.hidden));
    act2 = register_module("act2", torch::nn::Linear(cfg_.hidden, 3));
  }
  if (cfg_.image_branch && cfg_.perceptual) perceptual = register_module("perceptual", PerceptualNet(cfg_.channels, 7));
  trained_steps_ = register_buffer("trained_steps", torch::zeros({1}, torch::kFloat));
}

void TokenizerImpl::set_trained_steps(std::int64_t steps) { trained_steps_.fill_(static_cast<double>(steps)); }

std::vector<torch::Tensor> TokenizerImpl::encode(const torch::Tensor& obs_t, const torch::Tensor& obs_next) {
  DYNVLA_EXPECT(obs_t.sizes() == obs_next.sizes(), "observation pair shapes differ");
  const auto b = obs_t.size(0);
  auto xt = img_embed(obs_t);
  auto xn = img_embed->proj(nn::to_patches(obs_next, cfg_.patch)) + pos_next;
  std::vector<torch::Tensor> parts{xt, xn};
  for (const auto& q : queries_) parts.push_back(q.unsqueeze(0).expand({b, q.size(0), q.size(1)}));
  auto h = encoder(torch::cat(parts, 1));
  std::vector<torch::Tensor> out;
  std::int64_t offset = 2 * xt.size(1);
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    const auto n = branches_[i].tokens;
    out.push_back(to_vq_[i](h.slice(1, offset, offset + n)));
    offset += n;
  }
  return out;
}

torch::Tensor TokenizerImpl::decode_image(const torch::Tensor& obs_t, const torch::Tensor& z) {
  DYNVLA_EXPECT(cfg_.image_branch, "image branch is disabled");
  DYNVLA_EXPECT(z.dim() == 3 && z.size(1) == cfg_.total_tokens() && z.size(2) == cfg_.d_vq, "z shape mismatch");
  auto x = dec_img_embed(obs_t);
  const auto p = x.size(1);
  auto h = dec_img(torch::cat({x, z_img(z) + z_img_pos}, 1)).slice(1, 0, p);
  const int pv = cfg_.patch * cfg_.patch * cfg_.channels;
  auto out = head_img(h);
  auto mix = torch::sigmoid(nn::from_patches(out.slice(2, 0, pv), cfg_.obs_side, cfg_.patch, cfg_.channels));
  auto val = torch::sigmoid(nn::from_patches(out.slice(2, pv, 2 * pv), cfg_.obs_side, cfg_.patch, cfg_.channels));
  return (1.0 - mix) * obs_t + mix * val;
}

torch::Tensor TokenizerImpl::decode_bev(const torch::Tensor& bev_t, const torch::Tensor& z) {
  DYNVLA_EXPECT(cfg_.bev_branch, "bev branch is disabled");
  DYNVLA_EXPECT(z.dim() == 3 && z.size(1) == cfg_.total_tokens() && z.size(2) == cfg_.d_vq, "z shape mismatch");
  DYNVLA_EXPECT(bev_t.dim() == 3 && bev_t.size(1) == cfg_.bev_side, "bev shape mismatch");
  auto onehot = torch::one_hot(bev_t, cfg_.bev_classes).to(bev_gain.scalar_type());
  auto x = dec_bev_embed(onehot);
  const auto p = x.size(1);
  auto h = dec_bev(torch::cat({x, z_bev(z) + z_bev_pos}, 1)).slice(1, 0, p);
  auto logits = nn::from_patches(head_bev(h), cfg_.bev_side, cfg_.bev_patch, cfg_.bev_classes);
  return logits + bev_gain * onehot;
}

torch::Tensor TokenizerImpl::predict_action(const torch::Tensor& ego_z) {
  DYNVLA_EXPECT(cfg_.decoupled, "action head exists only with decoupled queries");
  return act2(torch::gelu(act1(ego_z.flatten(1))));
}

TokenizerOutput TokenizerImpl::forward(const TokenizerBatch& batch, const std::vector<FrozenAssignment>* frozen) {
  TokenizerOutput out;
  out.e = encode(batch.obs_t, batch.obs_next);
  std::vector<torch::Tensor> zs;
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    const FrozenAssignment* f = frozen ? &(*frozen)[i] : nullptr;
    out.q.push_back(quantize(out.e[i], codebooks_[i], cfg_.beta_commit, f));
    zs.push_back(out.q.back().z_q);
    out.vq_loss = out.vq_loss.defined() ? out.vq_loss + out.q.back().vq_loss : out.q.back().vq_loss;
  }
  out.z = torch::cat(zs, 1);
  if (cfg_.image_branch) out.image = decode_image(batch.obs_t, out.z);
  if (cfg_.bev_branch) out.bev_logits = decode_bev(batch.bev_t, out.z);
  if (cfg_.decoupled) out.action = predict_action(out.q[0].z_q);
  return out;
}

std::vector<FrozenAssignment> TokenizerImpl::capture(const TokenizerOutput& out) {
  std::vector<FrozenAssignment> f;
  for (std::size_t i = 0; i < out.q.size(); ++i) {
    const auto e = out.e[i].detach().clone();
    const auto offset = (out.q[i].z_q - out.e[i]).detach().clone();
    f.push_back({out.q[i].ids.clone(), offset, e, e + offset});
  }
  return f;
}

std::vector<torch::Tensor> TokenizerImpl::encode_ids(const torch::Tensor& obs_t, const torch::Tensor& obs_next) {
  torch::NoGradGuard guard;
  auto e = encode(obs_t, obs_next);
  std::vector<torch::Tensor> ids;
  for (std::size_t i = 0; i < e.size(); ++i) ids.push_back(quantize(e[i], codebooks_[i], cfg_.beta_commit).ids);
  return ids;
}

torch::Tensor TokenizerImpl::embed_ids(const std::vector<torch::Tensor>& ids) {
  DYNVLA_EXPECT(ids.size() == branches_.size(), "one id tensor per branch expected");
  std::vector<torch::Tensor> zs;
  for (std::size_t i = 0; i < ids.size(); ++i) zs.push_back(lookup(ids[i], codebooks_[i]));
  return torch::cat(zs, 1);
}

LossBreakdown tokenizer_loss(TokenizerImpl& model, const TokenizerOutput& out, const TokenizerBatch& batch) {
  const auto& cfg = model.config();
  auto zero = torch::zeros({}, out.z.options());
  LossBreakdown l{zero, zero, zero, zero, zero, zero};
  if (cfg.image_branch) {
    l.mse = (out.image - batch.obs_next).pow(2).mean();
    if (cfg.perceptual) l.perceptual = model.perceptual->distance(out.image, batch.obs_next);
  }
  if (cfg.bev_branch) {
    l.bev = torch::nn::functional::cross_entropy(out.bev_logits.reshape({-1, cfg.bev_classes}),
                                                 batch.bev_next.reshape({-1}));
  }
  l.vq = out.vq_loss;
  if (cfg.decoupled) l.act_reg = (out.action - batch.action).pow(2).sum(-1).mean();
  l.total = l.mse + cfg.perceptual_weight * l.perceptual + cfg.lambda_bev * l.bev + cfg.lambda_vq * l.vq +
            cfg.lambda_act_reg * l.act_reg;
  if (!std::isfinite(l.total.item<double>())) {
    std::ostringstream os;
    os << "mse=" << l.mse.item<double>() << " perceptual=" << l.perceptual.item<double>()
       << " bev=" << l.bev.item<double>() << " vq=" << l.vq.item<double>() << " act_reg=" << l.act_reg.item<double>();
    throw TrainingFault("non-finite tokenizer loss", os.str());
  }
  return l;
}

DynamicsTokens to_dynamics_tokens(const std::vector<std::vector<torch::Tensor>>& per_step_ids, int sample) {
  DynamicsTokens d;
  d.steps = static_cast<int>(per_step_ids.size());
  for (const auto& step : per_step_ids) {
    DYNVLA_EXPECT(step.size() == 1 || step.size() == 2, "one or two branches expected");
    d.n_ego = static_cast<int>(step[0].size(1));
    d.n_env = step.size() == 2 ? static_cast<int>(step[1].size(1)) : 0;
    for (const auto& ids : step) {
      auto row = ids[sample].contiguous();
      for (std::int64_t i = 0; i < row.size(0); ++i) d.ids.push_back(static_cast<int>(row[i].item<std::int64_t>()));
    }
  }
  return d;
}

}  // namespace dynvla::tokenizer
