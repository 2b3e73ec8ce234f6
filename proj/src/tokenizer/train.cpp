#include "dynvla/tokenizer/train.hpp"

#include <cstdio>
#include <sstream>

#include "dynvla/common/error.hpp"
#include "dynvla/common/rng.hpp"
#include "dynvla/nn/train_util.hpp"

namespace dynvla::tokenizer {

std::vector<PairSample> collect_pairs(const std::vector<world::EpisodeRecord>& episodes) {
  std::vector<PairSample> out;
  for (const auto& ep : episodes) {
    for (std::size_t t = 0; t < ep.pair_next_observations.size(); ++t) {
      out.push_back({&ep.observations[t], &ep.pair_next_observations[t], &ep.bevs[t], &ep.pair_next_bevs[t],
                     ep.pair_actions[t]});
    }
  }
  return out;
}

TokenizerBatch make_batch(const std::vector<PairSample>& samples, std::span<const std::size_t> indices) {
  std::vector<const world::Observation*> ot, on;
  std::vector<const world::BevMap*> bt, bn;
  std::vector<float> act;
  for (auto i : indices) {
    const auto& s = samples[i];
    ot.push_back(s.obs_t);
    on.push_back(s.obs_next);
    bt.push_back(s.bev_t);
    bn.push_back(s.bev_next);
    act.insert(act.end(), {static_cast<float>(s.action.dx), static_cast<float>(s.action.dy),
                           static_cast<float>(s.action.dyaw)});
  }
  TokenizerBatch b;
  b.obs_t = nn::observations_tensor(ot);
  b.obs_next = nn::observations_tensor(on);
  b.bev_t = nn::bevs_tensor(bt);
  b.bev_next = nn::bevs_tensor(bn);
  b.action = torch::tensor(act, torch::kFloat).view({static_cast<std::int64_t>(indices.size()), 3});
  return b;
}

std::string TokenizerTelemetry::to_row() const {
  std::ostringstream os;
  os.precision(8);
  os << step << ' ' << total << ' ' << mse << ' ' << perceptual << ' ' << bev << ' ' << vq << ' ' << act_reg << ' '
     << active_ego << ' ' << active_env;
  return os.str();
}

std::string tokenizer_telemetry_header() { return "step total mse perceptual bev vq act_reg active_ego active_env"; }

TokenizerTrainResult train_tokenizer(const std::vector<PairSample>& data, const TokenizerTrainOptions& opts,
                                     const std::function<void(const TokenizerTelemetry&)>& on_step) {
  DYNVLA_EXPECT(!data.empty(), "tokenizer training needs data");
  torch::manual_seed(opts.seed);
  TokenizerTrainResult res;
  res.model = Tokenizer(opts.model);
  for (const auto& br : res.model->branch_specs()) res.usage.emplace_back(br.codes);

  std::vector<torch::Tensor> params;
  for (auto& p : res.model->parameters()) {
    if (p.requires_grad()) params.push_back(p);
  }
  nn::Optimizer optim(params, opts.optim);
  Rng rng(mix_seed(opts.seed, 0x746f6b));
  std::vector<std::size_t> idx(static_cast<std::size_t>(opts.optim.batch));
  nn::StateSnapshot last_good;

  for (std::int64_t step = 0; step < opts.optim.total; ++step) {
    for (auto& i : idx) i = static_cast<std::size_t>(rng.below(data.size()));
    const auto batch = make_batch(data, idx);
    optim.zero_grad();
    TokenizerOutput out;
    LossBreakdown loss;
    try {
      try {
        out = res.model->forward(batch);
      } catch (const ContractViolation& e) {
        // Diverged weights surface as non-finite quantizer input.
        torch::NoGradGuard guard;
        bool finite = true;
        for (const auto& part : res.model->encode(batch.obs_t, batch.obs_next)) {
          finite = finite && torch::isfinite(part).all().item<bool>();
        }
        if (finite) throw;
        throw TrainingFault("non-finite encoder output", e.what());
      }
      loss = tokenizer_loss(*res.model, out, batch);
    } catch (const TrainingFault& fault) {
      if (!opts.fault_dir.empty() && last_good.step >= 0) {
        nn::restore_state(last_good, *res.model);
        nn::save_checkpoint(*res.model, opts.fault_dir / "tokenizer_last_good.ckpt",
                            {{"step", std::to_string(last_good.step)}, {"seed", std::to_string(opts.seed)}});
      }
      throw TrainingFault(fault.what(), "step " + std::to_string(step) + ": " + fault.diagnostics());
    }
    if (!opts.fault_dir.empty()) last_good = nn::snapshot_state(*res.model, step);
    loss.total.backward();
    optim.step(step);

    TokenizerTelemetry row;
    row.step = step;
    row.total = loss.total.item<double>();
    row.mse = loss.mse.item<double>();
    row.perceptual = loss.perceptual.item<double>();
    row.bev = loss.bev.item<double>();
    row.vq = loss.vq.item<double>();
    row.act_reg = loss.act_reg.item<double>();
    for (std::size_t b = 0; b < out.q.size(); ++b) {
      auto ids = out.q[b].ids.reshape({-1}).contiguous();
      std::vector<int> v(ids.data_ptr<std::int64_t>(), ids.data_ptr<std::int64_t>() + ids.numel());
      res.usage[b].record(v, step);
    }
    row.active_ego = codebook_activation(res.usage[0], opts.activation_window);
    row.active_env = res.usage.size() > 1 ? codebook_activation(res.usage[1], opts.activation_window) : 0;
    res.telemetry.push_back(row);
    if (on_step) on_step(row);
  }
  res.model->set_trained_steps(opts.optim.total);
  return res;
}

TokenizerEval evaluate_tokenizer(TokenizerImpl& model, const std::vector<PairSample>& data, int batch) {
  torch::NoGradGuard guard;
  TokenizerEval ev;
  double bev_hits = 0, bev_copy_hits = 0, cells = 0, se = 0, se_copy = 0, values = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch)) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + static_cast<std::size_t>(batch)); ++i) idx.push_back(i);
    const auto b = make_batch(data, idx);
    const auto out = model.forward(b);
    if (out.bev_logits.defined()) {
      auto pred = out.bev_logits.argmax(-1);
      bev_hits += (pred == b.bev_next).sum().item<double>();
      bev_copy_hits += (b.bev_t == b.bev_next).sum().item<double>();
      cells += static_cast<double>(b.bev_next.numel());
    }
    if (out.image.defined()) {
      se += (out.image - b.obs_next).pow(2).sum().item<double>();
      se_copy += (b.obs_t - b.obs_next).pow(2).sum().item<double>();
      values += static_cast<double>(b.obs_next.numel());
    }
    ev.samples += static_cast<int>(idx.size());
  }
  if (cells > 0) {
    ev.bev_accuracy = bev_hits / cells;
    ev.bev_accuracy_copy = bev_copy_hits / cells;
  }
  if (values > 0) {
    ev.image_mse = se / values;
    ev.image_mse_copy = se_copy / values;
  }
  return ev;
}

world::Observation to_observation(const torch::Tensor& image) {
  auto c = image.detach().to(torch::kFloat).contiguous();
  world::Observation o;
  o.height = static_cast<int>(c.size(0));
  o.width = static_cast<int>(c.size(1));
  o.channels = static_cast<int>(c.size(2));
  o.data.assign(c.data_ptr<float>(), c.data_ptr<float>() + c.numel());
  return o;
}

world::BevMap to_bev(const torch::Tensor& logits) {
  auto ids = logits.detach().argmax(-1).to(torch::kLong).contiguous();
  world::BevMap m;
  m.height = static_cast<int>(ids.size(0));
  m.width = static_cast<int>(ids.size(1));
  const auto* p = ids.data_ptr<std::int64_t>();
  for (std::int64_t i = 0; i < ids.numel(); ++i) m.data.push_back(static_cast<std::uint8_t>(p[i]));
  return m;
}

TransferMode parse_transfer_mode(const std::string& name) {
  if (name == "ego") return TransferMode::Ego;
  if (name == "env") return TransferMode::Env;
  if (name == "both") return TransferMode::Both;
  throw ConfigError("unknown transfer mode '" + name + "'");
}

TransferResult transfer_dynamics(TokenizerImpl& model, const world::Observation& src_t, const world::Observation& src_next,
                                 const world::Observation& dst_t, const world::BevMap& dst_bev, TransferMode mode) {
  torch::NoGradGuard guard;
  if (model.trained_steps() == 0) std::fprintf(stderr, "warning: transferring dynamics with an untrained tokenizer\n");
  DYNVLA_EXPECT(mode == TransferMode::Both || model.config().decoupled,
                "branch-selective transfer needs a decoupled tokenizer");
  auto st = nn::observation_tensor(src_t).unsqueeze(0);
  auto sn = nn::observation_tensor(src_next).unsqueeze(0);
  auto dt = nn::observation_tensor(dst_t).unsqueeze(0);
  auto ids = model.encode_ids(st, sn);
  if (mode != TransferMode::Both) {
    const auto neutral = model.encode_ids(dt, dt);
    if (mode == TransferMode::Ego) ids[1] = neutral[1];
    if (mode == TransferMode::Env) ids[0] = neutral[0];
  }
  auto z = model.embed_ids(ids);
  TransferResult r;
  if (model.config().image_branch) r.image = to_observation(model.decode_image(dt, z)[0]);
  if (model.config().bev_branch) r.bev = to_bev(model.decode_bev(nn::bevs_tensor({&dst_bev}), z)[0]);
  return r;
}

}  // namespace dynvla::tokenizer
