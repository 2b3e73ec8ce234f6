#include "dynvla/policy/train.hpp"

#include <algorithm>
#include <sstream>

#include "dynvla/codec/action_codec.hpp"
#include "dynvla/common/error.hpp"
#include "dynvla/common/rng.hpp"
#include "dynvla/nn/train_util.hpp"

namespace dynvla::policy {

tokenizer::DynamicsTokens build_dynamics_sequence(tokenizer::TokenizerImpl& tok,
                                                  std::span<const world::Observation* const> firsts,
                                                  std::span<const world::Observation* const> seconds) {
  DYNVLA_EXPECT(!firsts.empty() && firsts.size() == seconds.size(), "one later frame per step expected");
  std::vector<const world::Observation*> a(firsts.begin(), firsts.end()), b(seconds.begin(), seconds.end());
  const auto ids = tok.encode_ids(nn::observations_tensor(a), nn::observations_tensor(b));
  tokenizer::DynamicsTokens d;
  d.steps = static_cast<int>(firsts.size());
  d.n_ego = static_cast<int>(ids[0].size(1));
  d.n_env = ids.size() > 1 ? static_cast<int>(ids[1].size(1)) : 0;
  for (int k = 0; k < d.steps; ++k) {
    for (const auto& br : ids) {
      auto row = br[k].contiguous();
      for (std::int64_t i = 0; i < row.size(0); ++i) d.ids.push_back(static_cast<int>(row[i].item<std::int64_t>()));
    }
  }
  return d;
}

std::vector<std::vector<std::vector<int>>> encode_episode_pairs(tokenizer::TokenizerImpl& tok,
                                                                 const std::vector<world::EpisodeRecord>& episodes,
                                                                 int batch) {
  std::vector<std::pair<std::size_t, std::size_t>> keys;
  std::vector<std::vector<std::vector<int>>> out(episodes.size());
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    out[e].resize(episodes[e].pair_next_observations.size());
    for (std::size_t t = 0; t < episodes[e].pair_next_observations.size(); ++t) keys.emplace_back(e, t);
  }
  for (std::size_t start = 0; start < keys.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(keys.size(), start + static_cast<std::size_t>(batch));
    std::vector<const world::Observation*> a, b;
    for (std::size_t i = start; i < end; ++i) {
      a.push_back(&episodes[keys[i].first].observations[keys[i].second]);
      b.push_back(&episodes[keys[i].first].pair_next_observations[keys[i].second]);
    }
    const auto ids = tok.encode_ids(nn::observations_tensor(a), nn::observations_tensor(b));
    for (std::size_t i = start; i < end; ++i) {
      auto& dst = out[keys[i].first][keys[i].second];
      for (const auto& br : ids) {
        auto row = br[static_cast<std::int64_t>(i - start)].contiguous();
        for (std::int64_t j = 0; j < row.size(0); ++j) dst.push_back(static_cast<int>(row[j].item<std::int64_t>()));
      }
    }
  }
  return out;
}

std::vector<int> downsample_bev(const world::BevMap& bev, int side) {
  DYNVLA_EXPECT(side > 0 && bev.height % side == 0 && bev.width == bev.height, "bev not divisible by target side");
  const int f = bev.height / side;
  std::vector<int> out(static_cast<std::size_t>(side * side), 0);
  for (int r = 0; r < bev.height; ++r) {
    for (int c = 0; c < bev.width; ++c) {
      auto& cell = out[static_cast<std::size_t>((r / f) * side + c / f)];
      cell = std::max<int>(cell, bev.at(r, c));
    }
  }
  return out;
}

std::vector<SftSample> build_sft_samples(const std::vector<world::EpisodeRecord>& episodes,
                                         const std::vector<std::vector<std::vector<int>>>& pair_ids,
                                         const VocabLayout& layout, const SequenceSpec& spec,
                                         const SftDataOptions& opts, std::vector<std::string>* log) {
  std::vector<SftSample> out;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& ep = episodes[e];
    const int stride = ep.pair_stride;
    for (int t = opts.first_frame; t <= opts.last_frame; ++t) {
      if (t - opts.context_gap < 0 || t >= static_cast<int>(ep.size())) continue;
      CotContent cot;
      if (spec.variant == CotVariant::Dynamics) {
        const int last = t + stride * (spec.horizon - 1);
        if (last >= static_cast<int>(pair_ids.at(e).size())) {
          if (log) log->push_back("episode " + std::to_string(e) + " frame " + std::to_string(t) +
                                  ": missing future frames for K=" + std::to_string(spec.horizon));
          continue;
        }
        cot.dynamics.steps = spec.horizon;
        cot.dynamics.n_ego = spec.n_ego;
        cot.dynamics.n_env = spec.n_env;
        for (int k = 0; k < spec.horizon; ++k) {
          const auto& ids = pair_ids[e][static_cast<std::size_t>(t + stride * k)];
          cot.dynamics.ids.insert(cot.dynamics.ids.end(), ids.begin(), ids.end());
        }
      } else if (spec.variant == CotVariant::DenseBev) {
        cot.bev_cells = downsample_bev(ep.pair_next_bevs[static_cast<std::size_t>(t)], spec.dense_bev_side);
      } else if (spec.variant == CotVariant::MetaAction) {
        cot.meta_action = static_cast<int>(meta_action_from_plan(ep.expert[static_cast<std::size_t>(t)],
                                                                 ep.ego_states[static_cast<std::size_t>(t)].speed,
                                                                 world::kDefaultDt));
      }
      const auto enc = codec::encode_actions(ep.expert[static_cast<std::size_t>(t)], spec.codec);
      SftSample s;
      s.ctx = {&ep.observations[static_cast<std::size_t>(t - opts.context_gap)],
               &ep.observations[static_cast<std::size_t>(t)], ep.ego_states[static_cast<std::size_t>(t)]};
      s.target = build_target_sequence(layout, spec, cot, enc.ids);
      s.expert = ep.expert[static_cast<std::size_t>(t)];
      s.episode = &ep;
      s.frame = t;
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::string SftTelemetry::to_row() const {
  std::ostringstream os;
  os.precision(8);
  os << step << ' ' << l_dyn << ' ' << l_act << ' ' << total << ' ' << dyn_accuracy << ' ' << fmt_valid;
  return os.str();
}

std::string sft_telemetry_header() { return "step l_dyn l_act total dyn_acc fmt_valid"; }

ContextBatch context_batch(const std::vector<SftSample>& samples, std::span<const std::size_t> indices) {
  std::vector<PolicyContext> ctx;
  for (auto i : indices) ctx.push_back(samples[i].ctx);
  return make_context_batch(ctx);
}

torch::Tensor target_batch(const std::vector<SftSample>& samples, std::span<const std::size_t> indices) {
  const auto l = static_cast<std::int64_t>(samples[indices[0]].target.tokens.size());
  std::vector<std::int64_t> flat;
  for (auto i : indices) {
    DYNVLA_EXPECT(static_cast<std::int64_t>(samples[i].target.tokens.size()) == l, "targets differ in length");
    flat.insert(flat.end(), samples[i].target.tokens.begin(), samples[i].target.tokens.end());
  }
  return torch::tensor(flat, torch::kLong).view({static_cast<std::int64_t>(indices.size()), l});
}

namespace {

torch::Tensor content_mask(const SequenceSpec& spec) {
  auto m = torch::zeros({spec.length()}, torch::kBool);
  if (spec.has_cot()) m.slice(0, 1, 1 + spec.cot_content_length()).fill_(true);
  return m;
}

double masked_accuracy(const torch::Tensor& logits, const torch::Tensor& targets, const torch::Tensor& mask,
                       double& hits) {
  auto correct = (logits.argmax(-1) == targets) & mask.unsqueeze(0);
  hits = correct.sum().item<double>();
  return static_cast<double>(targets.size(0)) * mask.sum().item<double>();
}

}  // namespace

SftTrainResult train_sft(const std::vector<SftSample>& train, const std::vector<SftSample>& probe,
                         const SftTrainOptions& opts, const std::function<void(const SftTelemetry&)>& on_step) {
  DYNVLA_EXPECT(!train.empty(), "SFT needs samples");
  torch::manual_seed(opts.seed);
  SftTrainResult res;
  res.model = Policy(opts.model);
  nn::Optimizer optim(res.model->parameters(), opts.optim);
  Rng rng(mix_seed(opts.seed, 0x736674));
  const auto masks = span_masks(opts.spec, opts.model.include_markers);
  const auto cmask = content_mask(opts.spec);
  std::vector<std::size_t> idx(static_cast<std::size_t>(opts.optim.batch));
  nn::StateSnapshot last_good;
  for (std::int64_t step = 0; step < opts.optim.total; ++step) {
    for (auto& i : idx) i = static_cast<std::size_t>(rng.below(train.size()));
    const auto ctx = context_batch(train, idx);
    const auto tgt = target_batch(train, idx);
    optim.zero_grad();
    const auto logits = res.model->forward(ctx, tgt);
    SftLoss loss;
    try {
      loss = sft_loss(logits, tgt, masks, opts.model.lambda_act);
    } catch (const TrainingFault& fault) {
      if (!opts.fault_dir.empty() && last_good.step >= 0) {
        nn::restore_state(last_good, *res.model);
        nn::save_checkpoint(*res.model, opts.fault_dir / "policy_last_good.ckpt",
                            {{"step", std::to_string(last_good.step)}, {"seed", std::to_string(opts.seed)}});
      }
      throw TrainingFault(fault.what(), "step " + std::to_string(step) + ": " + fault.diagnostics());
    }
    if (!opts.fault_dir.empty()) last_good = nn::snapshot_state(*res.model, step);
    loss.total.backward();
    optim.step(step);

    SftTelemetry row;
    row.step = step;
    row.l_dyn = loss.l_dyn.item<double>();
    row.l_act = loss.l_act.item<double>();
    row.total = loss.total.item<double>();
    double hits = 0.0;
    const double count = masked_accuracy(logits.detach(), tgt, cmask, hits);
    row.dyn_accuracy = count > 0 ? hits / count : 0.0;
    const bool last = step + 1 == opts.optim.total;
    if (!probe.empty() && opts.decode_every > 0 && ((step + 1) % opts.decode_every == 0 || last)) {
      std::vector<SftSample> subset(probe.begin(),
                                    probe.begin() + std::min<std::ptrdiff_t>(opts.decode_samples,
                                                                             static_cast<std::ptrdiff_t>(probe.size())));
      row.fmt_valid = format_valid_rate(*res.model, subset, opts.layout, opts.spec);
    }
    res.telemetry.push_back(row);
    if (on_step) on_step(row);
  }
  return res;
}

double teacher_forced_dyn_accuracy(PolicyImpl& policy, const std::vector<SftSample>& samples, const SequenceSpec& spec,
                                   int batch) {
  torch::NoGradGuard guard;
  const auto cmask = content_mask(spec);
  double hits = 0.0, count = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch)) {
    idx.clear();
    for (std::size_t i = start; i < std::min(samples.size(), start + static_cast<std::size_t>(batch)); ++i) {
      idx.push_back(i);
    }
    const auto tgt = target_batch(samples, idx);
    double h = 0.0;
    count += masked_accuracy(policy.forward(context_batch(samples, idx), tgt), tgt, cmask, h);
    hits += h;
  }
  return count > 0 ? hits / count : 0.0;
}

double format_valid_rate(PolicyImpl& policy, const std::vector<SftSample>& samples, const VocabLayout& layout,
                         const SequenceSpec& spec, int batch) {
  if (samples.empty()) return 0.0;
  double ok = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch)) {
    idx.clear();
    for (std::size_t i = start; i < std::min(samples.size(), start + static_cast<std::size_t>(batch)); ++i) {
      idx.push_back(i);
    }
    const auto gen = generate(policy, context_batch(samples, idx), SamplingConfig{}, &layout, &spec);
    for (const auto& seq : gen.tokens) ok += parse_sequence(seq, layout, spec).ok() ? 1.0 : 0.0;
  }
  return ok / static_cast<double>(samples.size());
}

}  // namespace dynvla::policy
