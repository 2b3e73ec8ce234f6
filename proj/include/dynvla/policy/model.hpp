#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include "dynvla/nn/layers.hpp"
#include "dynvla/policy/sequence.hpp"
#include "dynvla/world/dataset.hpp"

namespace dynvla::policy {

struct PolicyConfig {
  int obs_side = 64;
  int channels = 3;
  int patch = 16;
  int hidden = 128;
  int heads = 4;
  int layers = 4;
  int ff_ratio = 4;
  int vocab_size = 2181;
  int max_target_len = 32;
  double lambda_act = 1.0;
  bool include_markers = true;

  void validate() const;
  int prefix_length() const { return 2 * (obs_side / patch) * (obs_side / patch) + 1; }
};

// Speed, acceleration and command as conditioning features. A zero state
// (standing still, straight) maps to the zero vector.
inline constexpr int kStateFeatures = 4;
std::vector<float> state_features(const world::EgoStateSummary& s);

struct PolicyContext {
  const world::Observation* obs_prev = nullptr;
  const world::Observation* obs_t = nullptr;
  world::EgoStateSummary state;
};

struct ContextBatch {
  torch::Tensor obs_prev;  // [B, H, W, C]
  torch::Tensor obs_t;     // [B, H, W, C]
  torch::Tensor state;     // [B, kStateFeatures]
  std::int64_t size() const { return obs_t.size(0); }
  ContextBatch index(const torch::Tensor& rows) const;
};
ContextBatch make_context_batch(const std::vector<PolicyContext>& contexts);

class PolicyImpl : public torch::nn::Module {
 public:
  explicit PolicyImpl(PolicyConfig cfg);
  const PolicyConfig& config() const { return cfg_; }

  // patchify(O_prev) ++ patchify(O_t) ++ state embedding, [B, P, hidden].
  torch::Tensor encode_context(const ContextBatch& ctx);
  // Teacher forcing: logits[:, j] predicts tokens[:, j] from the prefix and
  // tokens[:, :j]. tokens: [B, L] int64, returns [B, L, V].
  torch::Tensor forward(const ContextBatch& ctx, const torch::Tensor& tokens);
  // Logits for the next token after `tokens` ([B, L], L may be 0): [B, V].
  torch::Tensor next_logits(const ContextBatch& ctx, const torch::Tensor& tokens);

  nn::PatchEmbed patch_embed{nullptr};
  torch::Tensor pos_prev;
  torch::nn::Linear state_proj{nullptr};
  torch::Tensor state_pos;
  torch::nn::Embedding token_embed{nullptr};
  torch::Tensor token_pos;
  nn::TransformerStack trunk{nullptr};
  torch::nn::Linear head{nullptr};

 private:
  torch::Tensor run(const ContextBatch& ctx, const torch::Tensor& inputs);
  PolicyConfig cfg_;
};
TORCH_MODULE(Policy);

// Per-span masks over target positions, [L] bool.
struct SpanMasks {
  torch::Tensor dyn;
  torch::Tensor act;
};
SpanMasks span_masks(const SequenceSpec& spec, bool include_markers);

struct SftLoss {
  torch::Tensor l_dyn, l_act, total;
};
// Mean NLL over the reasoning span and over the action span; total =
// l_dyn + lambda_act * l_act. Throws TrainingFault on a non-finite total.
SftLoss sft_loss(const torch::Tensor& logits, const torch::Tensor& targets, const SpanMasks& masks, double lambda_act);

struct SamplingConfig {
  double temperature = 0.0;  // 0: greedy
  int top_k = 0;             // 0: off
  double top_p = 1.0;
  bool constrained = false;  // mask logits to the legal template region
  std::uint64_t seed = 0;
  int max_length = 0;        // 0: template length
  int stop_token = kEoa;     // < 0: never stop early
};

struct Generation {
  std::vector<std::vector<int>> tokens;
  std::vector<std::vector<double>> logprobs;  // sampling-distribution log-prob of each token
};

// Autoregressive decoding for every context in the batch. `layout`/`spec`
// are used for constrained mode and the default length.
Generation generate(PolicyImpl& policy, const ContextBatch& ctx, const SamplingConfig& sampling,
                    const VocabLayout* layout = nullptr, const SequenceSpec* spec = nullptr);

}  // namespace dynvla::policy
