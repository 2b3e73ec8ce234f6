#pragma once

#include <torch/torch.h>

#include <optional>
#include <string>
#include <vector>

#include "dynvla/nn/layers.hpp"
#include "dynvla/tokenizer/dynamics_tokens.hpp"
#include "dynvla/world/render.hpp"

namespace dynvla::tokenizer {

struct TokenizerConfig {
  int n_ego = 4;
  int n_env = 4;
  int m_ego = 64;
  int m_env = 64;
  int d_vq = 32;
  double lambda_bev = 0.1;
  double lambda_vq = 1.0;
  double lambda_act_reg = 1.0;
  double beta_commit = 0.25;
  bool perceptual = true;
  double perceptual_weight = 1.0;
  // Off: one query set of n_ego + n_env tokens into one codebook of
  // m_ego + m_env codes, and no action regulariser.
  bool decoupled = true;
  bool image_branch = true;
  bool bev_branch = true;

  int obs_side = 64;
  int channels = 3;
  int bev_side = 32;
  int bev_classes = world::kBevClassCount;
  int patch = 16;
  int bev_patch = 8;
  int hidden = 128;
  int heads = 4;
  int enc_layers = 4;
  int dec_layers = 2;
  int ff_ratio = 4;

  void validate() const;
  int total_tokens() const { return n_ego + n_env; }
};

// One query set and its codebook.
struct BranchSpec {
  std::string name;  // "ego", "env" or "shared"
  int tokens = 0;
  int codes = 0;
};
std::vector<BranchSpec> branches(const TokenizerConfig& cfg);

struct QuantizeResult {
  torch::Tensor ids;      // [B, n] int64
  torch::Tensor z_q;      // [B, n, d]
  torch::Tensor vq_loss;  // scalar
};

// Frozen assignment recorded at a probe point: ids, the (code - e) offsets,
// and the stop-gradient operands e and code. Quantising against it gives
// z_q = e + offset and a VQ loss whose sg[] operands are constants, so the
// result is a smooth function whose derivative matches the straight-through
// gradient.
struct FrozenAssignment {
  torch::Tensor ids;
  torch::Tensor offset;
  torch::Tensor e;     // sg[e]
  torch::Tensor code;  // sg[c]
};

// Nearest-code assignment with lowest-index ties, straight-through z_q and
// ||sg[e] - c||^2 + beta ||e - sg[c]||^2 averaged over vectors.
// Throws ContractViolation on non-finite input.
QuantizeResult quantize(const torch::Tensor& e, const torch::Tensor& codebook, double beta_commit,
                        const FrozenAssignment* frozen = nullptr);

// Row gather; throws ContractViolation on an out-of-range id.
torch::Tensor lookup(const torch::Tensor& ids, const torch::Tensor& codebook);

// Fixed random convolutional feature extractor used as the perceptual
// distance. Weights are frozen at construction.
class PerceptualNetImpl : public torch::nn::Module {
 public:
  PerceptualNetImpl(int channels, std::uint64_t seed);
  // Sum over layers of the mean squared feature difference; [B, H, W, C] inputs.
  torch::Tensor distance(const torch::Tensor& a, const torch::Tensor& b);

 private:
  torch::nn::Conv2d c1{nullptr}, c2{nullptr}, c3{nullptr};
};
TORCH_MODULE(PerceptualNet);

struct TokenizerBatch {
  torch::Tensor obs_t;     // [B, H, W, C]
  torch::Tensor obs_next;  // [B, H, W, C]
  torch::Tensor bev_t;     // [B, Hb, Wb] int64
  torch::Tensor bev_next;  // [B, Hb, Wb] int64
  torch::Tensor action;    // [B, 3]
};

struct TokenizerOutput {
  std::vector<torch::Tensor> e;    // per branch [B, n_b, d]
  std::vector<QuantizeResult> q;   // per branch
  torch::Tensor z;                 // [B, n_total, d]
  torch::Tensor image;             // [B, H, W, C], undefined when the branch is off
  torch::Tensor bev_logits;        // [B, Hb, Wb, C_bev], undefined when off
  torch::Tensor action;            // [B, 3], undefined when not decoupled
  torch::Tensor vq_loss;           // summed over branches
};

struct LossBreakdown {
  torch::Tensor total, mse, perceptual, bev, vq, act_reg;
};

class TokenizerImpl : public torch::nn::Module {
 public:
  explicit TokenizerImpl(TokenizerConfig cfg);

  const TokenizerConfig& config() const { return cfg_; }
  const std::vector<BranchSpec>& branch_specs() const { return branches_; }

  // Continuous query outputs per branch, [B, n_b, d_vq].
  std::vector<torch::Tensor> encode(const torch::Tensor& obs_t, const torch::Tensor& obs_next);
  TokenizerOutput forward(const TokenizerBatch& batch, const std::vector<FrozenAssignment>* frozen = nullptr);
  static std::vector<FrozenAssignment> capture(const TokenizerOutput& out);

  torch::Tensor decode_image(const torch::Tensor& obs_t, const torch::Tensor& z);
  torch::Tensor decode_bev(const torch::Tensor& bev_t, const torch::Tensor& z);
  torch::Tensor predict_action(const torch::Tensor& ego_z);

  // Discrete interface, no gradient. ids are per branch [B, n_b].
  std::vector<torch::Tensor> encode_ids(const torch::Tensor& obs_t, const torch::Tensor& obs_next);
  torch::Tensor embed_ids(const std::vector<torch::Tensor>& ids);

  torch::Tensor& codebook(int branch) { return codebooks_[static_cast<std::size_t>(branch)]; }
  std::int64_t trained_steps() const { return trained_steps_.item<std::int64_t>(); }
  void set_trained_steps(std::int64_t steps);

  PerceptualNet perceptual{nullptr};

 private:
  TokenizerConfig cfg_;
  std::vector<BranchSpec> branches_;

  nn::PatchEmbed img_embed{nullptr};
  torch::Tensor pos_next;
  std::vector<torch::Tensor> queries_;
  nn::TransformerStack encoder{nullptr};
  std::vector<torch::nn::Linear> to_vq_;
  std::vector<torch::Tensor> codebooks_;

  nn::PatchEmbed dec_img_embed{nullptr};
  torch::nn::Linear z_img{nullptr};
  torch::Tensor z_img_pos;
  nn::TransformerStack dec_img{nullptr};
  torch::nn::Linear head_img{nullptr};

  nn::PatchEmbed dec_bev_embed{nullptr};
  torch::nn::Linear z_bev{nullptr};
  torch::Tensor z_bev_pos;
  nn::TransformerStack dec_bev{nullptr};
  torch::nn::Linear head_bev{nullptr};
  torch::Tensor bev_gain;

  torch::nn::Linear act1{nullptr}, act2{nullptr};
  torch::Tensor trained_steps_;
};
TORCH_MODULE(Tokenizer);

// Weighted sum of the terms; throws TrainingFault on a non-finite total.
LossBreakdown tokenizer_loss(TokenizerImpl& model, const TokenizerOutput& out, const TokenizerBatch& batch);

// Per-branch ids flattened into one step of DynamicsTokens (ego then env).
DynamicsTokens to_dynamics_tokens(const std::vector<std::vector<torch::Tensor>>& per_step_ids, int sample);

}  // namespace dynvla::tokenizer
