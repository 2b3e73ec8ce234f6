#pragma once

#include <torch/torch.h>

#include <optional>

namespace dynvla::nn {

struct PatchConfig {
  int image_side = 64;
  int patch = 8;
  int channels = 3;
  int dim = 128;

  int grid() const { return image_side / patch; }
  int count() const { return grid() * grid(); }
  int patch_values() const { return patch * patch * channels; }
  // Throws ConfigError on an indivisible side or non-positive dims.
  void validate() const;
};

struct TransformerConfig {
  int layers = 4;
  int hidden = 128;
  int heads = 4;
  int ff_ratio = 4;
  int max_len = 128;
  bool causal = false;

  void validate() const;
};

// [B, H, W, C] -> [B, N, patch * patch * C], patches in row-major order,
// values within a patch ordered (row, column, channel).
torch::Tensor to_patches(const torch::Tensor& images, int patch);
// Inverse of to_patches.
torch::Tensor from_patches(const torch::Tensor& patches, int side, int patch, int channels);

// Learned linear map of each patch plus a learned absolute position table.
class PatchEmbedImpl : public torch::nn::Module {
 public:
  explicit PatchEmbedImpl(PatchConfig cfg);
  torch::Tensor forward(const torch::Tensor& images);
  const PatchConfig& config() const { return cfg_; }

  torch::nn::Linear proj{nullptr};
  torch::Tensor pos;

 private:
  PatchConfig cfg_;
};
TORCH_MODULE(PatchEmbed);

// Pre-LN block: x + attn(LN(x)), then x + mlp(LN(x)).
class BlockImpl : public torch::nn::Module {
 public:
  BlockImpl(int hidden, int heads, int ff_ratio);
  torch::Tensor forward(const torch::Tensor& x, const std::optional<torch::Tensor>& mask);

 private:
  int heads_;
  torch::nn::LayerNorm ln1{nullptr}, ln2{nullptr};
  torch::nn::Linear qkv{nullptr}, out{nullptr}, fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(Block);

// Additive attention masks ([T, T], 0 allowed / -inf blocked).
torch::Tensor causal_mask(int64_t length, torch::TensorOptions opts = {});
// Positions < prefix attend to the whole prefix; later positions are causal.
torch::Tensor prefix_causal_mask(int64_t prefix, int64_t length, torch::TensorOptions opts = {});

class TransformerStackImpl : public torch::nn::Module {
 public:
  explicit TransformerStackImpl(TransformerConfig cfg);
  // x: [B, T, hidden]. With cfg.causal and no explicit mask a causal mask is
  // used. Throws ContractViolation when T exceeds max_len.
  torch::Tensor forward(const torch::Tensor& x, const std::optional<torch::Tensor>& mask = std::nullopt);
  const TransformerConfig& config() const { return cfg_; }

 private:
  TransformerConfig cfg_;
  torch::nn::ModuleList blocks{nullptr};
  torch::nn::LayerNorm final_ln{nullptr};
};
TORCH_MODULE(TransformerStack);

}  // namespace dynvla::nn
