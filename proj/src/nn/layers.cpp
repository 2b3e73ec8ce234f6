#include "dynvla/nn/layers.hpp"

#include <cmath>
#include <limits>

#include "dynvla/common/error.hpp"

namespace dynvla::nn {

void PatchConfig::validate() const {
  if (patch <= 0 || image_side <= 0 || image_side % patch != 0) {
    throw ConfigError("image side " + std::to_string(image_side) + " is not divisible by patch " +
                      std::to_string(patch));
  }
  if (channels <= 0 || dim <= 0) throw ConfigError("patch channels and dim must be positive");
}

void TransformerConfig::validate() const {
  if (layers < 1) throw ConfigError("transformer needs at least one layer");
  if (hidden <= 0 || heads <= 0 || hidden % heads != 0) throw ConfigError("hidden dim must be divisible by heads");
  if (ff_ratio < 1 || max_len < 1) throw ConfigError("bad transformer sizes");
}

torch::Tensor to_patches(const torch::Tensor& images, int patch) {
  DYNVLA_EXPECT(images.dim() == 4, "images must be [B, H, W, C]");
  const auto b = images.size(0), h = images.size(1), w = images.size(2), c = images.size(3);
  DYNVLA_EXPECT(h % patch == 0 && w % patch == 0, "image not divisible by patch");
  return images.reshape({b, h / patch, patch, w / patch, patch, c})
      .permute({0, 1, 3, 2, 4, 5})
      .reshape({b, (h / patch) * (w / patch), patch * patch * c});
}

torch::Tensor from_patches(const torch::Tensor& patches, int side, int patch, int channels) {
  const auto b = patches.size(0);
  const int g = side / patch;
  return patches.reshape({b, g, g, patch, patch, channels}).permute({0, 1, 3, 2, 4, 5}).reshape({b, side, side, channels});
}

PatchEmbedImpl::PatchEmbedImpl(PatchConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  proj = register_module("proj", torch::nn::Linear(cfg_.patch_values(), cfg_.dim));
  pos = register_parameter("pos", torch::randn({cfg_.count(), cfg_.dim}) * 0.02);
}

torch::Tensor PatchEmbedImpl::forward(const torch::Tensor& images) {
  DYNVLA_EXPECT(images.dim() == 4 && images.size(1) == cfg_.image_side && images.size(2) == cfg_.image_side &&
                    images.size(3) == cfg_.channels,
                "image shape does not match the patch config");
  return proj(to_patches(images, cfg_.patch)) + pos;
}

BlockImpl::BlockImpl(int hidden, int heads, int ff_ratio) : heads_(heads) {
  ln1 = register_module("ln1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({hidden})));
  ln2 = register_module("ln2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({hidden})));
  qkv = register_module("qkv", torch::nn::Linear(hidden, 3 * hidden));
  out = register_module("out", torch::nn::Linear(hidden, hidden));
  fc1 = register_module("fc1", torch::nn::Linear(hidden, hidden * ff_ratio));
  fc2 = register_module("fc2", torch::nn::Linear(hidden * ff_ratio, hidden));
}

torch::Tensor BlockImpl::forward(const torch::Tensor& x, const std::optional<torch::Tensor>& mask) {
  const auto b = x.size(0), t = x.size(1), d = x.size(2);
  const auto hd = d / heads_;
  auto q3 = qkv(ln1(x)).reshape({b, t, 3, heads_, hd}).permute({2, 0, 3, 1, 4});
  auto q = q3[0], k = q3[1], v = q3[2];
  auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(hd));
  if (mask) scores = scores + *mask;
  auto att = torch::matmul(torch::softmax(scores, -1), v).permute({0, 2, 1, 3}).reshape({b, t, d});
  auto h = x + out(att);
  return h + fc2(torch::gelu(fc1(ln2(h))));
}

torch::Tensor causal_mask(int64_t length, torch::TensorOptions opts) {
  return prefix_causal_mask(0, length, opts);
}

torch::Tensor prefix_causal_mask(int64_t prefix, int64_t length, torch::TensorOptions opts) {
  const auto dtype = opts.has_dtype() ? opts.dtype().toScalarType() : torch::kFloat;
  auto idx = torch::arange(length, torch::kLong);
  auto i = idx.unsqueeze(1), j = idx.unsqueeze(0);
  auto allowed = (j <= i) | (j < prefix);
  auto blocked = torch::full({length, length}, -std::numeric_limits<double>::infinity(), torch::TensorOptions().dtype(dtype));
  return torch::where(allowed, torch::zeros({length, length}, torch::TensorOptions().dtype(dtype)), blocked);
}

TransformerStackImpl::TransformerStackImpl(TransformerConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  blocks = register_module("blocks", torch::nn::ModuleList());
  for (int i = 0; i < cfg_.layers; ++i) blocks->push_back(Block(cfg_.hidden, cfg_.heads, cfg_.ff_ratio));
  final_ln = register_module("final_ln", torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg_.hidden})));
}

torch::Tensor TransformerStackImpl::forward(const torch::Tensor& x, const std::optional<torch::Tensor>& mask) {
  DYNVLA_EXPECT(x.dim() == 3 && x.size(2) == cfg_.hidden, "sequence must be [B, T, hidden]");
  DYNVLA_EXPECT(x.size(1) <= cfg_.max_len, "sequence length " + std::to_string(x.size(1)) + " exceeds max " +
                                               std::to_string(cfg_.max_len));
  std::optional<torch::Tensor> m = mask;
  if (!m && cfg_.causal) m = causal_mask(x.size(1), x.options());
  if (m) {
    DYNVLA_EXPECT(m->dim() == 2 && m->size(0) == x.size(1) && m->size(1) == x.size(1), "mask shape mismatch");
    if (m->scalar_type() != x.scalar_type()) m = m->to(x.scalar_type());
  }
  torch::Tensor h = x;
  for (const auto& blk : *blocks) h = blk->as<Block>()->forward(h, m);
  return final_ln(h);
}

}  // namespace dynvla::nn
