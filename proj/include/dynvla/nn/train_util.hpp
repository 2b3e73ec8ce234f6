#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dynvla/nn/schedule.hpp"
#include "dynvla/world/render.hpp"

namespace dynvla::nn {

// AdamW with the configured betas, scheduled learning rate and global-norm
// gradient clipping.
class Optimizer {
 public:
  Optimizer(std::vector<torch::Tensor> params, OptimConfig cfg);

  // Clips, sets lr_at(step) and applies one update. Returns the pre-clip
  // gradient norm.
  double step(std::int64_t step);
  void zero_grad();
  double lr(std::int64_t step) const { return lr_at(step, cfg_); }
  const OptimConfig& config() const { return cfg_; }

 private:
  std::vector<torch::Tensor> params_;
  OptimConfig cfg_;
  std::unique_ptr<torch::optim::AdamW> adam_;
};

// Named parameters and buffers of `module` as float32 arrays plus metadata
// (single-line values).
void save_checkpoint(const torch::nn::Module& module, const std::filesystem::path& path,
                     const std::map<std::string, std::string>& meta);
// Copies every array into the matching parameter or buffer. Throws
// FormatError on a missing name or shape mismatch, IoError on a bad path.
std::map<std::string, std::string> load_checkpoint(torch::nn::Module& module, const std::filesystem::path& path);

// Deep copy of parameters and buffers from `src` into an identically shaped
// module.
void copy_state(const torch::nn::Module& src, torch::nn::Module& dst);

// Detached copies of every parameter and buffer, taken at `step`. Used to
// write the last state that produced a finite loss when training diverges.
struct StateSnapshot {
  std::int64_t step = -1;
  std::vector<std::pair<std::string, torch::Tensor>> tensors;
};
StateSnapshot snapshot_state(const torch::nn::Module& module, std::int64_t step);
void restore_state(const StateSnapshot& snap, torch::nn::Module& module);
bool all_finite(const torch::nn::Module& module);

// [H, W, C] float tensor from an observation, stacked to [B, H, W, C].
torch::Tensor observation_tensor(const world::Observation& obs);
torch::Tensor observations_tensor(const std::vector<const world::Observation*>& obs);
// [B, H, W] int64 class ids.
torch::Tensor bevs_tensor(const std::vector<const world::BevMap*>& bevs);

}  // namespace dynvla::nn
