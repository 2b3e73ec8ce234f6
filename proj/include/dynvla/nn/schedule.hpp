#pragma once

#include <cstdint>

namespace dynvla::nn {

struct OptimConfig {
  double max_lr = 1e-3;
  std::int64_t warmup = 100;
  std::int64_t total = 1000;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.01;
  int batch = 32;
  double clip_norm = 1.0;

  // Throws ConfigError unless 0 <= warmup < total and max_lr > 0.
  void validate() const;
};

// Linear warm-up from 0 to max_lr, then cosine decay to 0 at `total`.
double lr_at(std::int64_t step, const OptimConfig& cfg);

}  // namespace dynvla::nn
