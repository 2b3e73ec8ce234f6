#include "dynvla/nn/schedule.hpp"

#include <cmath>
#include <numbers>

#include "dynvla/common/error.hpp"

namespace dynvla::nn {

void OptimConfig::validate() const {
  if (!(max_lr > 0.0)) throw ConfigError("max learning rate must be positive");
  if (warmup < 0 || warmup >= total) throw ConfigError("need 0 <= warm-up < total steps");
  if (batch < 1) throw ConfigError("batch size must be positive");
}

double lr_at(std::int64_t step, const OptimConfig& cfg) {
  DYNVLA_EXPECT(step >= 0 && step <= cfg.total, "step outside the schedule");
  if (step < cfg.warmup) return cfg.max_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup);
  const double frac = static_cast<double>(step - cfg.warmup) / static_cast<double>(cfg.total - cfg.warmup);
  return cfg.max_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace dynvla::nn
