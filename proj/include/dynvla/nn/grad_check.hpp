#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace dynvla::nn {

struct GradCheckOptions {
  double step = 1e-4;
  int probes_per_tensor = 4;
  std::uint64_t seed = 0;
  // Relative error is |g_ad - g_fd| / max(|g_ad|, |g_fd|, floor).
  double floor = 1e-6;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  int probes = 0;
  std::string worst;  // "<param>[<flat index>] ad=<..> fd=<..>"
  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

using NamedParams = std::vector<std::pair<std::string, torch::Tensor>>;

// Reverse-mode gradient of `analytic` against central finite differences of
// `numeric`, probed at seeded coordinates of every parameter. The two
// functions coincide when the loss is smooth; they differ only when the
// analytic path uses a gradient substitution (straight-through) that the
// numeric path expresses with frozen discrete choices. Throws
// ContractViolation on a non-finite loss.
GradCheckReport grad_check(const std::function<torch::Tensor()>& analytic, const std::function<torch::Tensor()>& numeric,
                           const NamedParams& params, const GradCheckOptions& opts = {});

inline GradCheckReport grad_check(const std::function<torch::Tensor()>& fn, const NamedParams& params,
                                  const GradCheckOptions& opts = {}) {
  return grad_check(fn, fn, params, opts);
}

NamedParams named_parameters(const torch::nn::Module& module);

}  // namespace dynvla::nn
