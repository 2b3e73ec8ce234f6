#pragma once

#include <span>
#include <vector>

namespace dynvla::rft {

inline constexpr double kAdvantageEps = 1e-8;

// (r_i - mean) / (population std + eps).
std::vector<double> group_advantages(std::span<const double> rewards, double eps = kAdvantageEps);

// min(rho * A, clip(rho, 1 - eps, 1 + eps) * A)
double clipped_token_term(double ratio, double advantage, double clip_eps);

// Exact KL(p || q) over a full categorical distribution. Throws
// ContractViolation when either input is not normalised within `tol`.
double categorical_kl(std::span<const double> p, std::span<const double> q, double tol = 1e-6);

// One context, G sampled sequences. Per-token vectors are indexed [i][t].
struct RolloutGroup {
  std::vector<std::vector<int>> sequences;
  std::vector<std::vector<double>> logp_current;
  std::vector<std::vector<double>> logp_old;
  std::vector<std::vector<double>> logp_ref;
  std::vector<std::vector<double>> token_kl;  // KL(pi_theta || pi_ref) at each position
  std::vector<double> rewards;
  std::vector<double> advantages;
};

struct ObjectiveValue {
  double value = 0.0;      // surrogate - beta * kl
  double surrogate = 0.0;
  double kl = 0.0;
  int skipped_tokens = 0;  // non-finite ratios
  double clip_fraction = 0.0;
};

// mean_i (1/|o_i|) sum_t min(rho A_i, clip(rho) A_i) - beta * KL, where KL
// is the per-token KL averaged within each sequence, then over the group.
ObjectiveValue grpo_objective(const RolloutGroup& group, double clip_eps, double beta);

}  // namespace dynvla::rft
