#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dynvla/nn/schedule.hpp"
#include "dynvla/policy/model.hpp"

namespace dynvla::rft {

struct RftConfig {
  int group = 8;
  double clip = 0.2;
  double beta = 1e-3;
  double lambda_fmt = 1.0;
  double temperature = 1.0;
  int contexts_per_step = 4;
  int inner_updates = 1;
  int collapse_window = 200;
  double collapse_threshold = 0.05;
  nn::OptimConfig optim;
  std::uint64_t seed = 1;

  // Throws ConfigError unless group >= 2, 0 < clip < 1 and beta >= 0.
  void validate() const;
};

// Tensor form of the group objective over N padded sequences:
// mean_i (1/|o_i|) sum_t min(rho A_i, clip(rho) A_i) - beta * mean_i (1/|o_i|) sum_t KL_t.
// Tokens whose ratio is non-finite are dropped from both sums and counted.
struct GrpoTerms {
  torch::Tensor objective;
  torch::Tensor surrogate;
  torch::Tensor kl;
  double clip_fraction = 0.0;
  int skipped_tokens = 0;
};
GrpoTerms grpo_objective(const torch::Tensor& logp_current, const torch::Tensor& logp_old,
                         const torch::Tensor& token_kl, const torch::Tensor& mask, const torch::Tensor& advantages,
                         double clip_eps, double beta);

// Exact per-position KL(current || reference) from logits, [N, L].
torch::Tensor token_kl(const torch::Tensor& logits_current, const torch::Tensor& logits_reference);

struct RolloutReward {
  double total = 0.0;
  double trajectory = 0.0;
  bool format_ok = false;
};

// A pool of contexts and a reward over generated token sequences.
struct RftTask {
  std::size_t num_contexts = 0;
  std::function<policy::ContextBatch(std::span<const std::size_t>)> contexts;
  std::function<RolloutReward(std::size_t context, const std::vector<int>& tokens)> reward;
  int max_length = 0;
  int stop_token = policy::kEoa;
};

struct RftTelemetry {
  std::int64_t step = 0;
  double mean_reward = 0, fmt_valid_frac = 0, mean_kl = 0, clip_frac = 0;
  std::string to_row() const;  // "step mean_reward fmt_valid_frac mean_kl clip_frac"
};
std::string rft_telemetry_header();

struct RftResult {
  policy::Policy model{nullptr};
  std::vector<RftTelemetry> telemetry;
};

// Starts from a copy of `sft`, keeps a frozen reference copy, and ascends the
// group objective on unconstrained rollouts. Throws TrainingFault when the
// format-valid fraction stays below the collapse threshold for
// `collapse_window` consecutive steps.
RftResult train_rft(policy::PolicyImpl& sft, const RftTask& task, const RftConfig& cfg,
                    const std::function<void(const RftTelemetry&)>& on_step = {});

}  // namespace dynvla::rft
