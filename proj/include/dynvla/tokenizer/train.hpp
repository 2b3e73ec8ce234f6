#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dynvla/nn/schedule.hpp"
#include "dynvla/tokenizer/codebook_usage.hpp"
#include "dynvla/tokenizer/model.hpp"
#include "dynvla/world/dataset.hpp"

namespace dynvla::tokenizer {

// One dynamics pair: frame t and frame t + stride rendered in t's anchor.
struct PairSample {
  const world::Observation* obs_t = nullptr;
  const world::Observation* obs_next = nullptr;
  const world::BevMap* bev_t = nullptr;
  const world::BevMap* bev_next = nullptr;
  world::EgoAction action;
};

std::vector<PairSample> collect_pairs(const std::vector<world::EpisodeRecord>& episodes);
TokenizerBatch make_batch(const std::vector<PairSample>& samples, std::span<const std::size_t> indices);

struct TokenizerTelemetry {
  std::int64_t step = 0;
  double total = 0, mse = 0, perceptual = 0, bev = 0, vq = 0, act_reg = 0;
  int active_ego = 0;  // shared codebook count when not decoupled
  int active_env = 0;

  // "step total mse perceptual bev vq act_reg active_ego active_env"
  std::string to_row() const;
};
std::string tokenizer_telemetry_header();

struct TokenizerTrainOptions {
  TokenizerConfig model;
  nn::OptimConfig optim;
  std::int64_t activation_window = 500;
  std::uint64_t seed = 1;
  // When set, a last-good checkpoint is written here on divergence.
  std::filesystem::path fault_dir;
};

struct TokenizerTrainResult {
  Tokenizer model{nullptr};
  std::vector<TokenizerTelemetry> telemetry;
  std::vector<CodebookUsage> usage;  // per branch
};

// Deterministic per seed. Throws TrainingFault on a non-finite loss.
TokenizerTrainResult train_tokenizer(const std::vector<PairSample>& data, const TokenizerTrainOptions& opts,
                                     const std::function<void(const TokenizerTelemetry&)>& on_step = {});

struct TokenizerEval {
  int samples = 0;
  double bev_accuracy = 0;       // decoded future BEV, cell accuracy
  double bev_accuracy_copy = 0;  // copy-current-frame baseline
  double image_mse = 0;
  double image_mse_copy = 0;
};
TokenizerEval evaluate_tokenizer(TokenizerImpl& model, const std::vector<PairSample>& data, int batch = 64);

world::Observation to_observation(const torch::Tensor& image);  // [H, W, C]
world::BevMap to_bev(const torch::Tensor& logits);              // [Hb, Wb, C] -> argmax

enum class TransferMode { Ego, Env, Both };
TransferMode parse_transfer_mode(const std::string& name);

struct TransferResult {
  world::Observation image;
  world::BevMap bev;
};

// Encodes the source pair, replaces the branch that is not transferred with
// ids from the static destination pair (dst, dst), and decodes in the
// destination context. Warns on stderr for an untrained model.
TransferResult transfer_dynamics(TokenizerImpl& model, const world::Observation& src_t, const world::Observation& src_next,
                                 const world::Observation& dst_t, const world::BevMap& dst_bev, TransferMode mode);

}  // namespace dynvla::tokenizer
