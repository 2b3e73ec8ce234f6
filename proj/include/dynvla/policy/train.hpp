#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dynvla/nn/schedule.hpp"
#include "dynvla/policy/model.hpp"
#include "dynvla/tokenizer/model.hpp"
#include "dynvla/world/dataset.hpp"

namespace dynvla::policy {

// Step k holds the ids of the pair (firsts[k], seconds[k]); seconds are the
// later frames rendered in the earlier frame's anchor.
tokenizer::DynamicsTokens build_dynamics_sequence(tokenizer::TokenizerImpl& tok,
                                                  std::span<const world::Observation* const> firsts,
                                                  std::span<const world::Observation* const> seconds);

// Ids of every pair of every episode, [episode][frame] -> per-step ids (ego
// then env), computed in batches.
std::vector<std::vector<std::vector<int>>> encode_episode_pairs(tokenizer::TokenizerImpl& tok,
                                                                 const std::vector<world::EpisodeRecord>& episodes,
                                                                 int batch = 64);

// Class ids of a BEV reduced by an integer factor; each output cell keeps
// the highest-priority class of its block.
std::vector<int> downsample_bev(const world::BevMap& bev, int side);

struct SftSample {
  PolicyContext ctx;
  CoTSequence target;
  world::Trajectory expert;
  const world::EpisodeRecord* episode = nullptr;
  int frame = 0;
};

struct SftDataOptions {
  int first_frame = 2;
  int last_frame = 9;
  int context_gap = 2;  // O_prev is this many frames before O_t
};

// Samples whose future frames are missing are skipped and reported in `log`.
std::vector<SftSample> build_sft_samples(const std::vector<world::EpisodeRecord>& episodes,
                                         const std::vector<std::vector<std::vector<int>>>& pair_ids,
                                         const VocabLayout& layout, const SequenceSpec& spec,
                                         const SftDataOptions& opts = {}, std::vector<std::string>* log = nullptr);

struct SftTelemetry {
  std::int64_t step = 0;
  double l_dyn = 0, l_act = 0, total = 0;
  double dyn_accuracy = 0;  // teacher-forced, this batch
  double fmt_valid = -1;    // periodic greedy decodes; -1 when not evaluated

  std::string to_row() const;
};
std::string sft_telemetry_header();

struct SftTrainOptions {
  PolicyConfig model;
  nn::OptimConfig optim;
  VocabLayout layout;
  SequenceSpec spec;
  std::uint64_t seed = 1;
  int decode_every = 250;
  int decode_samples = 32;
  std::filesystem::path fault_dir;
};

struct SftTrainResult {
  Policy model{nullptr};
  std::vector<SftTelemetry> telemetry;
};

SftTrainResult train_sft(const std::vector<SftSample>& train, const std::vector<SftSample>& probe,
                         const SftTrainOptions& opts, const std::function<void(const SftTelemetry&)>& on_step = {});

ContextBatch context_batch(const std::vector<SftSample>& samples, std::span<const std::size_t> indices);
torch::Tensor target_batch(const std::vector<SftSample>& samples, std::span<const std::size_t> indices);

// Teacher-forced accuracy over reasoning content positions.
double teacher_forced_dyn_accuracy(PolicyImpl& policy, const std::vector<SftSample>& samples, const SequenceSpec& spec,
                                   int batch = 64);
// Fraction of greedy unconstrained decodes that parse.
double format_valid_rate(PolicyImpl& policy, const std::vector<SftSample>& samples, const VocabLayout& layout,
                         const SequenceSpec& spec, int batch = 64);

}  // namespace dynvla::policy
