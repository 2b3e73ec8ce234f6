#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dynvla/harness/config.hpp"
#include "dynvla/harness/policy_eval.hpp"
#include "dynvla/rft/train.hpp"
#include "dynvla/tokenizer/train.hpp"

namespace dynvla::harness {

using Log = std::function<void(const std::string&)>;

struct Datasets {
  std::vector<world::EpisodeRecord> train;
  std::vector<world::EpisodeRecord> holdout;
};

std::uint64_t holdout_seed(std::uint64_t seed);
std::uint64_t rft_pool_seed(std::uint64_t seed);

// Writes <out>/train and <out>/holdout datasets.
void write_datasets(const RunConfig& cfg, const std::filesystem::path& out);
// Reads data.dir when set, otherwise generates both splits from the seed.
Datasets load_datasets(const RunConfig& cfg);

tokenizer::TokenizerConfig tokenizer_config(const RunConfig& cfg);
tokenizer::TokenizerTrainOptions tokenizer_options(const RunConfig& cfg);
policy::PolicyConfig policy_config(const RunConfig& cfg);
nn::OptimConfig sft_optim(const RunConfig& cfg);
rft::RftConfig rft_config(const RunConfig& cfg);
rft::RewardSetup reward_setup(const RunConfig& cfg);

// Creates the directory and echoes the effective config and seed into it.
void prepare_run_dir(const std::filesystem::path& dir, const RunConfig& cfg);
void write_text_file(const std::filesystem::path& path, const std::string& text);

struct TokenizerStage {
  tokenizer::Tokenizer model{nullptr};
  std::vector<tokenizer::TokenizerTelemetry> telemetry;
  tokenizer::TokenizerEval eval;
  int active_codes = 0;  // ego + env at the last step
};
// Writes tokenizer.ckpt, telemetry.txt and eval.txt under `dir`.
TokenizerStage run_tokenizer_stage(const RunConfig& cfg, const Datasets& data, const std::filesystem::path& dir,
                                   const Log& log = {});
tokenizer::Tokenizer load_tokenizer(const RunConfig& cfg, const std::filesystem::path& checkpoint);

// Targets for every split episode; the tokenizer may be null unless the
// reasoning variant is dynamics.
std::vector<policy::SftSample> make_sft_samples(const RunConfig& cfg, const std::vector<world::EpisodeRecord>& episodes,
                                                tokenizer::TokenizerImpl* tok, const Log& log = {});

// Contexts and expert plans of a split for open-loop evaluation; targets
// carry no reasoning content, so no tokenizer is needed.
std::vector<policy::SftSample> open_loop_samples(const RunConfig& cfg, const std::vector<world::EpisodeRecord>& episodes);

struct SftStage {
  policy::Policy model{nullptr};
  std::vector<policy::SftTelemetry> telemetry;
  std::vector<policy::SftSample> train, holdout;
  double fmt_valid = 0.0;     // greedy unconstrained, held-out contexts
  double dyn_accuracy = 0.0;  // teacher-forced, held-out contexts
};
// Writes policy.ckpt, telemetry.txt and eval.txt under `dir`.
SftStage run_sft_stage(const RunConfig& cfg, const Datasets& data, tokenizer::TokenizerImpl* tok,
                       const std::filesystem::path& dir, const Log& log = {});
policy::Policy load_policy(const RunConfig& cfg, const std::filesystem::path& checkpoint);

// Writes policy.ckpt and telemetry.txt under `dir`.
rft::RftResult run_rft_stage(const RunConfig& cfg, policy::PolicyImpl& sft, const std::filesystem::path& dir,
                             const Log& log = {});

std::vector<Scenario> eval_suite(const RunConfig& cfg);
// Write <name>.csv and <name>.txt under `dir`.
ClosedLoopReport run_closed_stage(const RunConfig& cfg, policy::PolicyImpl& model, const std::vector<Scenario>& suite,
                                  const std::filesystem::path& dir, const std::string& name = "closed_loop");
OpenLoopReport run_open_stage(const RunConfig& cfg, policy::PolicyImpl& model,
                              const std::vector<policy::SftSample>& samples, const std::filesystem::path& dir,
                              const std::string& name = "open_loop");

struct TransferTrial {
  world::ScenarioKind dst_kind = world::ScenarioKind::OpenRoad;
  world::Observation dst_t, src_future, ego_image;
  std::optional<world::Vec2> c_dst, c_ego, c_env;  // ego-class centroids (row, col)
  bool ego_ok = false, env_ok = false;
};
struct TransferReport {
  std::vector<TransferTrial> trials;
  int ego_ok = 0, env_ok = 0;
  double expected_rows = 0.0;
  std::string to_csv() const;
  std::string summary() const;
};
// Source: open road with the ego stepped `forward_m` metres ahead in two
// steps; destinations: static scenes of cycled kinds. Ego mode passes when
// the decoded ego centroid lands within one cell of the source displacement,
// env mode when it moves less than one cell.
TransferReport run_transfer_suite(tokenizer::TokenizerImpl& tok, int trials, std::uint64_t seed,
                                  const world::RenderConfig& render, double forward_m = 2.0);

// Trained tokenizers keyed by the settings that affect them.
class TokenizerCache {
 public:
  static std::string key(const RunConfig& cfg);
  void put(const RunConfig& cfg, tokenizer::Tokenizer model) { models_.insert_or_assign(key(cfg), std::move(model)); }
  tokenizer::TokenizerImpl& get_or_train(const RunConfig& cfg, const Datasets& data, const std::filesystem::path& dir,
                                         const Log& log = {});

 private:
  std::map<std::string, tokenizer::Tokenizer> models_;
};

std::vector<std::string> ablation_axes();
// Throws ConfigError for an unknown axis or a value it cannot take. Split
// values are written "ego:env"; on/off axes take on or off.
void apply_axis_value(RunConfig& cfg, const std::string& axis, const std::string& value);

struct AblationCell {
  std::string value;
  ClosedLoopReport closed;
  OpenLoopReport open;
  double fmt_valid = 0.0;
  double dyn_accuracy = 0.0;
  int reasoning_tokens = 0;
};

struct AblationTable {
  std::string axis;
  std::vector<AblationCell> cells;
  std::string to_text() const;
  std::string to_csv() const;
};

// Each cell gets its own run directory <out>/<axis>=<value> with echoed
// config, per-scenario rows and aggregates.
AblationTable ablation_grid(const std::string& axis, const std::vector<std::string>& values, const RunConfig& base,
                            std::uint64_t seed, const std::filesystem::path& out, const Log& log = {},
                            TokenizerCache* cache = nullptr);

}  // namespace dynvla::harness
