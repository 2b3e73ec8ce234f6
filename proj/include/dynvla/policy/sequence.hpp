#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dynvla/codec/action_codec.hpp"
#include "dynvla/tokenizer/dynamics_tokens.hpp"

namespace dynvla::policy {

enum class CotVariant { None, Dynamics, DenseBev, MetaAction };

std::string to_string(CotVariant v);
// "none" | "dynamics" | "dense-bev" | "meta-action"; ConfigError otherwise.
CotVariant parse_cot_variant(std::string_view name);

enum class MetaAction : int { Accelerate = 0, Keep = 1, Brake = 2, TurnLeft = 3, TurnRight = 4 };
inline constexpr int kMetaActionCount = 5;

// Thresholded label of an expert plan: lateral offset first, then the change
// between the current speed and the plan's final segment speed.
MetaAction meta_action_from_plan(const world::Trajectory& plan, double ego_speed, double dt,
                                 double lateral_threshold = 1.0, double speed_threshold = 0.5);

inline constexpr int kPad = 0;
inline constexpr int kBod = 1;
inline constexpr int kEod = 2;
inline constexpr int kBoa = 3;
inline constexpr int kEoa = 4;
inline constexpr int kControlCount = 5;

struct IdRange {
  int lo = 0;
  int hi = 0;  // exclusive
  bool contains(int id) const { return id >= lo && id < hi; }
  int size() const { return hi - lo; }
};

// Control ids, then the dynamics region (ego codes then env codes), then the
// action region, then an auxiliary region used only by the dense-bev and
// meta-action reasoning variants.
struct VocabLayout {
  int m_ego = 64;
  int m_env = 64;
  int action_size = 2048;
  int aux_size = 0;

  IdRange dynamics() const { return {kControlCount, kControlCount + m_ego + m_env}; }
  IdRange ego() const { return {kControlCount, kControlCount + m_ego}; }
  IdRange env() const { return {kControlCount + m_ego, kControlCount + m_ego + m_env}; }
  IdRange action() const { return {dynamics().hi, dynamics().hi + action_size}; }
  IdRange aux() const { return {action().hi, action().hi + aux_size}; }
  int size() const { return aux().hi; }
};

// Shape of the generated sequence.
struct SequenceSpec {
  CotVariant variant = CotVariant::Dynamics;
  int horizon = 2;  // K
  int n_ego = 4;
  int n_env = 4;
  int dense_bev_side = 16;
  codec::ActionCodecConfig codec;

  bool has_cot() const { return variant != CotVariant::None; }
  // Content tokens between BOD and EOD.
  int cot_content_length() const;
  int action_length() const { return codec.sequence_length(); }
  int length() const;
};

VocabLayout make_layout(const SequenceSpec& spec, int m_ego, int m_env);

struct CotContent {
  tokenizer::DynamicsTokens dynamics;
  std::vector<int> bev_cells;  // dense-bev variant, class ids
  int meta_action = -1;
};

// Spans are half-open and include their markers.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct CoTSequence {
  std::vector<int> tokens;
  Span cot;
  Span action;
};

// Marker-wrapped target. Throws ContractViolation when content does not fit
// the spec or the layout.
CoTSequence build_target_sequence(const VocabLayout& layout, const SequenceSpec& spec, const CotContent& cot,
                                  std::span<const int> action_ids);

struct FormatViolation {
  std::size_t position = 0;
  std::string rule;
  std::string detail;
};

struct ParseResult {
  std::optional<CoTSequence> sequence;
  CotContent cot;
  std::vector<int> action_ids;  // codec-local
  std::optional<FormatViolation> violation;

  bool ok() const { return !violation.has_value(); }
};

ParseResult parse_sequence(std::span<const int> tokens, const VocabLayout& layout, const SequenceSpec& spec);

// Ids allowed at `position` of a well-formed sequence; empty past the end.
IdRange legal_range(const VocabLayout& layout, const SequenceSpec& spec, std::size_t position);

// Locates the first BOA and reads exactly one action span. Returns codec-local
// ids, or nothing when the span is missing, short, out of slot or unterminated.
std::optional<std::vector<int>> parse_action_span(std::span<const int> tokens, const VocabLayout& layout,
                                                  const SequenceSpec& spec);

}  // namespace dynvla::policy
