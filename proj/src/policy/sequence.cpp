#include "dynvla/policy/sequence.hpp"

#include <cmath>

#include "dynvla/common/error.hpp"

namespace dynvla::policy {

namespace {

enum class SlotKind { Bod, Eod, Boa, Eoa, Ego, Env, BevCell, Meta, Action };

struct Slot {
  SlotKind kind;
  int index = 0;  // action slot within the codec sequence
};

std::optional<Slot> slot_at(const SequenceSpec& spec, std::size_t position) {
  const auto pos = static_cast<long>(position);
  long cursor = 0;
  if (spec.has_cot()) {
    if (pos == 0) return Slot{SlotKind::Bod};
    const long content = spec.cot_content_length();
    if (pos <= content) {
      const long i = pos - 1;
      switch (spec.variant) {
        case CotVariant::Dynamics: {
          const long per = spec.n_ego + spec.n_env;
          return Slot{(i % per) < spec.n_ego ? SlotKind::Ego : SlotKind::Env};
        }
        case CotVariant::DenseBev: return Slot{SlotKind::BevCell};
        default: return Slot{SlotKind::Meta};
      }
    }
    if (pos == content + 1) return Slot{SlotKind::Eod};
    cursor = content + 2;
  }
  if (pos == cursor) return Slot{SlotKind::Boa};
  const long n = spec.action_length();
  if (pos <= cursor + n) return Slot{SlotKind::Action, static_cast<int>(pos - cursor - 1)};
  if (pos == cursor + n + 1) return Slot{SlotKind::Eoa};
  return std::nullopt;
}

IdRange action_slot_range(const VocabLayout& layout, const SequenceSpec& spec, int slot) {
  const int lo = layout.action().lo + codec::action_id(spec.codec, slot, 0);
  return {lo, lo + spec.codec.bins};
}

IdRange range_for(const VocabLayout& layout, const SequenceSpec& spec, const Slot& slot) {
  switch (slot.kind) {
    case SlotKind::Bod: return {kBod, kBod + 1};
    case SlotKind::Eod: return {kEod, kEod + 1};
    case SlotKind::Boa: return {kBoa, kBoa + 1};
    case SlotKind::Eoa: return {kEoa, kEoa + 1};
    case SlotKind::Ego: return layout.ego();
    case SlotKind::Env: return layout.env();
    case SlotKind::BevCell:
    case SlotKind::Meta: return layout.aux();
    case SlotKind::Action: return action_slot_range(layout, spec, slot.index);
  }
  return {};
}

const char* marker_name(SlotKind k) {
  switch (k) {
    case SlotKind::Bod: return "BOD";
    case SlotKind::Eod: return "EOD";
    case SlotKind::Boa: return "BOA";
    default: return "EOA";
  }
}

FormatViolation classify(const VocabLayout& layout, const Slot& slot, std::size_t position, int token) {
  const std::string tok = std::to_string(token);
  switch (slot.kind) {
    case SlotKind::Bod:
    case SlotKind::Eod:
    case SlotKind::Boa:
    case SlotKind::Eoa:
      return {position, std::string("missing ") + marker_name(slot.kind), "found " + tok};
    case SlotKind::Ego:
      if (layout.env().contains(token)) return {position, "sub-vocab placement", "env id " + tok + " in ego slot"};
      return {position, "expected dynamics token", "found " + tok};
    case SlotKind::Env:
      if (layout.ego().contains(token)) return {position, "sub-vocab placement", "ego id " + tok + " in env slot"};
      return {position, "expected dynamics token", "found " + tok};
    case SlotKind::BevCell:
    case SlotKind::Meta: return {position, "expected reasoning token", "found " + tok};
    case SlotKind::Action:
      if (layout.action().contains(token)) {
        return {position, "action slot placement", "id " + tok + " outside slot " + std::to_string(slot.index)};
      }
      return {position, "expected action token", "found " + tok};
  }
  return {position, "unknown", tok};
}

}  // namespace

std::string to_string(CotVariant v) {
  switch (v) {
    case CotVariant::None: return "none";
    case CotVariant::Dynamics: return "dynamics";
    case CotVariant::DenseBev: return "dense-bev";
    case CotVariant::MetaAction: return "meta-action";
  }
  return "?";
}

CotVariant parse_cot_variant(std::string_view name) {
  if (name == "none") return CotVariant::None;
  if (name == "dynamics") return CotVariant::Dynamics;
  if (name == "dense-bev") return CotVariant::DenseBev;
  if (name == "meta-action") return CotVariant::MetaAction;
  throw ConfigError("unknown reasoning variant '" + std::string(name) + "'");
}

MetaAction meta_action_from_plan(const world::Trajectory& plan, double ego_speed, double dt,
                                 double lateral_threshold, double speed_threshold) {
  DYNVLA_EXPECT(plan.size() >= 2, "plan needs at least two waypoints");
  const auto& last = plan.waypoints.back();
  if (last.y > lateral_threshold) return MetaAction::TurnLeft;
  if (last.y < -lateral_threshold) return MetaAction::TurnRight;
  const auto& prev = plan.waypoints[plan.size() - 2];
  const double v_end = std::hypot(last.x - prev.x, last.y - prev.y) / dt;
  if (v_end - ego_speed > speed_threshold) return MetaAction::Accelerate;
  if (v_end - ego_speed < -speed_threshold) return MetaAction::Brake;
  return MetaAction::Keep;
}

int SequenceSpec::cot_content_length() const {
  switch (variant) {
    case CotVariant::None: return 0;
    case CotVariant::Dynamics: return horizon * (n_ego + n_env);
    case CotVariant::DenseBev: return dense_bev_side * dense_bev_side;
    case CotVariant::MetaAction: return 1;
  }
  return 0;
}

int SequenceSpec::length() const {
  return (has_cot() ? cot_content_length() + 2 : 0) + action_length() + 2;
}

VocabLayout make_layout(const SequenceSpec& spec, int m_ego, int m_env) {
  VocabLayout layout;
  layout.m_ego = m_ego;
  layout.m_env = m_env;
  layout.action_size = spec.codec.vocab_budget;
  const bool aux = spec.variant == CotVariant::DenseBev || spec.variant == CotVariant::MetaAction;
  layout.aux_size = aux ? 5 : 0;
  return layout;
}

CoTSequence build_target_sequence(const VocabLayout& layout, const SequenceSpec& spec, const CotContent& cot,
                                  std::span<const int> action_ids) {
  DYNVLA_EXPECT(static_cast<int>(action_ids.size()) == spec.action_length(), "action span length mismatch");
  CoTSequence seq;
  seq.tokens.reserve(static_cast<std::size_t>(spec.length()));
  if (spec.has_cot()) {
    seq.tokens.push_back(kBod);
    switch (spec.variant) {
      case CotVariant::Dynamics: {
        const auto& d = cot.dynamics;
        DYNVLA_EXPECT(d.steps == spec.horizon && d.n_ego == spec.n_ego && d.n_env == spec.n_env &&
                          static_cast<int>(d.ids.size()) == spec.cot_content_length(),
                      "dynamics tokens do not match the sequence spec");
        for (std::size_t i = 0; i < d.ids.size(); ++i) {
          const int id = d.ids[i];
          const bool ego = d.is_ego_slot(static_cast<int>(i));
          DYNVLA_EXPECT(id >= 0 && id < (ego ? layout.m_ego : layout.m_env), "dynamics id out of codebook range");
          seq.tokens.push_back((ego ? layout.ego().lo : layout.env().lo) + id);
        }
        break;
      }
      case CotVariant::DenseBev:
        DYNVLA_EXPECT(static_cast<int>(cot.bev_cells.size()) == spec.cot_content_length(), "bev cell count mismatch");
        for (int c : cot.bev_cells) {
          DYNVLA_EXPECT(c >= 0 && c < layout.aux_size, "bev class out of range");
          seq.tokens.push_back(layout.aux().lo + c);
        }
        break;
      case CotVariant::MetaAction:
        DYNVLA_EXPECT(cot.meta_action >= 0 && cot.meta_action < layout.aux_size, "meta action out of range");
        seq.tokens.push_back(layout.aux().lo + cot.meta_action);
        break;
      case CotVariant::None: break;
    }
    seq.tokens.push_back(kEod);
    seq.cot = {0, seq.tokens.size()};
  }
  const std::size_t a0 = seq.tokens.size();
  seq.tokens.push_back(kBoa);
  for (std::size_t k = 0; k < action_ids.size(); ++k) {
    const int id = action_ids[k];
    DYNVLA_EXPECT(id >= 0 && id < spec.codec.used_ids() && codec::slot_of(spec.codec, id) == static_cast<int>(k),
                  "action id outside its slot");
    seq.tokens.push_back(layout.action().lo + id);
  }
  seq.tokens.push_back(kEoa);
  seq.action = {a0, seq.tokens.size()};
  return seq;
}

ParseResult parse_sequence(std::span<const int> tokens, const VocabLayout& layout, const SequenceSpec& spec) {
  ParseResult result;
  const auto expected = static_cast<std::size_t>(spec.length());
  for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
    const auto slot = slot_at(spec, pos);
    if (!slot) {
      result.violation = FormatViolation{pos, "trailing tokens", std::to_string(tokens.size() - pos) + " extra"};
      return result;
    }
    if (!range_for(layout, spec, *slot).contains(tokens[pos])) {
      result.violation = classify(layout, *slot, pos, tokens[pos]);
      return result;
    }
  }
  if (tokens.size() < expected) {
    result.violation = FormatViolation{tokens.size(), "truncated",
                                       "expected " + std::to_string(expected) + " tokens, got " +
                                           std::to_string(tokens.size())};
    return result;
  }

  CoTSequence seq;
  seq.tokens.assign(tokens.begin(), tokens.end());
  std::size_t cursor = 0;
  if (spec.has_cot()) {
    const auto content = static_cast<std::size_t>(spec.cot_content_length());
    seq.cot = {0, content + 2};
    switch (spec.variant) {
      case CotVariant::Dynamics: {
        auto& d = result.cot.dynamics;
        d.steps = spec.horizon;
        d.n_ego = spec.n_ego;
        d.n_env = spec.n_env;
        for (std::size_t i = 0; i < content; ++i) {
          const int t = tokens[1 + i];
          d.ids.push_back(d.is_ego_slot(static_cast<int>(i)) ? t - layout.ego().lo : t - layout.env().lo);
        }
        break;
      }
      case CotVariant::DenseBev:
        for (std::size_t i = 0; i < content; ++i) result.cot.bev_cells.push_back(tokens[1 + i] - layout.aux().lo);
        break;
      case CotVariant::MetaAction: result.cot.meta_action = tokens[1] - layout.aux().lo; break;
      case CotVariant::None: break;
    }
    cursor = content + 2;
  }
  seq.action = {cursor, cursor + static_cast<std::size_t>(spec.action_length()) + 2};
  for (int k = 0; k < spec.action_length(); ++k) {
    result.action_ids.push_back(tokens[cursor + 1 + static_cast<std::size_t>(k)] - layout.action().lo);
  }
  result.sequence = std::move(seq);
  return result;
}

IdRange legal_range(const VocabLayout& layout, const SequenceSpec& spec, std::size_t position) {
  const auto slot = slot_at(spec, position);
  if (!slot) return {};
  return range_for(layout, spec, *slot);
}

std::optional<std::vector<int>> parse_action_span(std::span<const int> tokens, const VocabLayout& layout,
                                                  const SequenceSpec& spec) {
  std::size_t boa = 0;
  while (boa < tokens.size() && tokens[boa] != kBoa) ++boa;
  const auto n = static_cast<std::size_t>(spec.action_length());
  if (boa + n + 1 >= tokens.size()) return std::nullopt;
  std::vector<int> ids;
  ids.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const int t = tokens[boa + 1 + k];
    if (!action_slot_range(layout, spec, static_cast<int>(k)).contains(t)) return std::nullopt;
    ids.push_back(t - layout.action().lo);
  }
  if (tokens[boa + n + 1] != kEoa) return std::nullopt;
  return ids;
}

}  // namespace dynvla::policy
