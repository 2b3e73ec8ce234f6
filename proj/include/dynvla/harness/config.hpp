#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dynvla/codec/action_codec.hpp"
#include "dynvla/policy/sequence.hpp"
#include "dynvla/world/dataset.hpp"
#include "dynvla/world/metrics.hpp"

namespace dynvla::harness {

enum class ValueType { Int, Double, Bool, String };

// Flat key/value run settings. Every key has a default; unknown keys and
// unparsable values throw ConfigError. Assignments are applied in order,
// except that a `profile` assignment is applied first and resets the
// profile's keys before the rest.
class RunConfig {
 public:
  RunConfig();

  static RunConfig from_file(const std::filesystem::path& path);
  // `key = value` lines, `#` comments, blank lines ignored.
  static std::vector<std::pair<std::string, std::string>> parse_text(std::string_view text);
  // "key=value" as given on the command line.
  static std::pair<std::string, std::string> parse_override(std::string_view item);

  void apply(const std::vector<std::pair<std::string, std::string>>& assignments);
  void set(const std::string& key, const std::string& value);
  void apply_profile(const std::string& name);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& raw(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  const std::string& get_string(const std::string& key) const;

  std::vector<std::string> keys() const;
  // Effective configuration, one `key = value` line per key, sorted.
  std::string echo() const;

 private:
  struct Entry {
    ValueType type;
    std::string value;
  };
  const Entry& entry(const std::string& key) const;
  std::map<std::string, Entry> values_;
};

std::vector<std::string> profile_names();

world::DatasetConfig dataset_config(const RunConfig& cfg);
codec::ActionCodecConfig codec_config(const RunConfig& cfg);
policy::SequenceSpec sequence_spec(const RunConfig& cfg);
policy::VocabLayout vocab_layout(const RunConfig& cfg);
world::MetricConfig metric_config(const RunConfig& cfg);

// Reasoning tokens emitted before the action span, markers included.
int count_reasoning_tokens(policy::CotVariant variant, int horizon, int n_ego, int n_env, int dense_bev_side);
int count_reasoning_tokens(std::string_view variant, const RunConfig& cfg);

}  // namespace dynvla::harness
