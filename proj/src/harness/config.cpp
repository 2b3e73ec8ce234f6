#include "dynvla/harness/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "dynvla/common/error.hpp"

namespace dynvla::harness {

namespace {

struct Default {
  const char* key;
  ValueType type;
  const char* value;
};

// Desk profile values are the defaults.
constexpr Default kDefaults[] = {
    {"profile", ValueType::String, "desk"},
    {"seed", ValueType::Int, "1"},
    {"threads", ValueType::Int, "1"},

    {"data.episodes", ValueType::Int, "160"},
    {"data.holdout_episodes", ValueType::Int, "40"},
    {"data.frames", ValueType::Int, "16"},
    {"data.pair_stride", ValueType::Int, "2"},
    {"data.mix", ValueType::String, "uniform"},
    {"data.dir", ValueType::String, ""},

    {"render.obs_size", ValueType::Int, "64"},
    {"render.meters_per_pixel", ValueType::Double, "0.5"},
    {"render.bev_size", ValueType::Int, "32"},

    {"codec.kept", ValueType::Int, "4"},
    {"codec.step", ValueType::Double, "0.25"},
    {"codec.bins", ValueType::Int, "170"},
    {"codec.scale_x", ValueType::Double, "2.0"},
    {"codec.scale_y", ValueType::Double, "1.0"},
    {"codec.scale_yaw", ValueType::Double, "0.1"},

    {"tok.n_ego", ValueType::Int, "4"},
    {"tok.n_env", ValueType::Int, "4"},
    {"tok.m_ego", ValueType::Int, "64"},
    {"tok.m_env", ValueType::Int, "64"},
    {"tok.d_vq", ValueType::Int, "32"},
    {"tok.lambda_bev", ValueType::Double, "0.1"},
    {"tok.lambda_vq", ValueType::Double, "1.0"},
    {"tok.lambda_act_reg", ValueType::Double, "1.0"},
    {"tok.beta_commit", ValueType::Double, "0.25"},
    {"tok.perceptual", ValueType::Bool, "true"},
    {"tok.perceptual_weight", ValueType::Double, "1.0"},
    {"tok.decoupled", ValueType::Bool, "true"},
    {"tok.image_branch", ValueType::Bool, "true"},
    {"tok.bev_branch", ValueType::Bool, "true"},
    {"tok.patch", ValueType::Int, "16"},
    {"tok.hidden", ValueType::Int, "128"},
    {"tok.heads", ValueType::Int, "4"},
    {"tok.enc_layers", ValueType::Int, "4"},
    {"tok.dec_layers", ValueType::Int, "2"},
    {"tok.ff_ratio", ValueType::Int, "4"},
    {"tok.steps", ValueType::Int, "2000"},
    {"tok.batch", ValueType::Int, "32"},
    {"tok.lr", ValueType::Double, "0.001"},
    {"tok.warmup", ValueType::Int, "100"},
    {"tok.weight_decay", ValueType::Double, "0.01"},
    {"tok.activation_window", ValueType::Int, "500"},

    {"policy.patch", ValueType::Int, "16"},
    {"policy.hidden", ValueType::Int, "128"},
    {"policy.heads", ValueType::Int, "4"},
    {"policy.layers", ValueType::Int, "4"},
    {"policy.ff_ratio", ValueType::Int, "4"},
    {"policy.horizon", ValueType::Int, "2"},
    {"policy.cot", ValueType::String, "dynamics"},
    {"policy.dense_bev_side", ValueType::Int, "16"},
    {"policy.lambda_act", ValueType::Double, "1.0"},
    {"policy.include_markers", ValueType::Bool, "true"},
    {"policy.top_k", ValueType::Int, "0"},
    {"policy.top_p", ValueType::Double, "1.0"},

    {"sft.steps", ValueType::Int, "1500"},
    {"sft.batch", ValueType::Int, "32"},
    {"sft.lr", ValueType::Double, "0.001"},
    {"sft.warmup", ValueType::Int, "100"},
    {"sft.weight_decay", ValueType::Double, "0.01"},
    {"sft.decode_every", ValueType::Int, "250"},

    {"rft.group", ValueType::Int, "8"},
    {"rft.clip", ValueType::Double, "0.2"},
    {"rft.beta", ValueType::Double, "0.001"},
    {"rft.lambda_fmt", ValueType::Double, "1.0"},
    {"rft.temperature", ValueType::Double, "1.0"},
    {"rft.steps", ValueType::Int, "300"},
    {"rft.contexts", ValueType::Int, "4"},
    {"rft.lr", ValueType::Double, "0.00005"},
    {"rft.warmup", ValueType::Int, "10"},
    {"rft.weight_decay", ValueType::Double, "0.0"},
    {"rft.inner_updates", ValueType::Int, "1"},
    {"rft.collapse_window", ValueType::Int, "200"},
    {"rft.collapse_threshold", ValueType::Double, "0.05"},
    {"rft.train_scenarios", ValueType::Int, "400"},

    {"eval.scenarios", ValueType::Int, "100"},
    {"eval.seed", ValueType::Int, "9001"},
    {"eval.plan_frame", ValueType::Int, "2"},
};

struct ProfileValue {
  const char* key;
  const char* value;
};

constexpr ProfileValue kPaperScale[] = {
    {"tok.patch", "8"},          {"tok.hidden", "1024"},   {"tok.heads", "16"},    {"tok.enc_layers", "12"},
    {"tok.dec_layers", "8"},     {"tok.steps", "20000"},   {"tok.warmup", "1000"}, {"policy.patch", "8"},
    {"policy.hidden", "1024"},   {"policy.heads", "16"},   {"policy.layers", "12"}, {"sft.warmup", "1000"},
    {"sft.steps", "20000"},      {"data.episodes", "2000"}, {"rft.steps", "2000"},
};

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

void check_value(const std::string& key, ValueType type, const std::string& value) {
  auto fail = [&] { throw ConfigError("invalid value '" + value + "' for key '" + key + "'"); };
  switch (type) {
    case ValueType::Int: {
      std::int64_t v = 0;
      const auto r = std::from_chars(value.data(), value.data() + value.size(), v);
      if (r.ec != std::errc() || r.ptr != value.data() + value.size()) fail();
      break;
    }
    case ValueType::Double: {
      std::size_t used = 0;
      try {
        (void)std::stod(value, &used);
      } catch (const std::exception&) {
        fail();
      }
      if (used != value.size()) fail();
      break;
    }
    case ValueType::Bool:
      if (value != "true" && value != "false" && value != "1" && value != "0") fail();
      break;
    case ValueType::String: break;
  }
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& d : kDefaults) values_[d.key] = Entry{d.type, d.value};
}

std::vector<std::pair<std::string, std::string>> RunConfig::parse_text(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    out.emplace_back(std::move(key), trim(std::string_view(body).substr(eq + 1)));
  }
  return out;
}

std::pair<std::string, std::string> RunConfig::parse_override(std::string_view item) {
  const auto eq = item.find('=');
  if (eq == std::string_view::npos) throw ConfigError("override '" + std::string(item) + "' is not key=value");
  std::string key = trim(item.substr(0, eq));
  if (key.empty()) throw ConfigError("override '" + std::string(item) + "' has an empty key");
  return {std::move(key), trim(item.substr(eq + 1))};
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig cfg;
  cfg.apply(parse_text(ss.str()));
  return cfg;
}

void RunConfig::apply(const std::vector<std::pair<std::string, std::string>>& assignments) {
  for (const auto& [k, v] : assignments) {
    if (k == "profile") apply_profile(v);
  }
  for (const auto& [k, v] : assignments) {
    if (k != "profile") set(k, v);
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  if (key == "profile") {
    apply_profile(value);
    return;
  }
  check_value(key, it->second.type, value);
  it->second.value = value;
}

void RunConfig::apply_profile(const std::string& name) {
  if (name == "desk") {
    for (const auto& d : kDefaults) {
      for (const auto& p : kPaperScale) {
        if (std::string_view(p.key) == d.key) values_[d.key].value = d.value;
      }
    }
  } else if (name == "paper-scale") {
    for (const auto& p : kPaperScale) values_[p.key].value = p.value;
  } else {
    throw ConfigError("unknown profile '" + name + "'");
  }
  values_["profile"].value = name;
}

const RunConfig::Entry& RunConfig::entry(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

const std::string& RunConfig::raw(const std::string& key) const { return entry(key).value; }

std::int64_t RunConfig::get_int(const std::string& key) const {
  const auto& e = entry(key);
  if (e.type != ValueType::Int) throw ConfigError("key '" + key + "' is not an integer");
  return std::stoll(e.value);
}

double RunConfig::get_double(const std::string& key) const {
  const auto& e = entry(key);
  if (e.type != ValueType::Double && e.type != ValueType::Int) throw ConfigError("key '" + key + "' is not numeric");
  return std::stod(e.value);
}

bool RunConfig::get_bool(const std::string& key) const {
  const auto& e = entry(key);
  if (e.type != ValueType::Bool) throw ConfigError("key '" + key + "' is not a boolean");
  return e.value == "true" || e.value == "1";
}

const std::string& RunConfig::get_string(const std::string& key) const { return entry(key).value; }

std::vector<std::string> RunConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : values_) out.push_back(k);
  return out;
}

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& [k, e] : values_) out += k + " = " + e.value + "\n";
  return out;
}

std::vector<std::string> profile_names() { return {"desk", "paper-scale"}; }

world::DatasetConfig dataset_config(const RunConfig& cfg) {
  world::DatasetConfig d;
  d.episodes = static_cast<int>(cfg.get_int("data.episodes"));
  d.frames = static_cast<int>(cfg.get_int("data.frames"));
  d.pair_stride = static_cast<int>(cfg.get_int("data.pair_stride"));
  d.render.obs_size = static_cast<int>(cfg.get_int("render.obs_size"));
  d.render.meters_per_pixel = cfg.get_double("render.meters_per_pixel");
  d.render.bev_size = static_cast<int>(cfg.get_int("render.bev_size"));
  const std::string& mix = cfg.get_string("data.mix");
  if (mix != "uniform") {
    d.mix.clear();
    std::stringstream ss(mix);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto colon = item.find(':');
      if (colon == std::string::npos) throw ConfigError("data.mix item '" + item + "' is not kind:weight");
      const double w = std::stod(item.substr(colon + 1));
      if (!(w >= 0.0)) throw ConfigError("data.mix weight must be non-negative");
      d.mix.emplace_back(world::parse_scenario_kind(trim(item.substr(0, colon))), w);
    }
    if (d.mix.empty()) throw ConfigError("data.mix is empty");
  }
  return d;
}

codec::ActionCodecConfig codec_config(const RunConfig& cfg) {
  codec::ActionCodecConfig c;
  c.kept = static_cast<int>(cfg.get_int("codec.kept"));
  c.step = cfg.get_double("codec.step");
  c.bins = static_cast<int>(cfg.get_int("codec.bins"));
  c.dim_scale = {cfg.get_double("codec.scale_x"), cfg.get_double("codec.scale_y"), cfg.get_double("codec.scale_yaw")};
  c.validate();
  return c;
}

policy::SequenceSpec sequence_spec(const RunConfig& cfg) {
  policy::SequenceSpec s;
  s.variant = policy::parse_cot_variant(cfg.get_string("policy.cot"));
  s.horizon = static_cast<int>(cfg.get_int("policy.horizon"));
  if (s.horizon < 1) throw ConfigError("policy.horizon must be >= 1");
  const int n_ego = static_cast<int>(cfg.get_int("tok.n_ego"));
  const int n_env = static_cast<int>(cfg.get_int("tok.n_env"));
  if (cfg.get_bool("tok.decoupled")) {
    s.n_ego = n_ego;
    s.n_env = n_env;
  } else {
    s.n_ego = n_ego + n_env;
    s.n_env = 0;
  }
  s.dense_bev_side = static_cast<int>(cfg.get_int("policy.dense_bev_side"));
  s.codec = codec_config(cfg);
  return s;
}

policy::VocabLayout vocab_layout(const RunConfig& cfg) {
  const int m_ego = static_cast<int>(cfg.get_int("tok.m_ego"));
  const int m_env = static_cast<int>(cfg.get_int("tok.m_env"));
  const auto spec = sequence_spec(cfg);
  return cfg.get_bool("tok.decoupled") ? policy::make_layout(spec, m_ego, m_env)
                                       : policy::make_layout(spec, m_ego + m_env, 0);
}

world::MetricConfig metric_config(const RunConfig&) { return {}; }

int count_reasoning_tokens(policy::CotVariant variant, int horizon, int n_ego, int n_env, int dense_bev_side) {
  switch (variant) {
    case policy::CotVariant::None: return 0;
    case policy::CotVariant::Dynamics: return horizon * (n_ego + n_env) + 2;
    case policy::CotVariant::DenseBev: return dense_bev_side * dense_bev_side + 2;
    case policy::CotVariant::MetaAction: return 1 + 2;
  }
  return 0;
}

int count_reasoning_tokens(std::string_view variant, const RunConfig& cfg) {
  return count_reasoning_tokens(policy::parse_cot_variant(variant), static_cast<int>(cfg.get_int("policy.horizon")),
                                static_cast<int>(cfg.get_int("tok.n_ego")), static_cast<int>(cfg.get_int("tok.n_env")),
                                static_cast<int>(cfg.get_int("policy.dense_bev_side")));
}

}  // namespace dynvla::harness
