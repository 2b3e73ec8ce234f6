#include "dynvla/harness/pipeline.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "dynvla/common/error.hpp"
#include "dynvla/common/rng.hpp"
#include "dynvla/nn/train_util.hpp"
#include "dynvla/world/expert.hpp"
#include "dynvla/world/render.hpp"

namespace dynvla::harness {

namespace fs = std::filesystem;

namespace {

void emit(const Log& log, const std::string& line) {
  if (log) log(line);
}

template <typename Row>
std::string telemetry_text(const std::string& header, const std::vector<Row>& rows) {
  std::string out = header + "\n";
  for (const auto& r : rows) out += r.to_row() + "\n";
  return out;
}

std::string data_key(const RunConfig& cfg) {
  std::string key;
  for (const auto& k : cfg.keys()) {
    if (k == "seed" || k.rfind("data.", 0) == 0 || k.rfind("render.", 0) == 0) key += k + "=" + cfg.raw(k) + "\n";
  }
  return key;
}

}  // namespace

std::uint64_t holdout_seed(std::uint64_t seed) { return mix_seed(seed, 0x401d); }
std::uint64_t rft_pool_seed(std::uint64_t seed) { return mix_seed(seed, 0x7f7); }

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("short write to " + path.string());
}

void prepare_run_dir(const fs::path& dir, const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create run directory " + dir.string() + ": " + ec.message());
  write_text_file(dir / "config.txt", cfg.echo());
  write_text_file(dir / "seed.txt", cfg.raw("seed") + "\n");
}

void write_datasets(const RunConfig& cfg, const fs::path& out) {
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  auto dc = dataset_config(cfg);
  world::generate_dataset(dc, seed, out / "train");
  dc.episodes = static_cast<int>(cfg.get_int("data.holdout_episodes"));
  world::generate_dataset(dc, holdout_seed(seed), out / "holdout");
}

Datasets load_datasets(const RunConfig& cfg) {
  Datasets d;
  const auto& dir = cfg.get_string("data.dir");
  if (!dir.empty()) {
    d.train = world::load_dataset(fs::path(dir) / "train");
    d.holdout = world::load_dataset(fs::path(dir) / "holdout");
    return d;
  }
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  auto dc = dataset_config(cfg);
  d.train = world::generate_episodes(dc, seed);
  dc.episodes = static_cast<int>(cfg.get_int("data.holdout_episodes"));
  d.holdout = world::generate_episodes(dc, holdout_seed(seed));
  return d;
}

tokenizer::TokenizerConfig tokenizer_config(const RunConfig& cfg) {
  tokenizer::TokenizerConfig c;
  const auto i = [&](const char* k) { return static_cast<int>(cfg.get_int(k)); };
  c.n_ego = i("tok.n_ego");
  c.n_env = i("tok.n_env");
  c.m_ego = i("tok.m_ego");
  c.m_env = i("tok.m_env");
  c.d_vq = i("tok.d_vq");
  c.lambda_bev = cfg.get_double("tok.lambda_bev");
  c.lambda_vq = cfg.get_double("tok.lambda_vq");
  c.lambda_act_reg = cfg.get_double("tok.lambda_act_reg");
  c.beta_commit = cfg.get_double("tok.beta_commit");
  c.perceptual = cfg.get_bool("tok.perceptual");
  c.perceptual_weight = cfg.get_double("tok.perceptual_weight");
  c.decoupled = cfg.get_bool("tok.decoupled");
  c.image_branch = cfg.get_bool("tok.image_branch");
  c.bev_branch = cfg.get_bool("tok.bev_branch");
  c.obs_side = i("render.obs_size");
  c.bev_side = i("render.bev_size");
  c.patch = i("tok.patch");
  c.bev_patch = std::max(1, c.patch * c.bev_side / c.obs_side);
  c.hidden = i("tok.hidden");
  c.heads = i("tok.heads");
  c.enc_layers = i("tok.enc_layers");
  c.dec_layers = i("tok.dec_layers");
  c.ff_ratio = i("tok.ff_ratio");
  c.validate();
  return c;
}

tokenizer::TokenizerTrainOptions tokenizer_options(const RunConfig& cfg) {
  tokenizer::TokenizerTrainOptions o;
  o.model = tokenizer_config(cfg);
  o.optim.max_lr = cfg.get_double("tok.lr");
  o.optim.warmup = cfg.get_int("tok.warmup");
  o.optim.total = cfg.get_int("tok.steps");
  o.optim.weight_decay = cfg.get_double("tok.weight_decay");
  o.optim.batch = static_cast<int>(cfg.get_int("tok.batch"));
  o.optim.validate();
  o.activation_window = cfg.get_int("tok.activation_window");
  o.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  return o;
}

policy::PolicyConfig policy_config(const RunConfig& cfg) {
  policy::PolicyConfig c;
  const auto i = [&](const char* k) { return static_cast<int>(cfg.get_int(k)); };
  c.obs_side = i("render.obs_size");
  c.patch = i("policy.patch");
  c.hidden = i("policy.hidden");
  c.heads = i("policy.heads");
  c.layers = i("policy.layers");
  c.ff_ratio = i("policy.ff_ratio");
  c.vocab_size = vocab_layout(cfg).size();
  c.max_target_len = static_cast<int>(sequence_spec(cfg).length());
  c.lambda_act = cfg.get_double("policy.lambda_act");
  c.include_markers = cfg.get_bool("policy.include_markers");
  c.validate();
  return c;
}

nn::OptimConfig sft_optim(const RunConfig& cfg) {
  nn::OptimConfig o;
  o.max_lr = cfg.get_double("sft.lr");
  o.warmup = cfg.get_int("sft.warmup");
  o.total = cfg.get_int("sft.steps");
  o.weight_decay = cfg.get_double("sft.weight_decay");
  o.batch = static_cast<int>(cfg.get_int("sft.batch"));
  o.validate();
  return o;
}

rft::RftConfig rft_config(const RunConfig& cfg) {
  rft::RftConfig r;
  r.group = static_cast<int>(cfg.get_int("rft.group"));
  r.clip = cfg.get_double("rft.clip");
  r.beta = cfg.get_double("rft.beta");
  r.lambda_fmt = cfg.get_double("rft.lambda_fmt");
  r.temperature = cfg.get_double("rft.temperature");
  r.contexts_per_step = static_cast<int>(cfg.get_int("rft.contexts"));
  r.inner_updates = static_cast<int>(cfg.get_int("rft.inner_updates"));
  r.collapse_window = static_cast<int>(cfg.get_int("rft.collapse_window"));
  r.collapse_threshold = cfg.get_double("rft.collapse_threshold");
  r.optim.max_lr = cfg.get_double("rft.lr");
  r.optim.warmup = cfg.get_int("rft.warmup");
  r.optim.total = cfg.get_int("rft.steps");
  r.optim.weight_decay = cfg.get_double("rft.weight_decay");
  r.optim.batch = r.group * r.contexts_per_step;
  r.optim.validate();
  r.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  r.validate();
  return r;
}

rft::RewardSetup reward_setup(const RunConfig& cfg) {
  return {vocab_layout(cfg), sequence_spec(cfg), metric_config(cfg), cfg.get_double("rft.lambda_fmt")};
}

TokenizerStage run_tokenizer_stage(const RunConfig& cfg, const Datasets& data, const fs::path& dir, const Log& log) {
  prepare_run_dir(dir, cfg);
  auto opts = tokenizer_options(cfg);
  opts.fault_dir = dir;
  const auto pairs = tokenizer::collect_pairs(data.train);
  emit(log, "tokenizer: " + std::to_string(pairs.size()) + " training pairs, " + std::to_string(opts.optim.total) +
                " steps, decoupled " + (opts.model.decoupled ? "on" : "off"));
  auto res = tokenizer::train_tokenizer(pairs, opts, [&](const tokenizer::TokenizerTelemetry& t) {
    if (t.step % 250 == 0) emit(log, "  " + t.to_row());
  });
  TokenizerStage st;
  st.model = res.model;
  st.telemetry = std::move(res.telemetry);
  st.model->eval();
  st.eval = tokenizer::evaluate_tokenizer(*st.model, tokenizer::collect_pairs(data.holdout));
  st.active_codes = st.telemetry.back().active_ego + st.telemetry.back().active_env;
  nn::save_checkpoint(*st.model, dir / "tokenizer.ckpt", {{"kind", "tokenizer"}, {"seed", cfg.raw("seed")}});
  write_text_file(dir / "telemetry.txt", telemetry_text(tokenizer::tokenizer_telemetry_header(), st.telemetry));
  std::ostringstream ev;
  ev.precision(8);
  ev << "samples " << st.eval.samples << "\nbev_accuracy " << st.eval.bev_accuracy << "\nbev_accuracy_copy "
     << st.eval.bev_accuracy_copy << "\nimage_mse " << st.eval.image_mse << "\nimage_mse_copy " << st.eval.image_mse_copy
     << "\nactive_codes " << st.active_codes << "\n";
  write_text_file(dir / "eval.txt", ev.str());
  emit(log, "tokenizer eval: " + ev.str());
  return st;
}

tokenizer::Tokenizer load_tokenizer(const RunConfig& cfg, const fs::path& checkpoint) {
  tokenizer::Tokenizer tok(tokenizer_config(cfg));
  nn::load_checkpoint(*tok, checkpoint);
  tok->eval();
  return tok;
}

std::vector<policy::SftSample> make_sft_samples(const RunConfig& cfg, const std::vector<world::EpisodeRecord>& episodes,
                                                tokenizer::TokenizerImpl* tok, const Log& log) {
  const auto spec = sequence_spec(cfg);
  std::vector<std::vector<std::vector<int>>> ids;
  if (spec.variant == policy::CotVariant::Dynamics) {
    DYNVLA_EXPECT(tok != nullptr, "dynamics reasoning needs a tokenizer");
    torch::NoGradGuard guard;
    ids = policy::encode_episode_pairs(*tok, episodes);
  }
  std::vector<std::string> skipped;
  auto samples = policy::build_sft_samples(episodes, ids, vocab_layout(cfg), spec, {}, &skipped);
  if (!skipped.empty()) emit(log, "sft data: skipped " + std::to_string(skipped.size()) + " samples (" + skipped[0] + ")");
  return samples;
}

std::vector<policy::SftSample> open_loop_samples(const RunConfig& cfg, const std::vector<world::EpisodeRecord>& episodes) {
  RunConfig plain = cfg;
  plain.set("policy.cot", "none");
  return make_sft_samples(plain, episodes, nullptr);
}

SftStage run_sft_stage(const RunConfig& cfg, const Datasets& data, tokenizer::TokenizerImpl* tok, const fs::path& dir,
                       const Log& log) {
  prepare_run_dir(dir, cfg);
  SftStage st;
  st.train = make_sft_samples(cfg, data.train, tok, log);
  st.holdout = make_sft_samples(cfg, data.holdout, tok, log);
  policy::SftTrainOptions opts;
  opts.model = policy_config(cfg);
  opts.optim = sft_optim(cfg);
  opts.layout = vocab_layout(cfg);
  opts.spec = sequence_spec(cfg);
  opts.seed = static_cast<std::uint64_t>(cfg.get_int("seed"));
  opts.decode_every = static_cast<int>(cfg.get_int("sft.decode_every"));
  opts.fault_dir = dir;
  emit(log, "sft: " + std::to_string(st.train.size()) + " samples, " + std::to_string(opts.optim.total) + " steps, cot " +
                std::string(policy::to_string(opts.spec.variant)));
  auto res = policy::train_sft(st.train, st.holdout, opts, [&](const policy::SftTelemetry& t) {
    if (t.step % 250 == 0) emit(log, "  " + t.to_row());
  });
  st.model = res.model;
  st.telemetry = std::move(res.telemetry);
  st.model->eval();
  st.fmt_valid = policy::format_valid_rate(*st.model, st.holdout, opts.layout, opts.spec);
  st.dyn_accuracy = opts.spec.cot_content_length() > 0 && opts.spec.variant != policy::CotVariant::None
                        ? policy::teacher_forced_dyn_accuracy(*st.model, st.holdout, opts.spec)
                        : 0.0;
  nn::save_checkpoint(*st.model, dir / "policy.ckpt", {{"kind", "policy"}, {"seed", cfg.raw("seed")}});
  write_text_file(dir / "telemetry.txt", telemetry_text(policy::sft_telemetry_header(), st.telemetry));
  std::ostringstream ev;
  ev.precision(8);
  ev << "holdout_samples " << st.holdout.size() << "\nfmt_valid " << st.fmt_valid << "\ndyn_accuracy "
     << st.dyn_accuracy << "\n";
  write_text_file(dir / "eval.txt", ev.str());
  emit(log, "sft eval: fmt_valid " + std::to_string(st.fmt_valid) + " dyn_accuracy " + std::to_string(st.dyn_accuracy));
  return st;
}

policy::Policy load_policy(const RunConfig& cfg, const fs::path& checkpoint) {
  policy::Policy p(policy_config(cfg));
  nn::load_checkpoint(*p, checkpoint);
  p->eval();
  return p;
}

rft::RftResult run_rft_stage(const RunConfig& cfg, policy::PolicyImpl& sft, const fs::path& dir, const Log& log) {
  prepare_run_dir(dir, cfg);
  const auto pool = make_scenario_suite(static_cast<int>(cfg.get_int("rft.train_scenarios")),
                                        rft_pool_seed(static_cast<std::uint64_t>(cfg.get_int("seed"))),
                                        dataset_config(cfg), static_cast<int>(cfg.get_int("eval.plan_frame")));
  const auto rc = rft_config(cfg);
  emit(log, "rft: " + std::to_string(pool.size()) + " scenarios, " + std::to_string(rc.optim.total) + " steps, G " +
                std::to_string(rc.group));
  std::vector<rft::RftTelemetry> rows;
  rft::RftResult res;
  try {
    res = rft::train_rft(sft, make_driving_task(pool, reward_setup(cfg)), rc, [&](const rft::RftTelemetry& t) {
      rows.push_back(t);
      if (t.step % 25 == 0) emit(log, "  " + t.to_row());
    });
  } catch (const TrainingFault&) {
    write_text_file(dir / "telemetry.txt", telemetry_text(rft::rft_telemetry_header(), rows));
    throw;
  }
  res.model->eval();
  nn::save_checkpoint(*res.model, dir / "policy.ckpt", {{"kind", "policy"}, {"seed", cfg.raw("seed")}});
  write_text_file(dir / "telemetry.txt", telemetry_text(rft::rft_telemetry_header(), res.telemetry));
  return res;
}

std::vector<Scenario> eval_suite(const RunConfig& cfg) {
  return make_scenario_suite(static_cast<int>(cfg.get_int("eval.scenarios")),
                             static_cast<std::uint64_t>(cfg.get_int("eval.seed")), dataset_config(cfg),
                             static_cast<int>(cfg.get_int("eval.plan_frame")));
}

ClosedLoopReport run_closed_stage(const RunConfig& cfg, policy::PolicyImpl& model, const std::vector<Scenario>& suite,
                                  const fs::path& dir, const std::string& name) {
  auto rep = run_eval_closedloop(model, suite, vocab_layout(cfg), sequence_spec(cfg), metric_config(cfg));
  write_text_file(dir / (name + ".csv"), rep.to_csv());
  write_text_file(dir / (name + ".txt"), rep.summary() + "\n");
  return rep;
}

OpenLoopReport run_open_stage(const RunConfig& cfg, policy::PolicyImpl& model,
                              const std::vector<policy::SftSample>& samples, const fs::path& dir,
                              const std::string& name) {
  auto rep = run_eval_openloop(model, samples, vocab_layout(cfg), sequence_spec(cfg), dataset_config(cfg).planner);
  write_text_file(dir / (name + ".csv"), rep.to_csv());
  write_text_file(dir / (name + ".txt"), rep.summary() + "\n");
  return rep;
}

std::string TransferReport::to_csv() const {
  std::ostringstream os;
  os.precision(8);
  os << "trial,dst_kind,dst_row,dst_col,ego_row,ego_col,env_row,env_col,ego_ok,env_ok\n";
  const auto cell = [&](const std::optional<world::Vec2>& c) {
    if (c) os << c->x << ',' << c->y;
    else os << "nan,nan";
  };
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    os << i << ',' << world::to_string(t.dst_kind) << ',';
    cell(t.c_dst);
    os << ',';
    cell(t.c_ego);
    os << ',';
    cell(t.c_env);
    os << ',' << (t.ego_ok ? 1 : 0) << ',' << (t.env_ok ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string TransferReport::summary() const {
  std::ostringstream os;
  os << "trials " << trials.size() << "  ego_ok " << ego_ok << "  env_ok " << env_ok << "  expected_row_shift "
     << expected_rows;
  return os.str();
}

TransferReport run_transfer_suite(tokenizer::TokenizerImpl& tok, int trials, std::uint64_t seed,
                                  const world::RenderConfig& render, double forward_m) {
  DYNVLA_EXPECT(trials >= 1, "transfer needs at least one trial");
  torch::NoGradGuard guard;
  TransferReport rep;
  rep.expected_rows = -forward_m / render.bev_meters_per_cell();
  constexpr int kinds = static_cast<int>(std::size(world::kAllScenarioKinds));
  for (int i = 0; i < trials; ++i) {
    TransferTrial t;
    const auto src = world::spawn_scenario(world::ScenarioKind::OpenRoad, mix_seed(seed, 2 * static_cast<std::uint64_t>(i)));
    const world::EgoAction half{forward_m / 2.0, 0.0, 0.0};
    const auto moved = world::step_world(world::step_world(src, half), half);
    const auto src_t = world::render_observation(src, render);
    t.src_future = world::render_observation(moved, render, src.ego_pose);
    t.dst_kind = world::kAllScenarioKinds[i % kinds];
    const auto dst = world::make_static(
        world::spawn_scenario(t.dst_kind, mix_seed(seed, 2 * static_cast<std::uint64_t>(i) + 1)));
    t.dst_t = world::render_observation(dst, render);
    const auto dst_bev = world::render_bev(dst, render);
    t.c_dst = world::class_centroid(dst_bev, world::kBevEgo);
    const auto ego = tokenizer::transfer_dynamics(tok, src_t, t.src_future, t.dst_t, dst_bev, tokenizer::TransferMode::Ego);
    const auto env = tokenizer::transfer_dynamics(tok, src_t, t.src_future, t.dst_t, dst_bev, tokenizer::TransferMode::Env);
    t.ego_image = ego.image;
    t.c_ego = world::class_centroid(ego.bev, world::kBevEgo);
    t.c_env = world::class_centroid(env.bev, world::kBevEgo);
    if (t.c_dst && t.c_ego) {
      t.ego_ok = std::hypot(t.c_ego->x - t.c_dst->x - rep.expected_rows, t.c_ego->y - t.c_dst->y) <= 1.0;
    }
    if (t.c_dst && t.c_env) t.env_ok = std::hypot(t.c_env->x - t.c_dst->x, t.c_env->y - t.c_dst->y) < 1.0;
    rep.ego_ok += t.ego_ok;
    rep.env_ok += t.env_ok;
    rep.trials.push_back(std::move(t));
  }
  return rep;
}

std::string TokenizerCache::key(const RunConfig& cfg) {
  std::string k = data_key(cfg);
  for (const auto& name : cfg.keys()) {
    if (name.rfind("tok.", 0) == 0) k += name + "=" + cfg.raw(name) + "\n";
  }
  return k;
}

tokenizer::TokenizerImpl& TokenizerCache::get_or_train(const RunConfig& cfg, const Datasets& data, const fs::path& dir,
                                                       const Log& log) {
  const auto k = key(cfg);
  auto it = models_.find(k);
  if (it == models_.end()) {
    const auto st = run_tokenizer_stage(cfg, data, dir / ("tokenizer_" + std::to_string(models_.size())), log);
    it = models_.emplace(k, st.model).first;
  }
  return *it->second;
}

std::vector<std::string> ablation_axes() {
  return {"K", "dyn-token-count", "ego-env-split", "cot-variant", "decouple-on-off", "bev-branch-on-off",
          "image-branch-on-off"};
}

namespace {

bool parse_on_off(const std::string& axis, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("axis " + axis + " takes on or off, got '" + v + "'");
}

}  // namespace

void apply_axis_value(RunConfig& cfg, const std::string& axis, const std::string& value) {
  if (axis == "K") {
    cfg.set("policy.horizon", value);
  } else if (axis == "dyn-token-count") {
    const auto total = RunConfig::parse_override("n=" + value);
    int n = 0;
    try {
      n = std::stoi(total.second);
    } catch (const std::exception&) {
      throw ConfigError("dyn-token-count needs an integer, got '" + value + "'");
    }
    if (n < 2 || n % 2 != 0) throw ConfigError("dyn-token-count must be an even count >= 2");
    cfg.set("tok.n_ego", std::to_string(n / 2));
    cfg.set("tok.n_env", std::to_string(n / 2));
  } else if (axis == "ego-env-split") {
    const auto colon = value.find(':');
    if (colon == std::string::npos) throw ConfigError("ego-env-split values are written ego:env, got '" + value + "'");
    cfg.set("tok.n_ego", value.substr(0, colon));
    cfg.set("tok.n_env", value.substr(colon + 1));
  } else if (axis == "cot-variant") {
    policy::parse_cot_variant(value);
    cfg.set("policy.cot", value);
  } else if (axis == "decouple-on-off") {
    cfg.set("tok.decoupled", parse_on_off(axis, value) ? "true" : "false");
  } else if (axis == "bev-branch-on-off") {
    cfg.set("tok.bev_branch", parse_on_off(axis, value) ? "true" : "false");
  } else if (axis == "image-branch-on-off") {
    cfg.set("tok.image_branch", parse_on_off(axis, value) ? "true" : "false");
  } else {
    throw ConfigError("unknown ablation axis '" + axis + "'");
  }
}

std::string AblationTable::to_text() const {
  std::ostringstream os;
  os.precision(4);
  os << std::fixed;
  os << "axis " << axis << "\n";
  os << "value        mean_pdms  malformed  ade_m    collision  fmt_valid  dyn_acc  reasoning_tokens\n";
  for (const auto& c : cells) {
    std::string v = c.value;
    v.resize(std::max<std::size_t>(v.size(), 12), ' ');
    os << v << ' ' << c.closed.mean_pdms << "     " << c.closed.malformed << "          " << c.open.ade << "   "
       << c.open.collision_rate << "     " << c.fmt_valid << "     " << c.dyn_accuracy << "   " << c.reasoning_tokens
       << "\n";
  }
  return os.str();
}

std::string AblationTable::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "axis,value,mean_pdms,malformed,ade,collision_rate,fmt_valid,dyn_accuracy,reasoning_tokens\n";
  for (const auto& c : cells) {
    os << axis << ',' << c.value << ',' << c.closed.mean_pdms << ',' << c.closed.malformed << ',' << c.open.ade << ','
       << c.open.collision_rate << ',' << c.fmt_valid << ',' << c.dyn_accuracy << ',' << c.reasoning_tokens << '\n';
  }
  return os.str();
}

AblationTable ablation_grid(const std::string& axis, const std::vector<std::string>& values, const RunConfig& base,
                            std::uint64_t seed, const fs::path& out, const Log& log, TokenizerCache* cache) {
  const auto axes = ablation_axes();
  if (std::find(axes.begin(), axes.end(), axis) == axes.end()) {
    throw ConfigError("unknown ablation axis '" + axis + "'");
  }
  TokenizerCache local;
  if (!cache) cache = &local;
  AblationTable table;
  table.axis = axis;
  std::map<std::string, Datasets> data_cache;
  const auto suite_cfg = base;
  for (const auto& value : values) {
    RunConfig cfg = base;
    cfg.set("seed", std::to_string(seed));
    apply_axis_value(cfg, axis, value);
    std::string dir_name = axis + "=" + value;
    std::replace(dir_name.begin(), dir_name.end(), ':', '-');
    const fs::path dir = out / dir_name;
    prepare_run_dir(dir, cfg);
    emit(log, "ablation cell " + dir_name);

    const auto dk = data_key(cfg);
    auto dit = data_cache.find(dk);
    if (dit == data_cache.end()) dit = data_cache.emplace(dk, load_datasets(cfg)).first;
    const Datasets& data = dit->second;

    tokenizer::TokenizerImpl* tok = nullptr;
    if (sequence_spec(cfg).variant == policy::CotVariant::Dynamics) tok = &cache->get_or_train(cfg, data, out, log);
    auto sft = run_sft_stage(cfg, data, tok, dir / "sft", log);

    AblationCell cell;
    cell.value = value;
    cell.closed = run_closed_stage(cfg, *sft.model, eval_suite(cfg), dir);
    cell.open = run_open_stage(cfg, *sft.model, sft.holdout, dir);
    cell.fmt_valid = sft.fmt_valid;
    cell.dyn_accuracy = sft.dyn_accuracy;
    cell.reasoning_tokens = count_reasoning_tokens(cfg.get_string("policy.cot"), cfg);
    emit(log, "  " + cell.closed.summary());
    table.cells.push_back(std::move(cell));
  }
  write_text_file(out / (axis + ".txt"), table.to_text());
  write_text_file(out / (axis + ".csv"), table.to_csv());
  return table;
}

}  // namespace dynvla::harness
