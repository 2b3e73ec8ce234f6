#include "dynvla/world/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dynvla/common/error.hpp"
#include "dynvla/common/rng.hpp"
#include "dynvla/io/array_file.hpp"

namespace dynvla::world {

namespace fs = std::filesystem;

DrivingCommand command_from_plan(const Trajectory& plan) {
  if (plan.waypoints.empty()) return DrivingCommand::Straight;
  const double lateral = plan.waypoints.back().y;
  if (lateral > 1.0) return DrivingCommand::Left;
  if (lateral < -1.0) return DrivingCommand::Right;
  return DrivingCommand::Straight;
}

std::map<ScenarioKind, int> Manifest::counts() const {
  std::map<ScenarioKind, int> out;
  for (const auto& e : entries) ++out[e.kind];
  return out;
}

std::string Manifest::to_text() const {
  std::ostringstream out;
  for (const auto& e : entries) out << e.path << ' ' << e.frames << ' ' << to_string(e.kind) << ' ' << e.seed << '\n';
  return out.str();
}

Manifest Manifest::parse(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string kind;
    if (!(ls >> e.path >> e.frames >> kind >> e.seed)) throw FormatError("bad manifest line: " + line);
    e.kind = parse_scenario_kind(kind);
    m.entries.push_back(e);
  }
  return m;
}

std::vector<std::pair<ScenarioKind, std::uint64_t>> plan_episodes(const DatasetConfig& cfg, std::uint64_t seed) {
  if (cfg.mix.empty()) throw ConfigError("scenario mix is empty");
  double total = 0.0;
  for (const auto& [kind, w] : cfg.mix) {
    if (!(w >= 0.0)) throw ConfigError("scenario weights must be non-negative");
    total += w;
  }
  if (total <= 0.0) throw ConfigError("scenario weights sum to zero");
  Rng rng(mix_seed(seed, 0xda7a));
  std::vector<std::pair<ScenarioKind, std::uint64_t>> out;
  out.reserve(cfg.episodes);
  for (int i = 0; i < cfg.episodes; ++i) {
    double u = rng.uniform() * total;
    ScenarioKind kind = cfg.mix.back().first;
    for (const auto& [k, w] : cfg.mix) {
      if (u < w) {
        kind = k;
        break;
      }
      u -= w;
    }
    out.emplace_back(kind, mix_seed(seed, 1000 + static_cast<std::uint64_t>(i)));
  }
  return out;
}

std::vector<WorldState> simulate_states(ScenarioKind kind, std::uint64_t seed, int steps, const PlannerConfig& planner) {
  std::vector<WorldState> states;
  states.reserve(steps);
  states.push_back(spawn_scenario(kind, seed));
  while (static_cast<int>(states.size()) < steps) {
    const WorldState& s = states.back();
    const Trajectory plan = expert_trajectory(s, planner);
    const Pose2& first = plan.waypoints.front();
    states.push_back(step_world(s, EgoAction{first.x, first.y, first.yaw}));
  }
  return states;
}

EpisodeRecord simulate_episode(ScenarioKind kind, std::uint64_t seed, const DatasetConfig& cfg) {
  DYNVLA_EXPECT(cfg.frames >= 1 && cfg.pair_stride >= 1, "episode needs frames and a positive pair stride");
  const std::vector<WorldState> states = simulate_states(kind, seed, cfg.frames + cfg.pair_stride, cfg.planner);
  EpisodeRecord rec;
  rec.kind = kind;
  rec.seed = seed;
  rec.pair_stride = cfg.pair_stride;
  for (int t = 0; t < cfg.frames; ++t) {
    const WorldState& s = states[t];
    const WorldState& later = states[t + cfg.pair_stride];
    rec.observations.push_back(render_observation(s, cfg.render));
    rec.bevs.push_back(render_bev(s, cfg.render));
    rec.ego_actions.push_back(relative_motion(s.ego_pose, states[t + 1].ego_pose));
    Trajectory plan = expert_trajectory(s, cfg.planner);
    rec.ego_states.push_back({s.ego_speed, s.ego_accel, command_from_plan(plan)});
    rec.expert.push_back(std::move(plan));
    rec.ego_poses.push_back(s.ego_pose);
    rec.pair_next_observations.push_back(render_observation(later, cfg.render, s.ego_pose));
    rec.pair_next_bevs.push_back(render_bev(later, cfg.render, s.ego_pose));
    rec.pair_actions.push_back(relative_motion(s.ego_pose, later.ego_pose));
  }
  return rec;
}

std::vector<EpisodeRecord> generate_episodes(const DatasetConfig& cfg, std::uint64_t seed) {
  std::vector<EpisodeRecord> out;
  for (const auto& [kind, s] : plan_episodes(cfg, seed)) out.push_back(simulate_episode(kind, s, cfg));
  return out;
}

namespace {

template <typename T, typename F>
std::vector<double> flatten(const std::vector<T>& items, F&& fields) {
  std::vector<double> out;
  for (const T& item : items) fields(item, out);
  return out;
}

std::vector<float> obs_stack(const std::vector<Observation>& obs) {
  std::vector<float> out;
  for (const Observation& o : obs) out.insert(out.end(), o.data.begin(), o.data.end());
  return out;
}

std::vector<std::uint8_t> bev_stack(const std::vector<BevMap>& bevs) {
  std::vector<std::uint8_t> out;
  for (const BevMap& b : bevs) out.insert(out.end(), b.data.begin(), b.data.end());
  return out;
}

std::vector<Observation> obs_unstack(const io::ArrayFile& f, const std::string& name) {
  const auto& shape = f.get(name).shape;
  if (shape.size() != 4) throw FormatError(name + " must be 4-d");
  const std::vector<float> flat = f.f32(name);
  const std::size_t per = static_cast<std::size_t>(shape[1] * shape[2] * shape[3]);
  std::vector<Observation> out;
  for (std::int64_t i = 0; i < shape[0]; ++i) {
    out.push_back({static_cast<int>(shape[1]), static_cast<int>(shape[2]), static_cast<int>(shape[3]),
                   std::vector<float>(flat.begin() + i * per, flat.begin() + (i + 1) * per)});
  }
  return out;
}

std::vector<BevMap> bev_unstack(const io::ArrayFile& f, const std::string& name) {
  const auto& shape = f.get(name).shape;
  if (shape.size() != 3) throw FormatError(name + " must be 3-d");
  const std::vector<std::uint8_t> flat = f.u8(name);
  const std::size_t per = static_cast<std::size_t>(shape[1] * shape[2]);
  std::vector<BevMap> out;
  for (std::int64_t i = 0; i < shape[0]; ++i) {
    out.push_back({static_cast<int>(shape[1]), static_cast<int>(shape[2]),
                   std::vector<std::uint8_t>(flat.begin() + i * per, flat.begin() + (i + 1) * per)});
  }
  return out;
}

std::vector<EgoAction> actions_from(const std::vector<double>& flat) {
  std::vector<EgoAction> out;
  for (std::size_t i = 0; i + 2 < flat.size(); i += 3) out.push_back({flat[i], flat[i + 1], flat[i + 2]});
  return out;
}

}  // namespace

void write_episode(const EpisodeRecord& rec, const fs::path& path) {
  const auto n = static_cast<std::int64_t>(rec.size());
  DYNVLA_EXPECT(n > 0, "cannot write an empty episode");
  const Observation& o0 = rec.observations.front();
  const BevMap& b0 = rec.bevs.front();
  const auto nw = static_cast<std::int64_t>(rec.expert.front().size());

  io::ArrayFile f;
  f.set_meta("kind", std::string(to_string(rec.kind)));
  f.set_meta("seed", std::to_string(rec.seed));
  f.set_meta("frames", std::to_string(n));
  f.set_meta("pair_stride", std::to_string(rec.pair_stride));
  f.add_f32("obs", {n, o0.height, o0.width, o0.channels}, obs_stack(rec.observations));
  f.add_u8("bev", {n, b0.height, b0.width}, bev_stack(rec.bevs));
  auto action_fields = [](const EgoAction& a, std::vector<double>& out) { out.insert(out.end(), {a.dx, a.dy, a.dyaw}); };
  f.add_f64("ego_action", {n, 3}, flatten(rec.ego_actions, action_fields));
  f.add_f64("expert_traj", {n, nw, 3}, flatten(rec.expert, [](const Trajectory& t, std::vector<double>& out) {
              for (const Pose2& p : t.waypoints) out.insert(out.end(), {p.x, p.y, p.yaw});
            }));
  f.add_f64("ego_state", {n, 3}, flatten(rec.ego_states, [](const EgoStateSummary& s, std::vector<double>& out) {
              out.insert(out.end(), {s.speed, s.accel, static_cast<double>(static_cast<int>(s.command))});
            }));
  f.add_f64("ego_pose", {n, 3}, flatten(rec.ego_poses, [](const Pose2& p, std::vector<double>& out) {
              out.insert(out.end(), {p.x, p.y, p.yaw});
            }));
  f.add_f32("pair_next_obs", {n, o0.height, o0.width, o0.channels}, obs_stack(rec.pair_next_observations));
  f.add_u8("pair_next_bev", {n, b0.height, b0.width}, bev_stack(rec.pair_next_bevs));
  f.add_f64("pair_action", {n, 3}, flatten(rec.pair_actions, action_fields));
  f.write(path);
}

EpisodeRecord read_episode(const fs::path& path) {
  const io::ArrayFile f = io::ArrayFile::read(path);
  EpisodeRecord rec;
  rec.kind = parse_scenario_kind(f.meta("kind").value_or(""));
  rec.seed = std::stoull(f.meta("seed").value_or("0"));
  rec.pair_stride = std::stoi(f.meta("pair_stride").value_or("2"));
  rec.observations = obs_unstack(f, "obs");
  rec.bevs = bev_unstack(f, "bev");
  rec.ego_actions = actions_from(f.f64("ego_action"));
  const auto& ts = f.get("expert_traj").shape;
  const std::vector<double> traj = f.f64("expert_traj");
  for (std::int64_t i = 0; i < ts[0]; ++i) {
    Trajectory t;
    for (std::int64_t j = 0; j < ts[1]; ++j) {
      const std::size_t o = static_cast<std::size_t>((i * ts[1] + j) * 3);
      t.waypoints.push_back({traj[o], traj[o + 1], traj[o + 2]});
    }
    rec.expert.push_back(std::move(t));
  }
  const std::vector<double> st = f.f64("ego_state");
  for (std::size_t i = 0; i + 2 < st.size(); i += 3) {
    rec.ego_states.push_back({st[i], st[i + 1], static_cast<DrivingCommand>(static_cast<int>(st[i + 2]))});
  }
  for (const EgoAction& p : actions_from(f.f64("ego_pose"))) rec.ego_poses.push_back({p.dx, p.dy, p.dyaw});
  rec.pair_next_observations = obs_unstack(f, "pair_next_obs");
  rec.pair_next_bevs = bev_unstack(f, "pair_next_bev");
  rec.pair_actions = actions_from(f.f64("pair_action"));
  if (rec.bevs.size() != rec.size() || rec.ego_actions.size() != rec.size() || rec.expert.size() != rec.size() ||
      rec.pair_actions.size() != rec.size()) {
    throw FormatError("episode arrays disagree on frame count: " + path.string());
  }
  return rec;
}

Manifest generate_dataset(const DatasetConfig& cfg, std::uint64_t seed, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir / "episodes", ec);
  if (ec) throw IoError("cannot create dataset directory " + out_dir.string() + ": " + ec.message());
  Manifest manifest;
  int index = 0;
  for (const auto& [kind, ep_seed] : plan_episodes(cfg, seed)) {
    const EpisodeRecord rec = simulate_episode(kind, ep_seed, cfg);
    char name[64];
    std::snprintf(name, sizeof(name), "episodes/ep_%06d.dva", index++);
    write_episode(rec, out_dir / name);
    manifest.entries.push_back({name, static_cast<int>(rec.size()), kind, ep_seed});
  }
  std::ofstream out(out_dir / "manifest.txt", std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write manifest in " + out_dir.string());
  out << manifest.to_text();
  return manifest;
}

Manifest read_manifest(const fs::path& dataset_dir) {
  std::ifstream in(dataset_dir / "manifest.txt", std::ios::binary);
  if (!in) throw IoError("missing manifest in " + dataset_dir.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return Manifest::parse(ss.str());
}

std::vector<EpisodeRecord> load_dataset(const fs::path& dataset_dir) {
  std::vector<EpisodeRecord> out;
  for (const ManifestEntry& e : read_manifest(dataset_dir).entries) {
    EpisodeRecord rec = read_episode(dataset_dir / e.path);
    if (static_cast<int>(rec.size()) != e.frames) throw FormatError("frame count mismatch for " + e.path);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace dynvla::world
