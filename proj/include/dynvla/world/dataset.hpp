#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dynvla/world/expert.hpp"
#include "dynvla/world/render.hpp"

namespace dynvla::world {

enum class DrivingCommand : int { Straight = 0, Left = 1, Right = 2 };

struct EgoStateSummary {
  double speed = 0.0;
  double accel = 0.0;
  DrivingCommand command = DrivingCommand::Straight;
};

// Lateral intent of a plan, from its final lateral offset.
DrivingCommand command_from_plan(const Trajectory& plan);

struct EpisodeRecord {
  ScenarioKind kind = ScenarioKind::OpenRoad;
  std::uint64_t seed = 0;
  int pair_stride = 2;

  std::vector<Observation> observations;
  std::vector<BevMap> bevs;
  std::vector<EgoAction> ego_actions;  // frame t -> t+1
  std::vector<Trajectory> expert;
  std::vector<EgoStateSummary> ego_states;
  std::vector<Pose2> ego_poses;

  // Dynamics pairs: state t+stride rendered in frame t's ego anchor, and the
  // relative ego motion across the pair.
  std::vector<Observation> pair_next_observations;
  std::vector<BevMap> pair_next_bevs;
  std::vector<EgoAction> pair_actions;

  std::size_t size() const { return observations.size(); }
};

struct DatasetConfig {
  int episodes = 10;
  int frames = 16;
  int pair_stride = 2;  // 1 s at dt = 0.5 s
  std::vector<std::pair<ScenarioKind, double>> mix = {
      {ScenarioKind::LeadVehicleStop, 1.0}, {ScenarioKind::LateralCutIn, 1.0}, {ScenarioKind::CurbAhead, 1.0},
      {ScenarioKind::OpenRoad, 1.0},        {ScenarioKind::CrossingAgent, 1.0}};
  RenderConfig render;
  PlannerConfig planner;
};

struct ManifestEntry {
  std::string path;
  int frames = 0;
  ScenarioKind kind = ScenarioKind::OpenRoad;
  std::uint64_t seed = 0;
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  std::map<ScenarioKind, int> counts() const;
  // "<relative-path> <frame-count> <scenario-kind> <seed>" per line.
  std::string to_text() const;
  static Manifest parse(const std::string& text);
};

// Seeded scenario sampler: (kind, episode seed) for every episode.
std::vector<std::pair<ScenarioKind, std::uint64_t>> plan_episodes(const DatasetConfig& cfg, std::uint64_t seed);

// Expert-driven episode; the ego executes the first waypoint of each replan.
EpisodeRecord simulate_episode(ScenarioKind kind, std::uint64_t seed, const DatasetConfig& cfg);
// Simulation states 0 .. frames - 1 + stride of the same episode.
std::vector<WorldState> simulate_states(ScenarioKind kind, std::uint64_t seed, int steps,
                                        const PlannerConfig& planner = {});

std::vector<EpisodeRecord> generate_episodes(const DatasetConfig& cfg, std::uint64_t seed);

void write_episode(const EpisodeRecord& rec, const std::filesystem::path& path);
EpisodeRecord read_episode(const std::filesystem::path& path);

// Writes one file per episode plus manifest.txt under `out_dir`. Throws
// IoError when the directory cannot be written.
Manifest generate_dataset(const DatasetConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir);

Manifest read_manifest(const std::filesystem::path& dataset_dir);
std::vector<EpisodeRecord> load_dataset(const std::filesystem::path& dataset_dir);

}  // namespace dynvla::world
