#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dynvla/rft/rewards.hpp"
#include "dynvla/world/dataset.hpp"
#include "dynvla/world/metrics.hpp"

namespace dynvla::harness {

// A decision point in closed loop: the expert drives `plan_frame` steps,
// then the planner under test takes over from that state.
struct Scenario {
  int index = 0;
  world::ScenarioKind kind = world::ScenarioKind::OpenRoad;
  std::uint64_t seed = 0;
  world::Observation obs_prev;
  world::Observation obs_t;
  world::EgoStateSummary summary;
  world::Trajectory expert;
  rft::ScenarioContext ctx;
};

// Kinds are cycled in declaration order; scenario i uses mix_seed(seed, i).
std::vector<Scenario> make_scenario_suite(int count, std::uint64_t seed, const world::DatasetConfig& data,
                                          int plan_frame, int context_gap = 2);

struct ClosedLoopRow {
  int index = 0;
  world::ScenarioKind kind = world::ScenarioKind::OpenRoad;
  std::uint64_t seed = 0;
  bool parsed = false;
  world::RewardBreakdown breakdown;
};

struct ClosedLoopReport {
  std::vector<ClosedLoopRow> rows;
  double mean_pdms = 0.0;
  int malformed = 0;

  // Recomputes the aggregates from the rows.
  static ClosedLoopReport from_rows(std::vector<ClosedLoopRow> rows);
  std::string to_csv() const;  // header + one line per scenario
  std::string summary() const;
};

// Missing plans (malformed decodes) score zero and are counted.
ClosedLoopReport score_closed_loop(const std::vector<Scenario>& suite,
                                   const std::vector<std::optional<world::Trajectory>>& plans,
                                   const world::MetricConfig& metrics = {});

struct OpenLoopRow {
  int episode = 0;
  int frame = 0;
  bool parsed = false;
  double ade = 0.0;
  bool collided = false;
};

struct OpenLoopReport {
  std::vector<OpenLoopRow> rows;
  double ade = 0.0;             // mean over parsed rows
  double collision_rate = 0.0;  // over parsed rows
  int malformed = 0;

  static OpenLoopReport from_rows(std::vector<OpenLoopRow> rows);
  std::string to_csv() const;
  std::string summary() const;
};

// ADE against the expert plan and collision of the replayed plan from `state`.
OpenLoopRow score_open_loop_sample(const world::WorldState& state, const std::optional<world::Trajectory>& plan,
                                   const world::Trajectory& expert);

}  // namespace dynvla::harness
