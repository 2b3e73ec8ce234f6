#include "dynvla/harness/eval.hpp"

#include <sstream>

#include "dynvla/common/error.hpp"
#include "dynvla/common/rng.hpp"
#include "dynvla/world/expert.hpp"
#include "dynvla/world/render.hpp"

namespace dynvla::harness {

std::vector<Scenario> make_scenario_suite(int count, std::uint64_t seed, const world::DatasetConfig& data,
                                          int plan_frame, int context_gap) {
  DYNVLA_EXPECT(count >= 1, "scenario suite must not be empty");
  DYNVLA_EXPECT(plan_frame >= context_gap && context_gap >= 0, "plan frame must leave room for the context gap");
  std::vector<Scenario> suite;
  suite.reserve(static_cast<std::size_t>(count));
  constexpr int kinds = static_cast<int>(std::size(world::kAllScenarioKinds));
  for (int i = 0; i < count; ++i) {
    Scenario s;
    s.index = i;
    s.kind = world::kAllScenarioKinds[i % kinds];
    s.seed = mix_seed(seed, static_cast<std::uint64_t>(i));
    const auto states = world::simulate_states(s.kind, s.seed, plan_frame + 1, data.planner);
    const auto& now = states[static_cast<std::size_t>(plan_frame)];
    s.obs_prev = world::render_observation(states[static_cast<std::size_t>(plan_frame - context_gap)], data.render);
    s.obs_t = world::render_observation(now, data.render);
    s.expert = world::expert_trajectory(now, data.planner);
    s.summary = {now.ego_speed, now.ego_accel, world::command_from_plan(s.expert)};
    s.ctx = rft::make_scenario_context(now, data.planner);
    suite.push_back(std::move(s));
  }
  return suite;
}

ClosedLoopReport ClosedLoopReport::from_rows(std::vector<ClosedLoopRow> rows) {
  ClosedLoopReport r;
  r.rows = std::move(rows);
  double sum = 0.0;
  for (const auto& row : r.rows) {
    sum += row.breakdown.pdms;
    if (!row.parsed) ++r.malformed;
  }
  r.mean_pdms = r.rows.empty() ? 0.0 : sum / static_cast<double>(r.rows.size());
  return r;
}

std::string ClosedLoopReport::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "index,kind,seed,parsed,nc,dac,ttc,comfort,ep,pdms\n";
  for (const auto& r : rows) {
    const auto& b = r.breakdown;
    os << r.index << ',' << world::to_string(r.kind) << ',' << r.seed << ',' << (r.parsed ? 1 : 0) << ',' << b.nc << ','
       << b.dac << ',' << b.ttc << ',' << b.comfort << ',' << b.ep << ',' << b.pdms << '\n';
  }
  return os.str();
}

std::string ClosedLoopReport::summary() const {
  std::ostringstream os;
  os.precision(6);
  os << "scenarios " << rows.size() << "  mean_pdms " << mean_pdms << "  malformed " << malformed;
  return os.str();
}

ClosedLoopReport score_closed_loop(const std::vector<Scenario>& suite,
                                   const std::vector<std::optional<world::Trajectory>>& plans,
                                   const world::MetricConfig& metrics) {
  DYNVLA_EXPECT(!suite.empty(), "scenario suite must not be empty");
  DYNVLA_EXPECT(plans.size() == suite.size(), "one plan slot per scenario");
  std::vector<ClosedLoopRow> rows;
  for (std::size_t i = 0; i < suite.size(); ++i) {
    ClosedLoopRow row{suite[i].index, suite[i].kind, suite[i].seed, plans[i].has_value(), {}};
    if (plans[i]) row.breakdown = rft::score_plan(*plans[i], suite[i].ctx, metrics);
    rows.push_back(row);
  }
  return ClosedLoopReport::from_rows(std::move(rows));
}

OpenLoopReport OpenLoopReport::from_rows(std::vector<OpenLoopRow> rows) {
  OpenLoopReport r;
  r.rows = std::move(rows);
  double ade = 0.0;
  int parsed = 0, collided = 0;
  for (const auto& row : r.rows) {
    if (!row.parsed) {
      ++r.malformed;
      continue;
    }
    ++parsed;
    ade += row.ade;
    if (row.collided) ++collided;
  }
  r.ade = parsed ? ade / parsed : 0.0;
  r.collision_rate = parsed ? static_cast<double>(collided) / parsed : 0.0;
  return r;
}

std::string OpenLoopReport::to_csv() const {
  std::ostringstream os;
  os.precision(10);
  os << "episode,frame,parsed,ade,collided\n";
  for (const auto& r : rows) {
    os << r.episode << ',' << r.frame << ',' << (r.parsed ? 1 : 0) << ',' << r.ade << ',' << (r.collided ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string OpenLoopReport::summary() const {
  std::ostringstream os;
  os.precision(6);
  os << "samples " << rows.size() << "  ade_m " << ade << "  collision_rate " << collision_rate << "  malformed "
     << malformed;
  return os.str();
}

OpenLoopRow score_open_loop_sample(const world::WorldState& state, const std::optional<world::Trajectory>& plan,
                                   const world::Trajectory& expert) {
  OpenLoopRow row;
  if (!plan) return row;
  row.parsed = true;
  row.ade = world::compute_ade(*plan, expert);
  row.collided = world::has_collision(world::rollout_trajectory(state, *plan));
  return row;
}

}  // namespace dynvla::harness
