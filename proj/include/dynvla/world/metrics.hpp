#pragma once

#include <vector>

#include "dynvla/world/expert.hpp"

namespace dynvla::world {

struct RewardBreakdown {
  double nc = 0.0;
  double dac = 0.0;
  double ttc = 0.0;
  double comfort = 0.0;
  double ep = 0.0;
  double pdms = 0.0;
};

struct MetricConfig {
  double dac_tolerance = 0.1;     // m
  double ttc_threshold = 1.0;     // s
  double ttc_resolution = 0.1;    // s
  double max_accel = 4.0;         // m/s^2
  double max_yaw_rate_change = 0.5;  // rad/s between consecutive steps
  double min_expert_progress = 0.5;  // m
};

// NC * DAC * (5 EP + 5 TTC + 2 C) / 12
double compose_pdms(double nc, double dac, double ttc, double comfort, double ep);
RewardBreakdown compose_pdms(RewardBreakdown subscores);

bool has_collision(const std::vector<WorldState>& rollout);
bool stays_drivable(const std::vector<WorldState>& rollout, double tolerance);
bool ttc_ok(const std::vector<WorldState>& rollout, const MetricConfig& cfg = {});
bool is_comfortable(const std::vector<WorldState>& rollout, const MetricConfig& cfg = {});

RewardBreakdown score_pdms(const std::vector<WorldState>& rollout, const Polyline& route, double expert_progress,
                           const MetricConfig& cfg = {});

// Mean planar waypoint distance. Throws ContractViolation on length mismatch.
double compute_ade(const Trajectory& pred, const Trajectory& gt);

double compute_collision_rate(const std::vector<std::vector<WorldState>>& rollouts);

}  // namespace dynvla::world
