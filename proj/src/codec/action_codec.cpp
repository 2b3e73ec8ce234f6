#include "dynvla/codec/action_codec.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dynvla/common/error.hpp"

namespace dynvla::codec {

namespace {

double component(const world::Pose2& p, int dim) {
  switch (dim) {
    case 0: return p.x;
    case 1: return p.y;
    default: return p.yaw;
  }
}

void set_component(world::Pose2& p, int dim, double v) {
  switch (dim) {
    case 0: p.x = v; break;
    case 1: p.y = v; break;
    default: p.yaw = v; break;
  }
}

}  // namespace

void ActionCodecConfig::validate() const {
  if (waypoints < 1 || dims != 3 || kept < 1 || kept > waypoints) throw ConfigError("bad action codec shape");
  if (!(step > 0.0)) throw ConfigError("codec step must be positive");
  if (bins < 2 || bins % 2 != 0) throw ConfigError("codec bins must be even and >= 2");
  if (used_ids() > vocab_budget) {
    throw ConfigError("codec needs " + std::to_string(used_ids()) + " ids, budget is " + std::to_string(vocab_budget));
  }
  for (double s : dim_scale) {
    if (!(s > 0.0)) throw ConfigError("codec dim scales must be positive");
  }
}

int action_id(const ActionCodecConfig& cfg, int slot, int bin) { return slot * cfg.bins + bin; }
int slot_of(const ActionCodecConfig& cfg, int id) { return id / cfg.bins; }
int bin_of(const ActionCodecConfig& cfg, int id) { return id % cfg.bins; }

std::vector<double> dct_ii(std::span<const double> x) {
  const auto n = static_cast<int>(x.size());
  std::vector<double> out(n, 0.0);
  for (int k = 0; k < n; ++k) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += x[i] * std::cos(std::numbers::pi * (2 * i + 1) * k / (2.0 * n));
    out[k] = acc * std::sqrt((k == 0 ? 1.0 : 2.0) / n);
  }
  return out;
}

std::vector<double> dct_iii(std::span<const double> coeffs, int n) {
  std::vector<double> out(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < coeffs.size(); ++k) {
      acc += coeffs[k] * std::sqrt((k == 0 ? 1.0 : 2.0) / n) *
             std::cos(std::numbers::pi * (2 * i + 1) * static_cast<double>(k) / (2.0 * n));
    }
    out[i] = acc;
  }
  return out;
}

ActionEncoding encode_actions(const world::Trajectory& traj, const ActionCodecConfig& cfg) {
  DYNVLA_EXPECT(static_cast<int>(traj.size()) == cfg.waypoints, "trajectory length does not match codec");
  ActionEncoding enc;
  enc.ids.reserve(cfg.sequence_length());
  const int half = cfg.zero_bin();
  for (int d = 0; d < cfg.dims; ++d) {
    std::vector<double> series(cfg.waypoints);
    for (int i = 0; i < cfg.waypoints; ++i) series[i] = component(traj.waypoints[i], d) / cfg.dim_scale[d];
    const std::vector<double> coeffs = dct_ii(series);
    for (int k = 0; k < cfg.kept; ++k) {
      long bin = std::lround(coeffs[k] / cfg.step) + half;
      if (bin < 0 || bin >= cfg.bins) {
        ++enc.clamped;
        bin = std::clamp<long>(bin, 0, cfg.bins - 1);
      }
      enc.ids.push_back(action_id(cfg, d * cfg.kept + k, static_cast<int>(bin)));
    }
  }
  return enc;
}

world::Trajectory decode_actions(std::span<const int> ids, const ActionCodecConfig& cfg) {
  if (static_cast<int>(ids.size()) != cfg.sequence_length()) {
    throw FormatError("action sequence has " + std::to_string(ids.size()) + " ids, expected " +
                      std::to_string(cfg.sequence_length()));
  }
  world::Trajectory traj;
  traj.waypoints.resize(cfg.waypoints);
  for (int d = 0; d < cfg.dims; ++d) {
    std::vector<double> coeffs(cfg.kept);
    for (int k = 0; k < cfg.kept; ++k) {
      const int slot = d * cfg.kept + k;
      const int id = ids[slot];
      if (id < 0 || id >= cfg.used_ids() || slot_of(cfg, id) != slot) {
        throw FormatError("action id " + std::to_string(id) + " does not belong to slot " + std::to_string(slot));
      }
      coeffs[k] = (bin_of(cfg, id) - cfg.zero_bin()) * cfg.step;
    }
    const std::vector<double> series = dct_iii(coeffs, cfg.waypoints);
    for (int i = 0; i < cfg.waypoints; ++i) set_component(traj.waypoints[i], d, series[i] * cfg.dim_scale[d]);
  }
  return traj;
}

std::array<double, 3> quantization_bound(const ActionCodecConfig& cfg) {
  std::array<double, 3> out{};
  for (int d = 0; d < 3; ++d) out[d] = 0.5 * cfg.step * std::sqrt(static_cast<double>(cfg.kept)) * cfg.dim_scale[d];
  return out;
}

std::array<double, 3> truncation_residual(const world::Trajectory& traj, const ActionCodecConfig& cfg) {
  std::array<double, 3> out{};
  for (int d = 0; d < cfg.dims; ++d) {
    std::vector<double> series(traj.size());
    for (std::size_t i = 0; i < traj.size(); ++i) series[i] = component(traj.waypoints[i], d);
    std::vector<double> coeffs = dct_ii(series);
    coeffs.resize(cfg.kept);
    const std::vector<double> back = dct_iii(coeffs, static_cast<int>(series.size()));
    for (std::size_t i = 0; i < series.size(); ++i) out[d] = std::max(out[d], std::abs(back[i] - series[i]));
  }
  return out;
}

}  // namespace dynvla::codec
