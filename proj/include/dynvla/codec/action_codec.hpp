#pragma once

#include <array>
#include <span>
#include <vector>

#include "dynvla/world/expert.hpp"

namespace dynvla::codec {

// Frequency-domain trajectory tokenizer: per dimension an orthonormal DCT-II
// over the waypoints, truncation to the lowest `kept` coefficients, uniform
// quantisation with clamping, and a fixed (dimension, coefficient, bin) -> id
// map. Coefficients are quantised in normalised units: value / dim_scale.
struct ActionCodecConfig {
  int waypoints = 8;
  int dims = 3;  // x, y, yaw
  int kept = 4;
  double step = 0.25;
  int bins = 170;
  std::array<double, 3> dim_scale = {2.0, 1.0, 0.1};  // m, m, rad per unit
  int vocab_budget = 2048;

  int sequence_length() const { return dims * kept; }
  int used_ids() const { return sequence_length() * bins; }
  int zero_bin() const { return bins / 2; }
  // Throws ConfigError when the layout does not fit the id budget.
  void validate() const;
};

struct ActionEncoding {
  std::vector<int> ids;  // codec-local ids in [0, used_ids())
  int clamped = 0;       // coefficients that fell outside the bin range
};

// Slot = dim * kept + coefficient; id = slot * bins + bin.
int action_id(const ActionCodecConfig& cfg, int slot, int bin);
int slot_of(const ActionCodecConfig& cfg, int id);
int bin_of(const ActionCodecConfig& cfg, int id);

std::vector<double> dct_ii(std::span<const double> x);
std::vector<double> dct_iii(std::span<const double> coeffs, int n);  // inverse of dct_ii

ActionEncoding encode_actions(const world::Trajectory& traj, const ActionCodecConfig& cfg = {});

// Throws FormatError on wrong length or when an id is outside its slot.
world::Trajectory decode_actions(std::span<const int> ids, const ActionCodecConfig& cfg = {});

// Worst-case quantisation error per dimension, in physical units, for a
// trajectory already inside the kept-coefficient subspace and bin range:
// (step / 2) * sqrt(kept) * dim_scale.
std::array<double, 3> quantization_bound(const ActionCodecConfig& cfg = {});

// Largest per-dimension error caused by dropping the high coefficients alone.
std::array<double, 3> truncation_residual(const world::Trajectory& traj, const ActionCodecConfig& cfg = {});

}  // namespace dynvla::codec
