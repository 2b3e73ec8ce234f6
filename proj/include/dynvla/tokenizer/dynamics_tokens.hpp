#pragma once

#include <vector>

namespace dynvla::tokenizer {

// K steps of codebook ids; per step n_ego ego ids then n_env env ids.
// A single shared codebook is represented as n_env = 0.
struct DynamicsTokens {
  int steps = 0;
  int n_ego = 0;
  int n_env = 0;
  std::vector<int> ids;

  int per_step() const { return n_ego + n_env; }
  int ego(int step, int i) const { return ids[static_cast<std::size_t>(step * per_step() + i)]; }
  int env(int step, int j) const { return ids[static_cast<std::size_t>(step * per_step() + n_ego + j)]; }
  bool is_ego_slot(int index) const { return index % per_step() < n_ego; }

  friend bool operator==(const DynamicsTokens&, const DynamicsTokens&) = default;
};

}  // namespace dynvla::tokenizer
