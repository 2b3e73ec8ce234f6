#pragma once

#include <cstdint>
#include <vector>

#include "dynvla/rft/train.hpp"

namespace dynvla::rft {

// Single-context task over a small vocabulary: a fixed-length sequence earns
// the mean of per-position scores, so the reward argmax is unique whenever
// each position's best token is. random() gives every position one target
// token scoring 1 and distractors below 0.6.
struct BanditTask {
  int vocab = 16;
  int length = 3;
  std::vector<std::vector<double>> scores;  // [length][vocab]

  static BanditTask random(int vocab, int length, std::uint64_t seed);
  double reward(const std::vector<int>& tokens) const;
  // Exhaustive scan over vocab^length sequences; lowest lexicographic on ties.
  std::vector<int> enumerate_argmax() const;

  policy::PolicyConfig policy_config() const;
  policy::ContextBatch context() const;
  RftTask as_task() const;
};

}  // namespace dynvla::rft
