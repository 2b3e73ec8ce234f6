#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dynvla::tokenizer {

// Index of the row of `codebook` (m x dim, row-major) closest to `query` in
// squared Euclidean distance; distances accumulate in double and ties go to
// the lowest index.
int nearest_code(std::span<const float> query, std::span<const float> codebook, int dim);

// Brute-force batch variant: n queries of length dim.
std::vector<int> nearest_codes(std::span<const float> queries, std::span<const float> codebook, int dim);

// Per-code assignment counters plus the last step each code was hit.
class CodebookUsage {
 public:
  explicit CodebookUsage(int codes = 0);

  void record(std::span<const int> ids, std::int64_t step);
  int size() const { return static_cast<int>(counts_.size()); }
  std::uint64_t count(int code) const { return counts_[static_cast<std::size_t>(code)]; }
  std::int64_t last_step(int code) const { return last_[static_cast<std::size_t>(code)]; }
  std::int64_t current_step() const { return current_; }

 private:
  std::vector<std::uint64_t> counts_;
  std::vector<std::int64_t> last_;
  std::int64_t current_ = -1;
};

// Codes assigned at least once within the trailing `window` steps, counting
// back from the most recent recorded step.
int codebook_activation(const CodebookUsage& usage, std::int64_t window);

}  // namespace dynvla::tokenizer
