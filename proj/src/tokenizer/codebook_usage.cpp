#include "dynvla/tokenizer/codebook_usage.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dynvla/common/error.hpp"

namespace dynvla::tokenizer {

int nearest_code(std::span<const float> query, std::span<const float> codebook, int dim) {
  DYNVLA_EXPECT(dim > 0 && static_cast<int>(query.size()) == dim, "query length does not match code dim");
  DYNVLA_EXPECT(!codebook.empty() && codebook.size() % static_cast<std::size_t>(dim) == 0, "bad codebook shape");
  const std::size_t m = codebook.size() / static_cast<std::size_t>(dim);
  int best = 0;
  double best_d = 0.0;
  for (std::size_t c = 0; c < m; ++c) {
    double d = 0.0;
    const float* row = codebook.data() + c * static_cast<std::size_t>(dim);
    for (int j = 0; j < dim; ++j) {
      const double diff = static_cast<double>(query[static_cast<std::size_t>(j)]) - static_cast<double>(row[j]);
      d += diff * diff;
    }
    if (c == 0 || d < best_d) {
      best = static_cast<int>(c);
      best_d = d;
    }
  }
  DYNVLA_EXPECT(std::isfinite(best_d), "non-finite quantizer input");
  return best;
}

std::vector<int> nearest_codes(std::span<const float> queries, std::span<const float> codebook, int dim) {
  DYNVLA_EXPECT(dim > 0 && queries.size() % static_cast<std::size_t>(dim) == 0, "bad query batch shape");
  std::vector<int> ids;
  const std::size_t n = queries.size() / static_cast<std::size_t>(dim);
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.push_back(nearest_code(queries.subspan(i * dim, dim), codebook, dim));
  return ids;
}

CodebookUsage::CodebookUsage(int codes)
    : counts_(static_cast<std::size_t>(codes), 0), last_(static_cast<std::size_t>(codes), -1) {}

void CodebookUsage::record(std::span<const int> ids, std::int64_t step) {
  DYNVLA_EXPECT(step >= current_, "usage steps must be non-decreasing");
  for (int id : ids) {
    DYNVLA_EXPECT(id >= 0 && id < size(), "code id " + std::to_string(id) + " out of range");
    ++counts_[static_cast<std::size_t>(id)];
    last_[static_cast<std::size_t>(id)] = step;
  }
  current_ = step;
}

int codebook_activation(const CodebookUsage& usage, std::int64_t window) {
  DYNVLA_EXPECT(window >= 1, "activation window must be at least one step");
  if (usage.current_step() < 0) return 0;
  // Never-used codes carry last step -1, which must not fall inside a window
  // that reaches back before step 0.
  const std::int64_t first = std::max<std::int64_t>(0, usage.current_step() - window + 1);
  int active = 0;
  for (int c = 0; c < usage.size(); ++c) {
    if (usage.last_step(c) >= first) ++active;
  }
  return active;
}

}  // namespace dynvla::tokenizer
