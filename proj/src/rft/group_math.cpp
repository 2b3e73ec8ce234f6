#include "dynvla/rft/group_math.hpp"

#include <algorithm>
#include <cmath>

#include "dynvla/common/error.hpp"

namespace dynvla::rft {

std::vector<double> group_advantages(std::span<const double> rewards, double eps) {
  DYNVLA_EXPECT(rewards.size() >= 2, "group needs at least two rewards");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(rewards.size());
  const double denom = std::sqrt(var) + eps;
  std::vector<double> out;
  out.reserve(rewards.size());
  for (double r : rewards) out.push_back((r - mean) / denom);
  return out;
}

double clipped_token_term(double ratio, double advantage, double clip_eps) {
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  return std::min(ratio * advantage, clipped * advantage);
}

double categorical_kl(std::span<const double> p, std::span<const double> q, double tol) {
  DYNVLA_EXPECT(p.size() == q.size() && !p.empty(), "distributions must share a support");
  double sp = 0.0;
  double sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    DYNVLA_EXPECT(p[i] >= 0.0 && q[i] >= 0.0, "negative probability");
    sp += p[i];
    sq += q[i];
  }
  DYNVLA_EXPECT(std::abs(sp - 1.0) <= tol && std::abs(sq - 1.0) <= tol, "distribution is not normalised");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    DYNVLA_EXPECT(q[i] > 0.0, "reference assigns zero mass where current does not");
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

ObjectiveValue grpo_objective(const RolloutGroup& group, double clip_eps, double beta) {
  const std::size_t g = group.logp_current.size();
  DYNVLA_EXPECT(g > 0 && group.logp_old.size() == g && group.advantages.size() == g, "incomplete rollout group");
  ObjectiveValue out;
  std::size_t counted = 0;
  std::size_t clipped = 0;
  for (std::size_t i = 0; i < g; ++i) {
    const auto& cur = group.logp_current[i];
    const auto& old = group.logp_old[i];
    DYNVLA_EXPECT(cur.size() == old.size(), "log-prob length mismatch");
    if (cur.empty()) continue;
    double sum = 0.0;
    for (std::size_t t = 0; t < cur.size(); ++t) {
      const double rho = std::exp(cur[t] - old[t]);
      if (!std::isfinite(rho)) {
        ++out.skipped_tokens;
        continue;
      }
      if (rho < 1.0 - clip_eps || rho > 1.0 + clip_eps) ++clipped;
      ++counted;
      sum += clipped_token_term(rho, group.advantages[i], clip_eps);
    }
    out.surrogate += sum / static_cast<double>(cur.size());
    if (i < group.token_kl.size() && !group.token_kl[i].empty()) {
      double kl = 0.0;
      for (double k : group.token_kl[i]) kl += k;
      out.kl += kl / static_cast<double>(group.token_kl[i].size());
    }
  }
  out.surrogate /= static_cast<double>(g);
  out.kl /= static_cast<double>(g);
  out.value = out.surrogate - beta * out.kl;
  out.clip_fraction = counted ? static_cast<double>(clipped) / static_cast<double>(counted) : 0.0;
  return out;
}

}  // namespace dynvla::rft
