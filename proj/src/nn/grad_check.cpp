#include "dynvla/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "dynvla/common/error.hpp"
#include "dynvla/common/rng.hpp"

namespace dynvla::nn {

namespace {

double eval_scalar(const std::function<torch::Tensor()>& fn) {
  torch::NoGradGuard guard;
  const double v = fn().item<double>();
  DYNVLA_EXPECT(std::isfinite(v), "non-finite loss during gradient check");
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<torch::Tensor()>& analytic, const std::function<torch::Tensor()>& numeric,
                           const NamedParams& params, const GradCheckOptions& opts) {
  for (const auto& [_, p] : params) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
  torch::Tensor loss = analytic();
  DYNVLA_EXPECT(loss.numel() == 1 && std::isfinite(loss.item<double>()), "non-finite loss during gradient check");
  loss.backward();

  GradCheckReport report;
  Rng rng(mix_seed(opts.seed, 0x67726164));
  for (const auto& [name, p] : params) {
    const auto n = p.numel();
    if (n == 0) continue;
    torch::Tensor grad = p.grad().defined() ? p.grad().detach().reshape({-1}).to(torch::kDouble)
                                            : torch::zeros({n}, torch::kDouble);
    std::vector<std::int64_t> idx;
    const auto want = std::min<std::int64_t>(n, opts.probes_per_tensor);
    while (static_cast<std::int64_t>(idx.size()) < want) {
      const auto i = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n)));
      if (std::find(idx.begin(), idx.end(), i) == idx.end()) idx.push_back(i);
    }
    auto flat = p.detach().view({-1});
    for (const auto i : idx) {
      double orig = 0.0;
      {
        torch::NoGradGuard guard;
        orig = flat[i].item<double>();
        flat[i].fill_(orig + opts.step);
      }
      const double fp = eval_scalar(numeric);
      {
        torch::NoGradGuard guard;
        flat[i].fill_(orig - opts.step);
      }
      const double fm = eval_scalar(numeric);
      {
        torch::NoGradGuard guard;
        flat[i].fill_(orig);
      }
      const double fd = (fp - fm) / (2.0 * opts.step);
      const double ad = grad[i].item<double>();
      const double err = std::abs(ad - fd) / std::max({std::abs(ad), std::abs(fd), opts.floor});
      ++report.probes;
      if (err > report.max_rel_error || report.worst.empty()) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        std::ostringstream os;
        os << name << '[' << i << "] ad=" << ad << " fd=" << fd;
        if (err >= report.max_rel_error) report.worst = os.str();
      }
    }
  }
  return report;
}

NamedParams named_parameters(const torch::nn::Module& module) {
  NamedParams out;
  for (const auto& item : module.named_parameters(true)) {
    if (item.value().requires_grad()) out.emplace_back(item.key(), item.value());
  }
  return out;
}

}  // namespace dynvla::nn
