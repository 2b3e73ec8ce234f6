// One pass/fail line per acceptance criterion. Heavy criteria share one
// desk-profile run: a decoupled tokenizer, SFT on top of it and RFT on top
// of that.
#include <CLI11.hpp>
#include <torch/torch.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "dynvla/common/rng.hpp"
#include "dynvla/harness/pipeline.hpp"
#include "dynvla/nn/grad_check.hpp"
#include "dynvla/rft/bandit.hpp"
#include "dynvla/rft/group_math.hpp"
#include "dynvla/tokenizer/codebook_usage.hpp"
#include "dynvla/world/metrics.hpp"

using namespace dynvla;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void progress(const std::string& line) { std::cerr << "  | " << line << std::endl; }

// Criterion 1
Outcome pdms_exactness() {
  Rng rng(101);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double nc = rng.uniform() < 0.5 ? 1.0 : rng.uniform(), dac = rng.uniform() < 0.5 ? 1.0 : rng.uniform();
    const double ttc = rng.uniform(), c = rng.uniform(), ep = rng.uniform();
    const double oracle = nc * dac * (ep * 5.0 + ttc * 5.0 + c * 2.0) / 12.0;
    worst = std::max(worst, std::abs(world::compose_pdms(nc, dac, ttc, c, ep) - oracle));
  }
  const double human = world::compose_pdms(1.0, 1.0, 1.0, 0.999, 0.875);
  return {worst <= 1e-12 && std::abs(human - 0.9478) <= 1e-3,
          fmt("max |diff| %.2e over 1000 tuples, human row %.5f", worst, human)};
}

// Criterion 2. Half the queries sit on a coarse lattice so exact ties are
// common; the rest are continuous.
Outcome quantizer_oracle() {
  Rng rng(202);
  int queries = 0, mismatches = 0, ties = 0;
  while (queries < 10000) {
    const int m = 2 + static_cast<int>(rng.below(63)), dim = 1 + static_cast<int>(rng.below(32));
    const bool lattice = (queries / 500) % 2 == 1;
    auto draw = [&] {
      return lattice ? static_cast<float>(static_cast<int>(rng.below(5)) - 2) * 0.5f
                     : static_cast<float>(rng.uniform(-1.0, 1.0));
    };
    std::vector<float> cb(static_cast<std::size_t>(m * dim));
    for (auto& v : cb) v = draw();
    std::vector<float> q(static_cast<std::size_t>(100 * dim));
    for (auto& v : q) v = draw();

    const auto fast = tokenizer::nearest_codes(q, cb, dim);
    const auto qt = torch::from_blob(q.data(), {1, 100, dim}, torch::kFloat).clone();
    const auto cbt = torch::from_blob(cb.data(), {m, dim}, torch::kFloat).clone();
    const auto ids = tokenizer::quantize(qt, cbt, 0.25).ids.view({-1});
    for (int i = 0; i < 100; ++i) {
      int best = -1, count_best = 0;
      long double best_d = 0;
      for (int c = 0; c < m; ++c) {
        long double d = 0;
        for (int j = 0; j < dim; ++j) {
          const long double diff = static_cast<long double>(q[i * dim + j]) - cb[c * dim + j];
          d += diff * diff;
        }
        if (best < 0 || d < best_d) {
          best = c, best_d = d, count_best = 1;
        } else if (d == best_d) {
          ++count_best;
        }
      }
      ties += count_best > 1;
      mismatches += fast[i] != best || ids[i].item<std::int64_t>() != best;
      ++queries;
    }
  }
  return {mismatches == 0, fmt("%d queries, %d with tied minima, %d mismatches", queries, ties, mismatches)};
}

// Criterion 3
Outcome gradient_integrity(const harness::RunConfig& cfg) {
  auto dc = harness::dataset_config(cfg);
  dc.episodes = 2;
  dc.frames = 8;
  const auto eps = world::generate_episodes(dc, 5);
  nn::GradCheckOptions opts;
  opts.probes_per_tensor = 2;

  torch::manual_seed(31);
  tokenizer::Tokenizer tok(harness::tokenizer_config(cfg));
  const auto pairs = tokenizer::collect_pairs(eps);
  const std::vector<std::size_t> idx{0, 3, 7};
  auto b = tokenizer::make_batch(pairs, idx);
  tok->to(torch::kDouble);
  b.obs_t = b.obs_t.to(torch::kDouble);
  b.obs_next = b.obs_next.to(torch::kDouble);
  b.action = b.action.to(torch::kDouble);
  const auto frozen = tokenizer::TokenizerImpl::capture(tok->forward(b));
  const auto rt = nn::grad_check([&] { return tokenizer::tokenizer_loss(*tok, tok->forward(b), b).total; },
                                 [&] { return tokenizer::tokenizer_loss(*tok, tok->forward(b, &frozen), b).total; },
                                 nn::named_parameters(*tok), opts);

  tok->to(torch::kFloat);
  const auto samples = harness::make_sft_samples(cfg, eps, tok.get());
  torch::manual_seed(32);
  policy::Policy pol(harness::policy_config(cfg));
  pol->to(torch::kDouble);
  const std::vector<std::size_t> sidx{0, 1};
  auto ctx = policy::context_batch(samples, sidx);
  ctx.obs_prev = ctx.obs_prev.to(torch::kDouble);
  ctx.obs_t = ctx.obs_t.to(torch::kDouble);
  ctx.state = ctx.state.to(torch::kDouble);
  const auto tgt = policy::target_batch(samples, sidx);
  const auto masks = policy::span_masks(harness::sequence_spec(cfg), cfg.get_bool("policy.include_markers"));
  const double lambda_act = cfg.get_double("policy.lambda_act");
  const auto rp = nn::grad_check([&] { return policy::sft_loss(pol->forward(ctx, tgt), tgt, masks, lambda_act).total; },
                                 nn::named_parameters(*pol), opts);
  progress("tokenizer worst " + rt.worst);
  progress("policy worst " + rp.worst);
  return {rt.passed(1e-3) && rp.passed(1e-3),
          fmt("tokenizer max rel %.2e (%d probes), sft max rel %.2e (%d probes)", rt.max_rel_error, rt.probes,
              rp.max_rel_error, rp.probes)};
}

bool bandit_solved(std::uint64_t seed) {
  const auto bandit = rft::BanditTask::random(16, 3, seed);
  torch::manual_seed(3);
  policy::Policy p(bandit.policy_config());
  rft::RftConfig c;
  c.group = 32;
  c.contexts_per_step = 4;
  c.beta = 1e-3;
  c.seed = 11;
  c.optim.max_lr = 5e-4;
  c.optim.warmup = 10;
  c.optim.total = 300;
  c.optim.weight_decay = 0.0;
  auto res = rft::train_rft(*p, bandit.as_task(), c);
  policy::SamplingConfig greedy;
  greedy.max_length = bandit.length;
  greedy.stop_token = -1;
  return policy::generate(*res.model, bandit.context(), greedy).tokens[0] == bandit.enumerate_argmax();
}

// Criterion 8. The advantage guard eps_num = 1e-8 sits in the denominator,
// so [1,0,0,1] maps to +-(1 - 2e-8); that is the only tolerance used.
Outcome grpo_correctness() {
  std::vector<std::string> failed;
  const std::vector<double> r{1, 0, 0, 1}, want{1, -1, -1, 1};
  const auto adv4 = rft::group_advantages(r);
  for (std::size_t i = 0; i < 4; ++i) {
    if (std::abs(adv4[i] - want[i]) > 1e-7) failed.push_back("advantages");
  }
  if (rft::clipped_token_term(1.5, 1.0, 0.2) != 1.2) failed.push_back("clip high");
  if (rft::clipped_token_term(0.5, -1.0, 0.2) != -0.8) failed.push_back("clip low");

  torch::manual_seed(81);
  auto logits = torch::randn({4, 3, 9}, torch::kDouble).requires_grad_();
  const auto tokens = torch::randint(0, 9, {4, 3}, torch::kLong);
  const auto logp = torch::log_softmax(logits, -1).gather(-1, tokens.unsqueeze(-1)).squeeze(-1);
  const auto adv = torch::tensor(rft::group_advantages(std::vector<double>(4, 0.3)), torch::kDouble);
  rft::grpo_objective(logp, logp.detach(), rft::token_kl(logits, logits.detach() * 0.5), torch::ones({4, 3}, torch::kBool),
                      adv, 0.2, 0.0)
      .objective.backward();
  if (logits.grad().abs().max().item<double>() != 0.0) failed.push_back("zero gradient");
  const bool unit_ok = failed.empty();

  const bool pinned = bandit_solved(900);
  if (!pinned) failed.push_back("bandit");
  // Not gating: how often the same recipe finds the argmax on other tasks.
  int extra = 0;
  for (std::uint64_t s = 901; s <= 908; ++s) extra += bandit_solved(s);
  std::string detail = fmt("unit cases %s, pinned bandit %s, other tasks solved %d/8", unit_ok ? "match" : "wrong",
                           pinned ? "argmax" : "missed", extra);
  for (const auto& f : failed) detail += " [" + f + "]";
  return {failed.empty(), detail};
}

double paired_se(const harness::ClosedLoopReport& a, const harness::ClosedLoopReport& b) {
  const std::size_t n = a.rows.size();
  double mean = 0.0, sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a.rows[i].breakdown.pdms - b.rows[i].breakdown.pdms;
  mean /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.rows[i].breakdown.pdms - b.rows[i].breakdown.pdms - mean;
    sq += d * d;
  }
  return std::sqrt(sq / static_cast<double>(n - 1) / static_cast<double>(n));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string only_list, known_list, out_dir = (fs::temp_directory_path() / "dynvla_acceptance").string();
  app.add_option("--only", only_list, "comma-separated criterion numbers");
  app.add_option("--out", out_dir, "artifact directory");
  app.add_option("--known-fail", known_list,
                 "criteria whose failure is documented; still printed as FAIL but not counted in the exit status");
  CLI11_PARSE(app, argc, argv);
  auto parse_ids = [](const std::string& list) {
    std::set<int> ids;
    std::stringstream ss(list);
    for (std::string item; std::getline(ss, item, ',');) ids.insert(std::stoi(item));
    return ids;
  };
  const auto only = parse_ids(only_list), known = parse_ids(known_list);
  auto wanted = [&](int id) { return only.empty() || only.count(id); };
  torch::set_num_threads(1);

  const harness::RunConfig cfg;  // desk profile
  const fs::path out(out_dir);
  fs::create_directories(out);
  int failures = 0, known_failures = 0;
  std::ofstream summary(out / "summary.txt");
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    if (!wanted(id)) return;
    const auto t0 = clk::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(clk::now() - t0).count();
    const bool is_known = !o.pass && known.count(id);
    failures += !o.pass && !is_known;
    known_failures += is_known;
    const std::string line = "criterion " + std::to_string(id) + ' ' +
                             (o.pass ? "PASS" : is_known ? "FAIL (known)" : "FAIL") + ' ' + name + ": " + o.detail +
                             fmt(" (%.1f s)", secs);
    std::cout << line << std::endl;
    summary << line << std::endl;
  };

  report(1, "pdms formula", pdms_exactness);
  report(2, "quantizer oracle", quantizer_oracle);
  report(3, "gradient integrity", [&] { return gradient_integrity(cfg); });
  report(8, "grpo correctness", grpo_correctness);

  // Shared desk run for criteria 4-7, 9 and the K axis of 10.
  std::optional<harness::Datasets> data;
  std::optional<harness::TokenizerStage> tok;
  std::optional<harness::SftStage> sft;
  auto need_data = [&]() -> const harness::Datasets& {
    if (!data) data = harness::load_datasets(cfg);
    return *data;
  };
  auto need_tok = [&]() -> harness::TokenizerStage& {
    if (!tok) tok = harness::run_tokenizer_stage(cfg, need_data(), out / "tokenizer", progress);
    return *tok;
  };
  auto need_sft = [&]() -> harness::SftStage& {
    if (!sft) sft = harness::run_sft_stage(cfg, need_data(), need_tok().model.get(), out / "sft", progress);
    return *sft;
  };

  report(4, "tokenizer beats persistence", [&] {
    const auto& ev = need_tok().eval;
    const double ratio = ev.image_mse / ev.image_mse_copy;
    return Outcome{ev.bev_accuracy > ev.bev_accuracy_copy && ratio <= 0.8,
                   fmt("bev acc %.4f vs copy %.4f, image mse %.3g vs copy %.3g (ratio %.3f)", ev.bev_accuracy,
                       ev.bev_accuracy_copy, ev.image_mse, ev.image_mse_copy, ratio)};
  });
  report(5, "transfer disentanglement", [&] {
    const auto rep = harness::run_transfer_suite(*need_tok().model, 50, static_cast<std::uint64_t>(cfg.get_int("seed")),
                                                 harness::dataset_config(cfg).render);
    harness::write_text_file(out / "transfer.csv", rep.to_csv());
    const int n = static_cast<int>(rep.trials.size());
    return Outcome{rep.ego_ok * 5 >= n * 4 && rep.env_ok * 5 >= n * 4,
                   fmt("ego %d/%d within one cell, env %d/%d below one cell", rep.ego_ok, n, rep.env_ok, n)};
  });
  report(6, "decoupling vs collapse", [&] {
    harness::RunConfig off = cfg;
    off.set("tok.decoupled", "false");
    const auto arm = harness::run_tokenizer_stage(off, need_data(), out / "tokenizer_coupled", progress);
    const int on_codes = need_tok().active_codes;
    return Outcome{on_codes >= 2 * arm.active_codes,
                   fmt("active codes %d decoupled vs %d coupled over the last %lld steps of %lld", on_codes,
                       arm.active_codes, static_cast<long long>(cfg.get_int("tok.activation_window")),
                       static_cast<long long>(cfg.get_int("tok.steps")))};
  });
  report(7, "sft template acquisition", [&] {
    const auto& s = need_sft();
    return Outcome{s.fmt_valid >= 0.95 && s.dyn_accuracy > 5.0 / 64.0,
                   fmt("format valid %.4f, dynamics token accuracy %.4f (5x chance %.4f)", s.fmt_valid, s.dyn_accuracy,
                       5.0 / 64.0)};
  });
  report(9, "rft improves the policy", [&] {
    auto& s = need_sft();
    const auto suite = harness::eval_suite(cfg);
    const auto before = harness::run_closed_stage(cfg, *s.model, suite, out / "eval", "closed_loop_sft");
    auto rft = harness::run_rft_stage(cfg, *s.model, out / "rft", progress);
    const auto after = harness::run_closed_stage(cfg, *rft.model, suite, out / "eval", "closed_loop_rft");
    const double delta = after.mean_pdms - before.mean_pdms;
    return Outcome{delta >= 0.02, fmt("%zu scenarios, sft %.4f, rft %.4f, paired delta %+.4f (se %.4f)",
                                      suite.size(), before.mean_pdms, after.mean_pdms, delta,
                                      paired_se(after, before))};
  });
  report(10, "latency proxy", [&] {
    const int dyn = harness::count_reasoning_tokens("dynamics", cfg);
    const int dense = harness::count_reasoning_tokens("dense-bev", cfg);
    harness::TokenizerCache cache;
    cache.put(cfg, need_tok().model);
    const std::vector<std::string> ks{"1", "2", "3", "4"};
    const auto table = harness::ablation_grid("K", ks, cfg, static_cast<std::uint64_t>(cfg.get_int("seed")),
                                              out / "ablation_K", progress, &cache);
    std::size_t best = 0, k2 = 1;
    for (std::size_t i = 0; i < table.cells.size(); ++i) {
      if (table.cells[i].closed.mean_pdms > table.cells[best].closed.mean_pdms) best = i;
    }
    const double gap = table.cells[best].closed.mean_pdms - table.cells[k2].closed.mean_pdms;
    const double se = best == k2 ? 0.0 : paired_se(table.cells[best].closed, table.cells[k2].closed);
    std::string pdms;
    for (const auto& c : table.cells) pdms += fmt(" K=%s:%.4f", c.value.c_str(), c.closed.mean_pdms);
    return Outcome{dyn == 18 && dense >= 258 && dense > 10 * dyn && gap <= 2.0 * se,
                   fmt("tokens %d vs %d, pdms%s, K=2 gap %.4f vs 2se %.4f", dyn, dense, pdms.c_str(), gap, 2.0 * se)};
  });

  if (failures == 0 && known_failures == 0) {
    std::cout << "all criteria passed" << std::endl;
  } else {
    std::cout << fmt("%d criteria failed, %d documented failures", failures, known_failures) << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
