// Command-line driver for the full pipeline: data, tokenizer, SFT, RFT,
// evaluation, ablations, transfer panels and plots.
#include <CLI11.hpp>
#include <torch/torch.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "dynvla/common/error.hpp"
#include "dynvla/harness/pipeline.hpp"
#include "dynvla/harness/plots.hpp"

namespace fs = std::filesystem;
using namespace dynvla;

namespace {

struct Common {
  std::string config;
  std::optional<std::int64_t> seed;
  std::string out = "runs/default";
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Plain-text key = value config file");
  cmd->add_option("--seed", c.seed, "Run seed");
  cmd->add_option("--out", c.out, "Output directory");
  cmd->add_option("--set", c.sets, "Override, key=value (repeatable)");
}

harness::RunConfig resolve(const Common& c) {
  std::vector<std::pair<std::string, std::string>> assignments;
  if (!c.config.empty()) {
    std::ifstream f(c.config);
    if (!f) throw IoError("cannot read config " + c.config);
    std::stringstream ss;
    ss << f.rdbuf();
    assignments = harness::RunConfig::parse_text(ss.str());
  }
  for (const auto& s : c.sets) assignments.push_back(harness::RunConfig::parse_override(s));
  if (c.seed) assignments.emplace_back("seed", std::to_string(*c.seed));
  harness::RunConfig cfg;
  cfg.apply(assignments);
  torch::set_num_threads(static_cast<int>(cfg.get_int("threads")));
  return cfg;
}

void log_line(const std::string& s) {
  std::cout << s << std::endl;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamics-reasoning driving policy toolkit"};
  app.require_subcommand(1);

  Common gen, tok, sft, rftc, eopen, eclosed, abl, xfer, plot;
  std::string tok_ckpt, policy_ckpt, axis, values;
  int trials = 50;

  auto* c_gen = app.add_subcommand("gen-data", "Generate train and holdout episodes");
  add_common(c_gen, gen);
  auto* c_tok = app.add_subcommand("train-tokenizer", "Train the dynamics tokenizer");
  add_common(c_tok, tok);
  auto* c_sft = app.add_subcommand("train-sft", "Supervised fine-tuning on reasoning + action sequences");
  add_common(c_sft, sft);
  c_sft->add_option("--tokenizer", tok_ckpt, "Tokenizer checkpoint (dynamics reasoning)");
  auto* c_rft = app.add_subcommand("train-rft", "Group-relative reinforcement fine-tuning");
  add_common(c_rft, rftc);
  c_rft->add_option("--policy", policy_ckpt, "SFT policy checkpoint")->required();
  auto* c_open = app.add_subcommand("eval-open", "Open-loop ADE and collision rate on the holdout split");
  add_common(c_open, eopen);
  c_open->add_option("--policy", policy_ckpt, "Policy checkpoint")->required();
  auto* c_closed = app.add_subcommand("eval-closed", "Closed-loop PDMS on the scenario suite");
  add_common(c_closed, eclosed);
  c_closed->add_option("--policy", policy_ckpt, "Policy checkpoint")->required();
  auto* c_abl = app.add_subcommand("ablate", "Train and evaluate one configuration per axis value");
  add_common(c_abl, abl);
  c_abl->add_option("--axis", axis, "K | dyn-token-count | ego-env-split | cot-variant | decouple-on-off | "
                                    "bev-branch-on-off | image-branch-on-off")
      ->required();
  c_abl->add_option("--values", values, "Comma-separated values, e.g. 1,2,3,4 or 4:4,2:6")->required();
  auto* c_xfer = app.add_subcommand("transfer-demo", "Inject source dynamics into static target scenes");
  add_common(c_xfer, xfer);
  c_xfer->add_option("--tokenizer", tok_ckpt, "Tokenizer checkpoint")->required();
  c_xfer->add_option("--trials", trials, "Number of target scenes");
  auto* c_plot = app.add_subcommand("plot", "Render SVG plots from a run directory (--out)");
  add_common(c_plot, plot);

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_gen->parsed()) {
      const auto cfg = resolve(gen);
      harness::prepare_run_dir(gen.out, cfg);
      harness::write_datasets(cfg, gen.out);
      log_line("wrote " + (fs::path(gen.out) / "train").string() + " and " + (fs::path(gen.out) / "holdout").string());
    } else if (c_tok->parsed()) {
      const auto cfg = resolve(tok);
      const auto data = harness::load_datasets(cfg);
      harness::run_tokenizer_stage(cfg, data, tok.out, log_line);
    } else if (c_sft->parsed()) {
      const auto cfg = resolve(sft);
      const auto data = harness::load_datasets(cfg);
      tokenizer::Tokenizer t{nullptr};
      if (!tok_ckpt.empty()) t = harness::load_tokenizer(cfg, tok_ckpt);
      if (!t && harness::sequence_spec(cfg).variant == policy::CotVariant::Dynamics) {
        throw ConfigError("dynamics reasoning needs --tokenizer");
      }
      auto st = harness::run_sft_stage(cfg, data, t ? t.get() : nullptr, sft.out, log_line);
      log_line(harness::run_closed_stage(cfg, *st.model, harness::eval_suite(cfg), sft.out).summary());
    } else if (c_rft->parsed()) {
      const auto cfg = resolve(rftc);
      auto p = harness::load_policy(cfg, policy_ckpt);
      auto res = harness::run_rft_stage(cfg, *p, rftc.out, log_line);
      log_line(harness::run_closed_stage(cfg, *res.model, harness::eval_suite(cfg), rftc.out).summary());
    } else if (c_open->parsed()) {
      const auto cfg = resolve(eopen);
      harness::prepare_run_dir(eopen.out, cfg);
      auto p = harness::load_policy(cfg, policy_ckpt);
      const auto data = harness::load_datasets(cfg);
      const auto samples = harness::open_loop_samples(cfg, data.holdout);
      log_line(harness::run_open_stage(cfg, *p, samples, eopen.out).summary());
    } else if (c_closed->parsed()) {
      const auto cfg = resolve(eclosed);
      harness::prepare_run_dir(eclosed.out, cfg);
      auto p = harness::load_policy(cfg, policy_ckpt);
      log_line(harness::run_closed_stage(cfg, *p, harness::eval_suite(cfg), eclosed.out).summary());
    } else if (c_abl->parsed()) {
      const auto cfg = resolve(abl);
      harness::prepare_run_dir(abl.out, cfg);
      const auto table = harness::ablation_grid(axis, split_list(values), cfg,
                                                static_cast<std::uint64_t>(cfg.get_int("seed")), abl.out, log_line);
      std::cout << table.to_text();
    } else if (c_xfer->parsed()) {
      const auto cfg = resolve(xfer);
      harness::prepare_run_dir(xfer.out, cfg);
      auto t = harness::load_tokenizer(cfg, tok_ckpt);
      const auto rep = harness::run_transfer_suite(*t, trials, static_cast<std::uint64_t>(cfg.get_int("seed")),
                                                   harness::dataset_config(cfg).render);
      const fs::path dir = fs::path(xfer.out) / "transfer";
      fs::create_directories(dir);
      for (std::size_t i = 0; i < rep.trials.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "trial_%03zu.arrays", i);
        harness::write_transfer_trial(dir / name, rep.trials[i].dst_t, rep.trials[i].ego_image,
                                      rep.trials[i].src_future);
      }
      harness::write_text_file(fs::path(xfer.out) / "transfer.csv", rep.to_csv());
      log_line(rep.summary());
    } else if (c_plot->parsed()) {
      resolve(plot);
      const auto rep = harness::emit_plots(plot.out);
      for (const auto& p : rep.written) log_line("wrote " + p.string());
      for (const auto& s : rep.skipped) log_line("skipped " + s);
    }
  } catch (const TrainingFault& e) {
    std::cerr << "training fault: " << e.what() << "\n" << e.diagnostics() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
