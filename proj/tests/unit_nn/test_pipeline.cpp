#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dynvla/common/error.hpp"
#include "dynvla/harness/pipeline.hpp"

using namespace dynvla;
using namespace dynvla::harness;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("dynvla_pipeline_" + name);
  fs::remove_all(d);
  return d;
}

// Small enough to run every stage in seconds.
RunConfig tiny_run() {
  RunConfig c;
  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
           {"data.episodes", "6"}, {"data.holdout_episodes", "2"}, {"data.frames", "10"}, {"render.obs_size", "32"},
           {"render.bev_size", "16"}, {"tok.patch", "8"}, {"tok.hidden", "32"}, {"tok.heads", "2"},
           {"tok.enc_layers", "1"}, {"tok.dec_layers", "1"}, {"tok.steps", "6"}, {"tok.warmup", "1"},
           {"tok.batch", "4"}, {"tok.activation_window", "4"}, {"policy.patch", "8"}, {"policy.hidden", "32"},
           {"policy.heads", "2"}, {"policy.layers", "1"}, {"sft.steps", "6"}, {"sft.warmup", "1"},
           {"sft.batch", "4"}, {"sft.decode_every", "3"}, {"rft.steps", "3"}, {"rft.warmup", "1"},
           {"rft.group", "2"}, {"rft.contexts", "2"}, {"rft.train_scenarios", "4"}, {"eval.scenarios", "3"}}) {
    c.set(k, v);
  }
  return c;
}

}  // namespace

TEST_CASE("ablation axes accept their values") {
  CHECK(ablation_axes().size() == 7u);
  RunConfig c;
  apply_axis_value(c, "K", "3");
  CHECK(c.get_int("policy.horizon") == 3);
  apply_axis_value(c, "dyn-token-count", "12");
  CHECK(c.get_int("tok.n_ego") == 6);
  CHECK(c.get_int("tok.n_env") == 6);
  apply_axis_value(c, "ego-env-split", "2:6");
  CHECK(c.get_int("tok.n_ego") == 2);
  CHECK(c.get_int("tok.n_env") == 6);
  apply_axis_value(c, "cot-variant", "dense-bev");
  CHECK(c.get_string("policy.cot") == "dense-bev");
  apply_axis_value(c, "decouple-on-off", "off");
  CHECK_FALSE(c.get_bool("tok.decoupled"));
  apply_axis_value(c, "bev-branch-on-off", "on");
  CHECK(c.get_bool("tok.bev_branch"));
  apply_axis_value(c, "image-branch-on-off", "off");
  CHECK_FALSE(c.get_bool("tok.image_branch"));
}

TEST_CASE("ablation axes reject bad values") {
  RunConfig c;
  CHECK_THROWS_AS(apply_axis_value(c, "warp-speed", "1"), ConfigError);
  CHECK_THROWS_AS(apply_axis_value(c, "K", "three"), ConfigError);
  CHECK_THROWS_AS(apply_axis_value(c, "dyn-token-count", "7"), ConfigError);
  CHECK_THROWS_AS(apply_axis_value(c, "dyn-token-count", "x"), ConfigError);
  CHECK_THROWS_AS(apply_axis_value(c, "ego-env-split", "4-4"), ConfigError);
  CHECK_THROWS_AS(apply_axis_value(c, "cot-variant", "poetry"), ConfigError);
  CHECK_THROWS_AS(apply_axis_value(c, "decouple-on-off", "maybe"), ConfigError);
  CHECK_THROWS_AS(ablation_grid("warp-speed", {"1"}, c, 1, scratch_dir("bad_axis")), ConfigError);
}

TEST_CASE("tokenizer cache key tracks tokenizer and data settings only") {
  RunConfig a;
  const auto k0 = TokenizerCache::key(a);
  RunConfig b = a;
  b.set("policy.horizon", "4");
  b.set("sft.steps", "3");
  CHECK(TokenizerCache::key(b) == k0);
  b.set("tok.n_ego", "2");
  CHECK(TokenizerCache::key(b) != k0);
  RunConfig c = a;
  c.set("seed", "2");
  CHECK(TokenizerCache::key(c) != k0);
  RunConfig d = a;
  d.set("data.episodes", "7");
  CHECK(TokenizerCache::key(d) != k0);
}

TEST_CASE("split seeds are distinct") {
  for (std::uint64_t s : {0ull, 1ull, 2ull, 12345ull}) {
    CHECK(holdout_seed(s) != s);
    CHECK(rft_pool_seed(s) != s);
    CHECK(holdout_seed(s) != rft_pool_seed(s));
  }
}

TEST_CASE("run directory echoes config and seed") {
  const auto dir = scratch_dir("echo") / "nested" / "run";
  RunConfig c;
  c.set("seed", "42");
  prepare_run_dir(dir, c);
  CHECK(slurp(dir / "config.txt") == c.echo());
  CHECK(slurp(dir / "seed.txt") == "42\n");
  fs::remove_all(dir.parent_path().parent_path());
}

TEST_CASE("stages run end to end on a tiny configuration") {
  const auto dir = scratch_dir("stages");
  const auto cfg = tiny_run();
  const auto data = load_datasets(cfg);
  CHECK(data.train.size() == 6u);
  CHECK(data.holdout.size() == 2u);

  auto tok = run_tokenizer_stage(cfg, data, dir / "tok");
  CHECK(tok.telemetry.size() == 6u);
  CHECK(fs::exists(dir / "tok" / "tokenizer.ckpt"));
  CHECK(fs::exists(dir / "tok" / "eval.txt"));
  auto reloaded = load_tokenizer(cfg, dir / "tok" / "tokenizer.ckpt");
  for (const auto& item : tok.model->named_parameters()) {
    CHECK(torch::equal(item.value(), reloaded->named_parameters()[item.key()]));
  }

  auto sft = run_sft_stage(cfg, data, tok.model.get(), dir / "sft");
  CHECK(sft.telemetry.size() == 6u);
  CHECK_FALSE(sft.train.empty());
  CHECK(sft.fmt_valid >= 0.0);
  CHECK(sft.fmt_valid <= 1.0);
  CHECK(fs::exists(dir / "sft" / "policy.ckpt"));

  auto rft = run_rft_stage(cfg, *sft.model, dir / "rft");
  CHECK(rft.telemetry.size() == 3u);
  CHECK(fs::exists(dir / "rft" / "policy.ckpt"));

  const auto suite = eval_suite(cfg);
  CHECK(suite.size() == 3u);
  const auto closed = run_closed_stage(cfg, *rft.model, suite, dir / "eval");
  CHECK(closed.rows.size() == 3u);
  CHECK(fs::exists(dir / "eval" / "closed_loop.csv"));
  const auto open = run_open_stage(cfg, *rft.model, sft.holdout, dir / "eval");
  CHECK(fs::exists(dir / "eval" / "open_loop.csv"));
  (void)open;
  fs::remove_all(dir);
}
