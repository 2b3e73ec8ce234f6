#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dynvla/codec/action_codec.hpp"
#include "dynvla/common/error.hpp"
#include "dynvla/harness/eval.hpp"
#include "dynvla/harness/plots.hpp"
#include "dynvla/io/array_file.hpp"
#include "dynvla/world/render.hpp"

using namespace dynvla;
using namespace dynvla::harness;
namespace fs = std::filesystem;

namespace {

std::vector<std::optional<world::Trajectory>> expert_plans(const std::vector<Scenario>& suite) {
  std::vector<std::optional<world::Trajectory>> plans;
  for (const auto& s : suite) plans.emplace_back(s.expert);
  return plans;
}

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("scenario suite") {
  const world::DatasetConfig data;
  const auto a = make_scenario_suite(10, 5, data, 2);
  const auto b = make_scenario_suite(10, 5, data, 2);
  REQUIRE(a.size() == 10);
  for (int i = 0; i < 10; ++i) {
    CHECK(a[i].kind == world::kAllScenarioKinds[i % 5]);
    CHECK(a[i].obs_t == b[i].obs_t);
    CHECK(a[i].expert == b[i].expert);
  }
  CHECK_FALSE(a[0].obs_t == make_scenario_suite(1, 6, data, 2)[0].obs_t);
  CHECK_THROWS_AS(make_scenario_suite(0, 5, data, 2), ContractViolation);
  CHECK_THROWS_AS(make_scenario_suite(3, 5, data, 1, 2), ContractViolation);
}

TEST_CASE("closed-loop scoring") {
  const auto suite = make_scenario_suite(20, 11, {}, 2);
  SUBCASE("expert plans score high") {
    const auto rep = score_closed_loop(suite, expert_plans(suite));
    CHECK(rep.mean_pdms >= 0.9);
    CHECK(rep.malformed == 0);
  }
  SUBCASE("off-road plans score zero") {
    std::vector<std::optional<world::Trajectory>> plans;
    for (std::size_t i = 0; i < suite.size(); ++i) {
      world::Trajectory t;
      for (int k = 1; k <= 8; ++k) t.waypoints.push_back({1.0 * k, 3.0 * k, 1.2});
      plans.emplace_back(t);
    }
    const auto rep = score_closed_loop(suite, plans);
    CHECK(rep.mean_pdms == 0.0);
  }
  SUBCASE("missing plans are malformed and score zero") {
    auto plans = expert_plans(suite);
    plans[3].reset();
    plans[7].reset();
    const auto rep = score_closed_loop(suite, plans);
    CHECK(rep.malformed == 2);
    CHECK(rep.rows[3].breakdown.pdms == 0.0);
    double sum = 0.0;
    for (const auto& r : rep.rows) sum += r.breakdown.pdms;
    CHECK(rep.mean_pdms == doctest::Approx(sum / 20.0).epsilon(1e-12));
  }
  SUBCASE("reproducible output") {
    const auto r1 = score_closed_loop(suite, expert_plans(suite));
    const auto r2 = score_closed_loop(make_scenario_suite(20, 11, {}, 2), expert_plans(suite));
    CHECK(r1.to_csv() == r2.to_csv());
    CHECK(r1.to_csv().rfind("index,kind,seed,parsed,nc,dac,ttc,comfort,ep,pdms\n", 0) == 0);
  }
  CHECK_THROWS_AS(score_closed_loop(suite, {}), ContractViolation);
}

TEST_CASE("open-loop scoring") {
  const auto suite = make_scenario_suite(10, 21, {}, 2);
  std::vector<OpenLoopRow> replay, still;
  double expected_still = 0.0;
  for (const auto& s : suite) {
    const auto enc = codec::encode_actions(s.expert);
    const auto decoded = codec::decode_actions(enc.ids);
    auto row = score_open_loop_sample(s.ctx.state, decoded, s.expert);
    const auto qb = codec::quantization_bound();
    const auto tr = codec::truncation_residual(s.expert);
    CHECK(enc.clamped == 0);
    CHECK(row.ade <= std::hypot(qb[0] + tr[0], qb[1] + tr[1]) + 1e-9);
    replay.push_back(row);

    world::Trajectory stand;
    stand.waypoints.assign(s.expert.size(), world::Pose2{});
    still.push_back(score_open_loop_sample(s.ctx.state, stand, s.expert));
    double mean = 0.0;
    for (const auto& w : s.expert.waypoints) mean += std::hypot(w.x, w.y);
    expected_still += mean / static_cast<double>(s.expert.size());
    CHECK(still.back().ade == doctest::Approx(mean / static_cast<double>(s.expert.size())).epsilon(1e-12));
  }
  const auto rs = OpenLoopReport::from_rows(still);
  CHECK(rs.ade == doctest::Approx(expected_still / 10.0).epsilon(1e-12));

  replay.push_back(score_open_loop_sample(suite[0].ctx.state, std::nullopt, suite[0].expert));
  const auto rep = OpenLoopReport::from_rows(replay);
  CHECK(rep.malformed == 1);
  CHECK(rep.collision_rate == 0.0);
  double sum = 0.0;
  for (int i = 0; i < 10; ++i) sum += replay[i].ade;
  CHECK(rep.ade == doctest::Approx(sum / 10.0).epsilon(1e-12));
  CHECK(rep.to_csv().rfind("episode,frame,parsed,ade,collided\n", 0) == 0);
}

TEST_CASE("telemetry parsing") {
  const auto t = Telemetry::parse("step mean_reward\n0 0.5\n1 0.75\n");
  CHECK(t.column("step") == std::vector<double>{0, 1});
  CHECK(t.column("mean_reward") == std::vector<double>{0.5, 0.75});
  CHECK_THROWS_AS(t.column("nope"), FormatError);
}

TEST_CASE("svg output is deterministic") {
  const std::vector<Series> s{{"a", {0, 1, 2}, {1, 3, 2}}, {"b", {0, 2}, {0, 1}}};
  const auto svg = line_chart_svg("t", "x", "y", s);
  CHECK(svg == line_chart_svg("t", "x", "y", s));
  CHECK(svg.rfind("<svg", 0) == 0);
  const auto obs = world::render_observation(world::spawn_scenario(world::ScenarioKind::OpenRoad, 1));
  const auto panels = panels_svg({{"one", obs}, {"two", obs}}, 1);
  CHECK(panels == panels_svg({{"one", obs}, {"two", obs}}, 1));
  std::size_t rects = 0;
  for (auto p = panels.find("<rect"); p != std::string::npos; p = panels.find("<rect", p + 1)) ++rects;
  CHECK(rects >= 2u * static_cast<std::size_t>(obs.height * obs.width));
}

TEST_CASE("plot emission") {
  SUBCASE("missing inputs are skipped") {
    const auto dir = fresh_dir("dynvla_plots_empty");
    const auto rep = emit_plots(dir);
    CHECK(rep.written.empty());
    CHECK(rep.skipped.size() == 3);
    fs::remove_all(dir);
  }
  SUBCASE("all inputs present") {
    const auto dir = fresh_dir("dynvla_plots_full");
    for (const char* arm : {"tokenizer_0", "tokenizer_1"}) {
      fs::create_directories(dir / arm);
      std::ofstream(dir / arm / "telemetry.txt")
          << "step total mse perceptual bev vq act_reg active_ego active_env\n0 1 1 1 1 1 1 64 64\n1 1 1 1 1 1 1 8 4\n";
    }
    fs::create_directories(dir / "rft");
    std::ofstream(dir / "rft" / "telemetry.txt")
        << "step mean_reward fmt_valid_frac mean_kl clip_frac\n0 1.5 0.9 0 0\n1 1.7 1 0.01 0.1\n";
    const auto obs = world::render_observation(world::spawn_scenario(world::ScenarioKind::CurbAhead, 3));
    fs::create_directories(dir / "transfer");
    write_transfer_trial(dir / "transfer" / "trial_000.arrays", obs, obs, obs);
    write_transfer_trial(dir / "transfer" / "trial_001.arrays", obs, obs, obs);
    const auto rep = emit_plots(dir);
    CHECK(rep.skipped.empty());
    CHECK(rep.written.size() == 4);
    for (const auto& p : rep.written) CHECK(fs::file_size(p) > 0);
    CHECK(io::ArrayFile::read(dir / "transfer" / "trial_000.arrays").has("transferred"));
    fs::remove_all(dir);
  }
}
