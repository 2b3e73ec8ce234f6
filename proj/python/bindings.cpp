// Python bindings over the torch-free core: world, metrics, action codec,
// sequence grammar, rewards, group math, quantizer search and config.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dynvla/codec/action_codec.hpp"
#include "dynvla/common/error.hpp"
#include "dynvla/harness/config.hpp"
#include "dynvla/policy/sequence.hpp"
#include "dynvla/rft/group_math.hpp"
#include "dynvla/rft/rewards.hpp"
#include "dynvla/tokenizer/codebook_usage.hpp"
#include "dynvla/world/expert.hpp"
#include "dynvla/world/metrics.hpp"
#include "dynvla/world/render.hpp"

namespace py = pybind11;
using namespace dynvla;

namespace {

using F64 = py::array_t<double, py::array::c_style | py::array::forcecast>;
using F32 = py::array_t<float, py::array::c_style | py::array::forcecast>;

py::array_t<double> trajectory_array(const world::Trajectory& t) {
  py::array_t<double> out({static_cast<py::ssize_t>(t.size()), py::ssize_t{3}});
  auto v = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < t.size(); ++i) {
    v(i, 0) = t.waypoints[i].x;
    v(i, 1) = t.waypoints[i].y;
    v(i, 2) = t.waypoints[i].yaw;
  }
  return out;
}

world::Trajectory trajectory_from(const F64& a) {
  if (a.ndim() != 2 || a.shape(1) != 3) throw ContractViolation("trajectory must be an (N, 3) array of x, y, yaw");
  const auto v = a.unchecked<2>();
  world::Trajectory t;
  for (py::ssize_t i = 0; i < a.shape(0); ++i) t.waypoints.push_back({v(i, 0), v(i, 1), v(i, 2)});
  return t;
}

py::dict breakdown_dict(const world::RewardBreakdown& r) {
  py::dict d;
  d["nc"] = r.nc;
  d["dac"] = r.dac;
  d["ttc"] = r.ttc;
  d["comfort"] = r.comfort;
  d["ep"] = r.ep;
  d["pdms"] = r.pdms;
  return d;
}

rft::RewardSetup reward_setup(const harness::RunConfig& cfg) {
  return {harness::vocab_layout(cfg), harness::sequence_spec(cfg), harness::metric_config(cfg),
          cfg.get_double("rft.lambda_fmt")};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Core of the dynamics chain-of-thought driving stack (no neural modules).";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  // world
  py::enum_<world::ScenarioKind>(m, "ScenarioKind")
      .value("LeadVehicleStop", world::ScenarioKind::LeadVehicleStop)
      .value("LateralCutIn", world::ScenarioKind::LateralCutIn)
      .value("CurbAhead", world::ScenarioKind::CurbAhead)
      .value("OpenRoad", world::ScenarioKind::OpenRoad)
      .value("CrossingAgent", world::ScenarioKind::CrossingAgent);
  m.def("parse_scenario_kind", [](const std::string& s) { return world::parse_scenario_kind(s); });
  m.def("scenario_kind_name", [](world::ScenarioKind k) { return std::string(world::to_string(k)); });

  py::class_<world::WorldState>(m, "WorldState")
      .def_readonly("time_index", &world::WorldState::time_index)
      .def_readonly("dt", &world::WorldState::dt)
      .def_readonly("ego_speed", &world::WorldState::ego_speed)
      .def_readonly("kind", &world::WorldState::kind)
      .def_readonly("seed", &world::WorldState::seed)
      .def_property_readonly("ego_pose",
                             [](const world::WorldState& s) {
                               return py::make_tuple(s.ego_pose.x, s.ego_pose.y, s.ego_pose.yaw);
                             })
      .def_property_readonly("agent_count", [](const world::WorldState& s) { return s.agents.size(); });

  m.def("spawn_scenario", &world::spawn_scenario, py::arg("kind"), py::arg("seed"));
  m.def(
      "step_world",
      [](const world::WorldState& s, double dx, double dy, double dyaw) { return world::step_world(s, {dx, dy, dyaw}); },
      py::arg("state"), py::arg("dx"), py::arg("dy"), py::arg("dyaw"));
  m.def("make_static", &world::make_static);
  m.def("expert_trajectory", [](const world::WorldState& s) { return trajectory_array(world::expert_trajectory(s)); });

  m.def(
      "render_observation",
      [](const world::WorldState& s, int obs_size) {
        world::RenderConfig rc;
        rc.obs_size = obs_size;
        const auto o = world::render_observation(s, rc);
        py::array_t<float> out({o.height, o.width, o.channels});
        std::copy(o.data.begin(), o.data.end(), out.mutable_data());
        return out;
      },
      py::arg("state"), py::arg("obs_size") = 64);
  m.def(
      "render_bev",
      [](const world::WorldState& s, int obs_size, int bev_size) {
        world::RenderConfig rc;
        rc.obs_size = obs_size;
        rc.bev_size = bev_size;
        const auto b = world::render_bev(s, rc);
        py::array_t<std::uint8_t> out({b.height, b.width});
        std::copy(b.data.begin(), b.data.end(), out.mutable_data());
        return out;
      },
      py::arg("state"), py::arg("obs_size") = 64, py::arg("bev_size") = 32);

  // metrics
  m.def("compose_pdms", py::overload_cast<double, double, double, double, double>(&world::compose_pdms),
        py::arg("nc"), py::arg("dac"), py::arg("ttc"), py::arg("comfort"), py::arg("ep"));
  m.def(
      "score_plan",
      [](const F64& plan, const world::WorldState& s) {
        return breakdown_dict(rft::score_plan(trajectory_from(plan), rft::make_scenario_context(s)));
      },
      py::arg("plan"), py::arg("state"), "Closed-loop subscores of an ego-frame plan from `state`.");
  m.def("compute_ade", [](const F64& a, const F64& b) { return world::compute_ade(trajectory_from(a), trajectory_from(b)); });

  // action codec (default layout)
  m.def("encode_actions", [](const F64& traj) {
    const auto e = codec::encode_actions(trajectory_from(traj));
    return py::make_tuple(e.ids, e.clamped);
  });
  m.def("decode_actions", [](const std::vector<int>& ids) { return trajectory_array(codec::decode_actions(ids)); });
  m.def("quantization_bound", [] { return codec::quantization_bound(); });

  // quantizer search and codebook usage
  m.def(
      "nearest_codes",
      [](const F32& queries, const F32& codebook) {
        if (queries.ndim() != 2 || codebook.ndim() != 2 || queries.shape(1) != codebook.shape(1)) {
          throw ContractViolation("queries (n, d) and codebook (m, d) must share d");
        }
        const auto d = static_cast<int>(codebook.shape(1));
        return tokenizer::nearest_codes(std::span<const float>(queries.data(), static_cast<std::size_t>(queries.size())),
                                        std::span<const float>(codebook.data(), static_cast<std::size_t>(codebook.size())),
                                        d);
      },
      py::arg("queries"), py::arg("codebook"));
  py::class_<tokenizer::CodebookUsage>(m, "CodebookUsage")
      .def(py::init<int>(), py::arg("codes"))
      .def("record", [](tokenizer::CodebookUsage& u, const std::vector<int>& ids, std::int64_t step) { u.record(ids, step); })
      .def("count", &tokenizer::CodebookUsage::count)
      .def("activation", [](const tokenizer::CodebookUsage& u, std::int64_t w) { return tokenizer::codebook_activation(u, w); });

  // group math
  m.def("group_advantages", [](const std::vector<double>& r) { return rft::group_advantages(r); });
  m.def("clipped_token_term", &rft::clipped_token_term, py::arg("ratio"), py::arg("advantage"), py::arg("clip_eps"));
  m.def("categorical_kl", [](const std::vector<double>& p, const std::vector<double>& q) { return rft::categorical_kl(p, q); });

  // config, grammar and rewards
  py::class_<harness::RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("from_file", [](const std::string& p) { return harness::RunConfig::from_file(p); })
      .def("set", &harness::RunConfig::set)
      .def("get", &harness::RunConfig::raw)
      .def("apply_profile", &harness::RunConfig::apply_profile)
      .def("keys", &harness::RunConfig::keys)
      .def("echo", &harness::RunConfig::echo);
  m.def("count_reasoning_tokens",
        [](const std::string& variant, const harness::RunConfig& cfg) { return harness::count_reasoning_tokens(variant, cfg); });
  m.def("vocab_size", [](const harness::RunConfig& cfg) { return harness::vocab_layout(cfg).size(); });
  m.def("sequence_length", [](const harness::RunConfig& cfg) { return harness::sequence_spec(cfg).length(); });
  m.def(
      "format_violation",
      [](const std::vector<int>& tokens, const harness::RunConfig& cfg) -> std::optional<std::string> {
        const auto r = policy::parse_sequence(tokens, harness::vocab_layout(cfg), harness::sequence_spec(cfg));
        if (r.ok()) return std::nullopt;
        return r.violation->rule;
      },
      "None for a well-formed sequence, otherwise the broken rule.");
  m.def("format_reward", [](const std::vector<int>& tokens, const harness::RunConfig& cfg) {
    return rft::format_reward(tokens, reward_setup(cfg));
  });
  m.def(
      "build_sequence",
      [](const std::vector<int>& dynamics_ids, const std::vector<int>& action_ids, const harness::RunConfig& cfg) {
        const auto spec = harness::sequence_spec(cfg);
        policy::CotContent cot;
        cot.dynamics = {spec.horizon, spec.n_ego, spec.n_env, dynamics_ids};
        return policy::build_target_sequence(harness::vocab_layout(cfg), spec, cot, action_ids).tokens;
      },
      py::arg("dynamics_ids"), py::arg("action_ids"), py::arg("cfg"),
      "Marker-wrapped target from codebook-local dynamics ids (K x (n_ego + n_env)) and codec-local action ids.");
}
