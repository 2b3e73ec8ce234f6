#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dynvla/codec/action_codec.hpp"
#include "dynvla/common/error.hpp"
#include "dynvla/common/rng.hpp"

using namespace dynvla;
using namespace dynvla::codec;
using world::Pose2;
using world::Trajectory;

namespace {

// Textbook orthonormal DCT-II, written independently of the codec.
double dct_coeff(const std::vector<double>& x, int k) {
  const int n = static_cast<int>(x.size());
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += x[i] * std::cos(std::numbers::pi * (2 * i + 1) * k / (2.0 * n));
  return s * std::sqrt(2.0 / n) * (k == 0 ? 1.0 / std::sqrt(2.0) : 1.0);
}

double component(const Pose2& p, int d) { return d == 0 ? p.x : d == 1 ? p.y : p.yaw; }

Trajectory random_traj(Rng& rng) {
  Trajectory t;
  for (int i = 0; i < 8; ++i) t.waypoints.push_back({rng.uniform(0, 12), rng.uniform(-2, 2), rng.uniform(-0.2, 0.2)});
  return t;
}

}  // namespace

TEST_CASE("DCT pair is orthonormal and invertible") {
  Rng rng(1);
  std::vector<double> x(8);
  for (auto& v : x) v = rng.uniform(-3, 3);
  const auto c = dct_ii(x);
  for (int k = 0; k < 8; ++k) CHECK(c[k] == doctest::Approx(dct_coeff(x, k)).epsilon(1e-12));
  const auto back = dct_iii(c, 8);
  for (int i = 0; i < 8; ++i) CHECK(back[i] == doctest::Approx(x[i]).epsilon(1e-12));
  std::vector<double> constant(8, 2.5);
  const auto cc = dct_ii(constant);
  CHECK(cc[0] != 0.0);
  for (int k = 1; k < 8; ++k) CHECK(std::abs(cc[k]) < 1e-12);
}

TEST_CASE("id mapping is a bijection onto the used range") {
  ActionCodecConfig cfg;
  CHECK(cfg.sequence_length() == 12);
  CHECK(cfg.used_ids() <= cfg.vocab_budget);
  std::vector<int> seen(static_cast<std::size_t>(cfg.used_ids()), 0);
  for (int s = 0; s < cfg.sequence_length(); ++s) {
    for (int b = 0; b < cfg.bins; ++b) {
      const int id = action_id(cfg, s, b);
      REQUIRE(id >= 0);
      REQUIRE(id < cfg.used_ids());
      ++seen[static_cast<std::size_t>(id)];
      CHECK(slot_of(cfg, id) == s);
      CHECK(bin_of(cfg, id) == b);
    }
  }
  for (int v : seen) CHECK(v == 1);
  ActionCodecConfig big = cfg;
  big.bins = 200;
  CHECK_THROWS_AS(big.validate(), ConfigError);
}

TEST_CASE("zero trajectory encodes to the zero bin everywhere") {
  ActionCodecConfig cfg;
  Trajectory zero;
  zero.waypoints.assign(8, Pose2{});
  const auto enc = encode_actions(zero, cfg);
  for (int s = 0; s < 12; ++s) CHECK(enc.ids[s] == action_id(cfg, s, cfg.zero_bin()));
  const auto dec = decode_actions(enc.ids, cfg);
  for (const auto& w : dec.waypoints) CHECK((w.x == 0.0 && w.y == 0.0 && w.yaw == 0.0));
}

TEST_CASE("encoding matches an independent transform-and-round oracle") {
  ActionCodecConfig cfg;
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const auto t = random_traj(rng);
    const auto enc = encode_actions(t, cfg);
    int clamped = 0;
    for (int d = 0; d < 3; ++d) {
      std::vector<double> x;
      for (const auto& w : t.waypoints) x.push_back(component(w, d) / cfg.dim_scale[d]);
      for (int k = 0; k < cfg.kept; ++k) {
        long bin = std::lround(dct_coeff(x, k) / cfg.step) + cfg.zero_bin();
        if (bin < 0 || bin >= cfg.bins) ++clamped;
        bin = std::clamp<long>(bin, 0, cfg.bins - 1);
        CHECK(enc.ids[d * cfg.kept + k] == (d * cfg.kept + k) * cfg.bins + bin);
      }
    }
    CHECK(enc.clamped == clamped);
  }
}

TEST_CASE("round trips") {
  ActionCodecConfig cfg;
  SUBCASE("bin-centred trajectory in the kept subspace is exact") {
    Rng rng(3);
    std::vector<int> ids;
    for (int s = 0; s < 12; ++s) ids.push_back(action_id(cfg, s, cfg.zero_bin() + static_cast<int>(rng.below(21)) - 10));
    const auto t = decode_actions(ids, cfg);
    CHECK(encode_actions(t, cfg).ids == ids);
  }
  SUBCASE("smooth ramp stays inside the stated bound") {
    Trajectory ramp;
    for (int i = 1; i <= 8; ++i) ramp.waypoints.push_back({1.2 * i, 0.05 * i * i, 0.01 * i});
    const auto dec = decode_actions(encode_actions(ramp, cfg).ids, cfg);
    const auto q = quantization_bound(cfg);
    const auto r = truncation_residual(ramp, cfg);
    for (std::size_t i = 0; i < 8; ++i) {
      for (int d = 0; d < 3; ++d) {
        CHECK(std::abs(component(dec.waypoints[i], d) - component(ramp.waypoints[i], d)) <= q[d] + r[d] + 1e-12);
      }
    }
  }
}

TEST_CASE("decode rejects malformed spans") {
  ActionCodecConfig cfg;
  std::vector<int> ids(11, action_id(cfg, 0, 0));
  CHECK_THROWS_AS(decode_actions(ids, cfg), FormatError);
  std::vector<int> swapped;
  for (int s = 0; s < 12; ++s) swapped.push_back(action_id(cfg, s, 5));
  std::swap(swapped[0], swapped[1]);
  CHECK_THROWS_AS(decode_actions(swapped, cfg), FormatError);
}
