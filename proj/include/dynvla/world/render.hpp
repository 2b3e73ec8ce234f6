#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dynvla/world/world.hpp"

namespace dynvla::world {

// BEV classes, in increasing draw priority.
enum BevClass : std::uint8_t {
  kBevBackground = 0,
  kBevDrivable = 1,
  kBevLaneMarking = 2,
  kBevAgent = 3,
  kBevEgo = 4,
};
inline constexpr int kBevClassCount = 5;

struct RenderConfig {
  int obs_size = 64;
  int channels = 3;
  double meters_per_pixel = 0.5;
  int bev_size = 32;

  // BEV shares the observation's metric extent.
  double bev_meters_per_cell() const { return obs_size * meters_per_pixel / bev_size; }
};

// Row-major H x W x C intensities in [0, 1].
// Channel 0: road (drivable 0.4, markings 1.0); 1: agents; 2: ego.
struct Observation {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  float at(int r, int c, int ch) const { return data[(static_cast<std::size_t>(r) * width + c) * channels + ch]; }
  friend bool operator==(const Observation&, const Observation&) = default;
};

struct BevMap {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;

  std::uint8_t at(int r, int c) const { return data[static_cast<std::size_t>(r) * width + c]; }
  friend bool operator==(const BevMap&, const BevMap&) = default;
};

// Grid geometry shared by both renderers. Up is the anchor heading; column
// index grows to the anchor's right.
struct GridMapping {
  Pose2 anchor;
  int size = 0;
  double meters_per_cell = 1.0;

  Vec2 cell_center_world(int row, int col) const;
  // Fractional (row, col) of a world point.
  Vec2 world_to_grid(Vec2 p) const;
};

// Ego-centred by default; `anchor` renders the state in another frame (the
// tokenizer renders the later frame of a pair in the earlier frame's anchor).
Observation render_observation(const WorldState& state, const RenderConfig& cfg = {},
                               std::optional<Pose2> anchor = std::nullopt);
BevMap render_bev(const WorldState& state, const RenderConfig& cfg = {},
                  std::optional<Pose2> anchor = std::nullopt);

// Centroid (row, col) of cells holding `cls`; nullopt if absent.
std::optional<Vec2> class_centroid(const BevMap& bev, std::uint8_t cls);

}  // namespace dynvla::world
