#pragma once

// Synthetic scene generation, the scene file format and normalization ranges.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "trajsens/core.hpp"

namespace trajsens {

/// Two-vehicle car-following scenario: a lead vehicle (the prediction target)
/// ahead of a follower on a straight or gently curving lane.
struct ScenarioConfig {
  int history_steps = 4;  // history holds history_steps + 1 states, current last
  int horizon = 4;        // future steps in ground_truth
  double dt = 0.5;
  double lead_speed = 10.0;   // m/s
  double speed_jitter = 0.0;  // lead speed ~ U(lead_speed +- jitter), clamped at 0
  double gap = 20.0;          // m, along the lane at the current step
  double lane_heading = 0.0;
  bool random_heading = false;
  double max_turn_rate = 0.0;  // rad/s; curving scenes draw a rate in +-max
  double stop_probability = 0.0;
  double position_noise = 0.02;
  double velocity_noise = 0.05;
  double future_noise = 0.05;
  double origin_spread = 0.0;  // follower current position ~ U(+-spread) per axis
  int image_size = 16;
  int image_channels = 3;
  double min_edge_weight = 1.0;
  double max_edge_weight = 9.0;
};

/// Throws ValidationError for non-positive dt, history_steps < 1, etc.
void validate(const ScenarioConfig& config);

/// Pure function of (seed, config).
SceneInput generate_scene(std::uint64_t seed, const ScenarioConfig& config);

/// Scene i of a generated dataset uses derive_seed(seed, "scene", i).
std::vector<SceneInput> generate_dataset(std::uint64_t seed, int count,
                                         const ScenarioConfig& config);

SceneInput parse_scene(const std::string& text);
std::string serialize_scene(const SceneInput& scene);
SceneInput load_scene(const std::filesystem::path& path);
void save_scene(const SceneInput& scene, const std::filesystem::path& path);
/// Loads every *.json scene in a directory, sorted by file name.
std::vector<SceneInput> load_scene_directory(const std::filesystem::path& dir);

inline constexpr int kQuantityCount = 11;

/// Normalization range per Quantity. Zero ranges are flagged degenerate.
struct Ranges {
  std::array<double, kQuantityCount> range{};
  std::array<bool, kQuantityCount> degenerate{};

  double of(Quantity q) const { return range[static_cast<std::size_t>(q)]; }
  bool is_degenerate(Quantity q) const { return degenerate[static_cast<std::size_t>(q)]; }
};

enum class RangeSource { Dataset, Fixed };

/// Fixed ranges: 80 m, 30 m/s, 35 m/s^2, 7 rad, 5 rad/s, 1 image unit,
/// 10 weight units; node presence always uses 1.
Ranges fixed_ranges();

/// max - min per quantity over every agent history, pixel and edge weight of
/// the dataset (or fixed_ranges() when source is Fixed).
Ranges compute_ranges(std::span<const SceneInput> dataset, RangeSource source = RangeSource::Dataset);

}  // namespace trajsens
