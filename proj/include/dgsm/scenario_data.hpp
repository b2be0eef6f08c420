#pragma once

#include "dgsm/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dgsm {

enum class AgentType { Car, Truck, Other };

std::string to_string(AgentType type);
AgentType agent_type_from_string(std::string_view name);

struct TrackPoint {
  std::int64_t track_id = 0;
  std::int64_t frame = 0;
  double t = 0.0;  // seconds
  double x = 0.0;
  double y = 0.0;
  std::optional<double> vx;
  std::optional<double> vy;
  AgentType agent_type = AgentType::Car;
};

struct Track {
  std::int64_t id = 0;
  AgentType agent_type = AgentType::Car;
  std::vector<TrackPoint> points;  // frames strictly increasing

  std::int64_t first_frame() const { return points.front().frame; }
  std::int64_t last_frame() const { return points.back().frame; }
};

struct ParseResult {
  std::vector<Track> tracks;  // ascending by id
  std::size_t rows = 0;
  std::size_t rejected_rows = 0;  // non-finite coordinates
};

/// Reads an INTERACTION-style CSV (header required, column order free).
/// Mandatory columns: track_id, frame_id, timestamp_ms, x, y.
ParseResult parse_tracks(std::istream& csv, double frame_rate);
ParseResult parse_tracks(const std::filesystem::path& csv_path, double frame_rate);

/// One prediction case: target and neighbour histories over the observation
/// horizon and the target's future over the prediction horizon.
struct TrajectorySample {
  Trajectory target_history;
  std::vector<std::optional<Trajectory>> neighbor_histories;  // nearest first; nullopt = absent slot
  Trajectory target_future;
  int scenario_id = 0;
  std::int64_t target_track_id = 0;
  std::int64_t last_observed_frame = 0;

  Index history_frames() const { return target_history.rows(); }
  Index future_frames() const { return target_future.rows(); }
  Index present_neighbors() const;
};

bool operator==(const TrajectorySample& a, const TrajectorySample& b);

struct WindowConfig {
  double history_seconds = 2.0;
  double future_seconds = 4.0;
  double frame_rate = 10.0;
  Index max_neighbors = 5;
  Index stride = 1;

  Index history_frames() const;
  Index future_frames() const;
  void validate() const;
};

struct SampleBuildResult {
  std::vector<TrajectorySample> samples;
  std::size_t skipped_windows = 0;
};

SampleBuildResult build_samples(std::span<const Track> tracks, const WindowConfig& config,
                                int scenario_id = 0);

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct ScenarioDataset {
  int scenario_id = 0;
  std::string name;
  double frame_rate = 10.0;
  std::vector<TrajectorySample> samples;
  std::vector<std::size_t> train, val, test;  // ascending, disjoint, covering
  std::uint64_t split_seed = 0;
  SplitRatios ratios;

  std::vector<TrajectorySample> train_samples() const { return gather(train); }
  std::vector<TrajectorySample> val_samples() const { return gather(val); }
  std::vector<TrajectorySample> test_samples() const { return gather(test); }

 private:
  std::vector<TrajectorySample> gather(const std::vector<std::size_t>& ids) const;
};

ScenarioDataset split_dataset(std::vector<TrajectorySample> samples, const SplitRatios& ratios,
                              std::uint64_t seed);

enum class ScenarioFamily { StraightFlow, Merge, Roundabout, IntersectionStop };

std::string to_string(ScenarioFamily family);
ScenarioFamily scenario_family_from_string(std::string_view name);

struct SyntheticScenarioSpec {
  ScenarioFamily family = ScenarioFamily::StraightFlow;
  Index n_vehicles = 40;
  std::array<double, 2> speed_range{8.0, 14.0};  // m/s
  double noise_std = 0.05;                       // m
  double radius = 30.0;                          // roundabout radius, m
  double merge_angle = 0.15;                     // ramp convergence angle, rad
  double duration = 60.0;                        // s
  double frame_rate = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Family-specific defaults for speed range and geometry.
SyntheticScenarioSpec default_spec(ScenarioFamily family, std::uint64_t seed = 0);

std::vector<Track> generate_synthetic_tracks(const SyntheticScenarioSpec& spec);

ScenarioDataset generate_synthetic(const SyntheticScenarioSpec& spec, const WindowConfig& window = {},
                                   const SplitRatios& ratios = {}, int scenario_id = 0);

}  // namespace dgsm
