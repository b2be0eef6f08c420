#pragma once

#include "dgsm/predictor.hpp"
#include "dgsm/scenario_data.hpp"
#include "dgsm/types.hpp"

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dgsm {

// ---------------------------------------------------------------------------
// Displacement errors

/// Mean Euclidean displacement over every sample and step.
double ade(std::span<const Trajectory> predictions, std::span<const Trajectory> ground_truth);
/// Mean Euclidean displacement at the final step.
double fde(std::span<const Trajectory> predictions, std::span<const Trajectory> ground_truth);
double average_error(std::span<const double> per_scenario);

struct ScenarioError {
  int scenario_id = 0;
  std::string name;
  double ade = 0.0;
  double fde = 0.0;
  std::size_t n_test = 0;
};

struct EvalReport {
  std::string mode;
  std::string checkpoint;
  std::size_t learned = 0;  // scenarios learned when the report was taken
  std::vector<ScenarioError> scenarios;
  double average_ade = 0.0;
  double average_fde = 0.0;

  const ScenarioError* find(int scenario_id) const;
};

ScenarioError evaluate_scenario(const Predictor& predictor, const ParameterVector& theta, const ScenarioDataset& dataset);

/// Scores `theta` on the test split of every dataset and averages over them.
EvalReport evaluate(const Predictor& predictor, const ParameterVector& theta, std::span<const ScenarioDataset* const> datasets,
                    std::string mode = {}, std::string checkpoint = {});

struct ForgettingEntry {
  int scenario_id = 0;
  double then_ade = 0.0;
  double now_ade = 0.0;
  double increment = 0.0;  // now - then
  double percent = 0.0;    // 100 * increment / then
  double then_fde = 0.0;
  double now_fde = 0.0;
  double fde_increment = 0.0;
};

struct ForgettingReport {
  std::vector<ForgettingEntry> entries;
};

/// Baseline for each scenario in the final report is the earliest report
/// containing it (the evaluation right after it was learned).
ForgettingReport forgetting(std::span<const EvalReport> history);

// ---------------------------------------------------------------------------
// Time-to-conflict-point

struct PathState {
  double t = 0.0;
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  std::optional<Eigen::Vector2d> velocity;
};

struct TtcpWindow {
  double t_start = -std::numeric_limits<double>::infinity();
  double t_end = std::numeric_limits<double>::infinity();
};

struct TtcpConfig {
  double conflict_radius = 0.5;
  double min_speed = 0.1;          // frames slower than this are skipped
  double interaction_threshold = 3.0;
  Index path_stride = 5;           // polyline downsampling for crossing detection
  double min_crossing_angle = 0.26;  // rad; shallower crossings count as the same lane
  std::vector<double> bin_edges{0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 7.5, 10.0};
};

struct TtcpResult {
  double value = 0.0;
  bool interaction = false;
  Index frames = 0;
  bool window_closed = false;  // false when neither vehicle passed the conflict point
};

/// min over shared frames of |dl_1 / v_1 - dl_2 / v_2| with dl the remaining
/// path length to the conflict point.
TtcpResult ttcp_min(std::span<const PathState> path_1, std::span<const PathState> path_2,
                    const Eigen::Vector2d& conflict_point, const TtcpWindow& window = {}, const TtcpConfig& config = {});

struct TtcpPair {
  std::int64_t track_1 = 0;
  std::int64_t track_2 = 0;
  Eigen::Vector2d conflict_point = Eigen::Vector2d::Zero();
  double value = 0.0;
  bool window_closed = true;
};

struct TtcpReport {
  std::vector<TtcpPair> pairs;
  std::vector<double> bin_edges;       // last bin is open-ended
  std::vector<std::size_t> histogram;  // bin_edges.size() bins
  double interaction_fraction = 0.0;
  std::size_t interacting = 0;
};

TtcpReport interaction_density(std::span<const Track> tracks, const TtcpConfig& config = {});

}  // namespace dgsm
