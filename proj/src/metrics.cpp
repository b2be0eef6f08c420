#include "dgsm/metrics.hpp"

#include "dgsm/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace dgsm {

namespace {

void check_shapes(std::span<const Trajectory> predictions, std::span<const Trajectory> ground_truth) {
  if (predictions.empty()) throw Error(ErrorCode::Empty, "no samples to score");
  if (predictions.size() != ground_truth.size())
    throw Error(ErrorCode::ShapeMismatch, std::to_string(predictions.size()) + " predictions for " +
                                              std::to_string(ground_truth.size()) + " ground-truth trajectories");
  const Index steps = ground_truth.front().rows();
  if (steps < 1) throw Error(ErrorCode::Empty, "trajectories have no steps");
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i].rows() != steps || ground_truth[i].rows() != steps)
      throw Error(ErrorCode::ShapeMismatch, "sample " + std::to_string(i) + " has a different horizon");
  }
}

}  // namespace

double ade(std::span<const Trajectory> predictions, std::span<const Trajectory> ground_truth) {
  check_shapes(predictions, ground_truth);
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) total += (predictions[i] - ground_truth[i]).rowwise().norm().sum();
  return total / static_cast<double>(predictions.size() * static_cast<std::size_t>(ground_truth.front().rows()));
}

double fde(std::span<const Trajectory> predictions, std::span<const Trajectory> ground_truth) {
  check_shapes(predictions, ground_truth);
  const Index last = ground_truth.front().rows() - 1;
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) total += (predictions[i].row(last) - ground_truth[i].row(last)).norm();
  return total / static_cast<double>(predictions.size());
}

double average_error(std::span<const double> per_scenario) {
  if (per_scenario.empty()) throw Error(ErrorCode::Empty, "no scenarios to average");
  double total = 0.0;
  for (double v : per_scenario) total += v;
  return total / static_cast<double>(per_scenario.size());
}

const ScenarioError* EvalReport::find(int scenario_id) const {
  for (const auto& s : scenarios)
    if (s.scenario_id == scenario_id) return &s;
  return nullptr;
}

ScenarioError evaluate_scenario(const Predictor& predictor, const ParameterVector& theta, const ScenarioDataset& dataset) {
  const auto test = dataset.test_samples();
  if (test.empty()) throw Error(ErrorCode::Empty, "scenario " + dataset.name + " has an empty test split");
  std::vector<Trajectory> predicted, truth;
  predicted.reserve(test.size());
  truth.reserve(test.size());
  for (const auto& dist : predictor.forward(theta, test)) predicted.push_back(mean_trajectory(dist));
  for (const auto& s : test) truth.push_back(s.target_future);
  ScenarioError e;
  e.scenario_id = dataset.scenario_id;
  e.name = dataset.name;
  e.ade = ade(predicted, truth);
  e.fde = fde(predicted, truth);
  e.n_test = test.size();
  return e;
}

EvalReport evaluate(const Predictor& predictor, const ParameterVector& theta, std::span<const ScenarioDataset* const> datasets,
                    std::string mode, std::string checkpoint) {
  if (datasets.empty()) throw Error(ErrorCode::Empty, "no scenarios to evaluate");
  EvalReport r;
  r.mode = std::move(mode);
  r.checkpoint = std::move(checkpoint);
  r.learned = datasets.size();
  std::vector<double> a, f;
  for (const auto* d : datasets) {
    r.scenarios.push_back(evaluate_scenario(predictor, theta, *d));
    a.push_back(r.scenarios.back().ade);
    f.push_back(r.scenarios.back().fde);
  }
  r.average_ade = average_error(a);
  r.average_fde = average_error(f);
  return r;
}

ForgettingReport forgetting(std::span<const EvalReport> history) {
  if (history.empty()) throw Error(ErrorCode::MissingBaseline, "no evaluation history");
  ForgettingReport out;
  const auto& now = history.back();
  for (const auto& s : now.scenarios) {
    const ScenarioError* base = nullptr;
    for (const auto& r : history) {
      if ((base = r.find(s.scenario_id))) break;
    }
    if (!base) throw Error(ErrorCode::MissingBaseline, "scenario " + std::to_string(s.scenario_id) + " has no baseline");
    ForgettingEntry e;
    e.scenario_id = s.scenario_id;
    e.then_ade = base->ade;
    e.now_ade = s.ade;
    e.increment = s.ade - base->ade;
    e.percent = base->ade > 0.0 ? 100.0 * e.increment / base->ade : 0.0;
    e.then_fde = base->fde;
    e.now_fde = s.fde;
    e.fde_increment = s.fde - base->fde;
    out.entries.push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Time-to-conflict-point

namespace {

std::vector<double> arc_lengths(std::span<const PathState> path) {
  std::vector<double> s(path.size(), 0.0);
  for (std::size_t i = 1; i < path.size(); ++i) s[i] = s[i - 1] + (path[i].position - path[i - 1].position).norm();
  return s;
}

// Arc length of the point on the polyline closest to p, and that distance.
std::pair<double, double> locate(std::span<const PathState> path, const std::vector<double>& s, const Eigen::Vector2d& p) {
  double best_d = (path[0].position - p).norm();
  double best_s = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    const Eigen::Vector2d a = path[i - 1].position;
    const Eigen::Vector2d ab = path[i].position - a;
    const double len2 = ab.squaredNorm();
    const double u = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    const double d = (a + u * ab - p).norm();
    if (d < best_d) {
      best_d = d;
      best_s = s[i - 1] + u * std::sqrt(len2);
    }
  }
  return {best_s, best_d};
}

double speed_at(std::span<const PathState> path, std::size_t i) {
  if (path[i].velocity) return path[i].velocity->norm();
  if (path.size() < 2) return 0.0;
  const std::size_t a = i == 0 ? 0 : i - 1;
  const std::size_t b = i + 1 < path.size() ? i + 1 : i;
  const double dt = path[b].t - path[a].t;
  return dt > 0.0 ? (path[b].position - path[a].position).norm() / dt : 0.0;
}

}  // namespace

TtcpResult ttcp_min(std::span<const PathState> path_1, std::span<const PathState> path_2,
                    const Eigen::Vector2d& conflict_point, const TtcpWindow& window, const TtcpConfig& config) {
  if (path_1.empty() || path_2.empty()) throw Error(ErrorCode::NoConflict, "empty path");
  const auto s1 = arc_lengths(path_1);
  const auto s2 = arc_lengths(path_2);
  const auto [c1, d1] = locate(path_1, s1, conflict_point);
  const auto [c2, d2] = locate(path_2, s2, conflict_point);
  if (d1 > config.conflict_radius || d2 > config.conflict_radius)
    throw Error(ErrorCode::NoConflict, "paths do not reach the conflict point");

  TtcpResult res;
  res.value = std::numeric_limits<double>::infinity();
  constexpr double kTimeMatch = 1e-9;
  std::size_t j = 0;
  for (std::size_t i = 0; i < path_1.size(); ++i) {
    const double t = path_1[i].t;
    if (t < window.t_start - kTimeMatch) continue;
    if (t > window.t_end + kTimeMatch) break;
    while (j < path_2.size() && path_2[j].t < t - kTimeMatch) ++j;
    if (j >= path_2.size()) break;
    if (std::abs(path_2[j].t - t) > kTimeMatch) continue;
    const double l1 = c1 - s1[i];
    const double l2 = c2 - s2[j];
    if (l1 < 0.0 || l2 < 0.0) {
      res.window_closed = true;
      break;
    }
    const double v1 = speed_at(path_1, i);
    const double v2 = speed_at(path_2, j);
    if (v1 < config.min_speed || v2 < config.min_speed) continue;
    res.value = std::min(res.value, std::abs(l1 / v1 - l2 / v2));
    ++res.frames;
  }
  res.interaction = res.frames > 0 && res.value <= config.interaction_threshold;
  return res;
}

namespace {

std::vector<PathState> path_of(const Track& track) {
  std::vector<PathState> out;
  out.reserve(track.points.size());
  for (const auto& p : track.points) {
    PathState s;
    s.t = p.t;
    s.position = {p.x, p.y};
    if (p.vx && p.vy) s.velocity = Eigen::Vector2d(*p.vx, *p.vy);
    out.push_back(s);
  }
  return out;
}

std::vector<Eigen::Vector2d> polyline(const std::vector<PathState>& path, Index stride) {
  std::vector<Eigen::Vector2d> out;
  for (std::size_t i = 0; i < path.size(); i += static_cast<std::size_t>(stride)) out.push_back(path[i].position);
  if (!path.empty() && (path.size() - 1) % static_cast<std::size_t>(stride) != 0) out.push_back(path.back().position);
  return out;
}

double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

std::optional<Eigen::Vector2d> first_crossing(const std::vector<Eigen::Vector2d>& a, const std::vector<Eigen::Vector2d>& b,
                                              double min_angle) {
  const double min_sin = std::sin(min_angle);
  for (std::size_t i = 1; i < a.size(); ++i) {
    const Eigen::Vector2d p = a[i - 1];
    const Eigen::Vector2d r = a[i] - p;
    const double rn = r.norm();
    if (rn == 0.0) continue;
    for (std::size_t j = 1; j < b.size(); ++j) {
      const Eigen::Vector2d q = b[j - 1];
      const Eigen::Vector2d s = b[j] - q;
      const double sn = s.norm();
      if (sn == 0.0) continue;
      const double denom = cross(r, s);
      if (std::abs(denom) < min_sin * rn * sn) continue;
      const double t = cross(q - p, s) / denom;
      const double u = cross(q - p, r) / denom;
      if (t >= 0.0 && t <= 1.0 && u >= 0.0 && u <= 1.0) return Eigen::Vector2d(p + t * r);
    }
  }
  return std::nullopt;
}

}  // namespace

TtcpReport interaction_density(std::span<const Track> tracks, const TtcpConfig& config) {
  TtcpReport rep;
  rep.bin_edges = config.bin_edges;
  rep.histogram.assign(config.bin_edges.size(), 0);

  std::vector<std::vector<PathState>> paths;
  std::vector<std::vector<Eigen::Vector2d>> lines;
  std::vector<Eigen::AlignedBox2d> boxes;
  for (const auto& tr : tracks) {
    paths.push_back(path_of(tr));
    lines.push_back(polyline(paths.back(), std::max<Index>(config.path_stride, 1)));
    Eigen::AlignedBox2d box;
    for (const auto& p : lines.back()) box.extend(p);
    boxes.push_back(box);
  }
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    for (std::size_t j = i + 1; j < tracks.size(); ++j) {
      if (paths[i].empty() || paths[j].empty()) continue;
      if (paths[i].back().t < paths[j].front().t || paths[j].back().t < paths[i].front().t) continue;
      if (!boxes[i].intersects(boxes[j])) continue;
      const auto cp = first_crossing(lines[i], lines[j], config.min_crossing_angle);
      if (!cp) continue;
      TtcpResult r;
      try {
        r = ttcp_min(paths[i], paths[j], *cp, {}, config);
      } catch (const Error&) {
        continue;
      }
      if (r.frames == 0) continue;
      TtcpPair pair{tracks[i].id, tracks[j].id, *cp, r.value, r.window_closed};
      rep.pairs.push_back(pair);
      std::size_t bin = 0;
      while (bin + 1 < rep.bin_edges.size() && r.value >= rep.bin_edges[bin + 1]) ++bin;
      ++rep.histogram[bin];
      if (r.interaction) ++rep.interacting;
    }
  }
  rep.interaction_fraction =
      rep.pairs.empty() ? 0.0 : static_cast<double>(rep.interacting) / static_cast<double>(rep.pairs.size());
  return rep;
}

}  // namespace dgsm
