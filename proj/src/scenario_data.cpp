#include "dgsm/scenario_data.hpp"

#include "dgsm/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace dgsm {

namespace {

std::string trim(std::string_view s) {
  auto begin = s.find_first_not_of(" \t\r\n\"");
  if (begin == std::string_view::npos) return {};
  auto end = s.find_last_not_of(" \t\r\n\"");
  return std::string(s.substr(begin, end - begin + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      fields.push_back(trim(current));
      current.clear();
    } else {
      current.push_back(ch);
    }
  }
  fields.push_back(trim(current));
  return fields;
}

std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) return std::nullopt;
  return v;
}

std::optional<std::int64_t> parse_int(const std::string& s) {
  auto v = parse_double(s);
  if (!v || !std::isfinite(*v) || std::floor(*v) != *v) return std::nullopt;
  return static_cast<std::int64_t>(*v);
}

}  // namespace

std::string to_string(AgentType type) {
  switch (type) {
    case AgentType::Car: return "car";
    case AgentType::Truck: return "truck";
    case AgentType::Other: return "other";
  }
  return "other";
}

AgentType agent_type_from_string(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "car") return AgentType::Car;
  if (lower == "truck" || lower == "truck_bus" || lower == "bus") return AgentType::Truck;
  return AgentType::Other;
}

ParseResult parse_tracks(std::istream& csv, double frame_rate) {
  if (!(frame_rate > 0.0)) throw Error(ErrorCode::BadSpec, "frame_rate must be positive");

  std::string line;
  if (!std::getline(csv, line) || trim(line).empty()) throw Error(ErrorCode::EmptyFile, "no header row");

  const auto header = split_csv_line(line);
  std::unordered_map<std::string, std::size_t> column;
  for (std::size_t i = 0; i < header.size(); ++i) column[header[i]] = i;

  auto require = [&column](const std::string& name) {
    auto it = column.find(name);
    if (it == column.end()) throw Error(ErrorCode::MissingColumn, name);
    return it->second;
  };
  const auto c_track = require("track_id");
  const auto c_frame = require("frame_id");
  const auto c_time = require("timestamp_ms");
  const auto c_x = require("x");
  const auto c_y = require("y");
  auto optional_column = [&column](const std::string& name) -> std::optional<std::size_t> {
    auto it = column.find(name);
    if (it == column.end()) return std::nullopt;
    return it->second;
  };
  const auto c_type = optional_column("agent_type");
  const auto c_vx = optional_column("vx");
  const auto c_vy = optional_column("vy");

  ParseResult result;
  std::map<std::int64_t, Track> grouped;
  std::size_t line_no = 1;
  while (std::getline(csv, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ++result.rows;
    const auto fields = split_csv_line(line);
    auto field = [&fields](std::size_t i) -> const std::string& {
      static const std::string empty;
      return i < fields.size() ? fields[i] : empty;
    };

    const auto track_id = parse_int(field(c_track));
    const auto frame = parse_int(field(c_frame));
    const auto stamp = parse_double(field(c_time));
    if (!track_id || !frame || !stamp) {
      throw Error(ErrorCode::BadSpec, "malformed identifier or timestamp on line " + std::to_string(line_no));
    }
    const auto x = parse_double(field(c_x));
    const auto y = parse_double(field(c_y));
    if (!x || !y || !std::isfinite(*x) || !std::isfinite(*y)) {
      ++result.rejected_rows;
      continue;
    }

    TrackPoint p;
    p.track_id = *track_id;
    p.frame = *frame;
    p.t = *stamp / 1000.0;
    p.x = *x;
    p.y = *y;
    if (c_vx) p.vx = parse_double(field(*c_vx));
    if (c_vy) p.vy = parse_double(field(*c_vy));
    if (c_type) p.agent_type = agent_type_from_string(field(*c_type));

    auto& track = grouped[p.track_id];
    if (track.points.empty()) {
      track.id = p.track_id;
      track.agent_type = p.agent_type;
    }
    track.points.push_back(p);
  }
  if (result.rows == 0) throw Error(ErrorCode::EmptyFile, "header present but no data rows");

  const double spacing = 1.0 / frame_rate;
  for (auto& [id, track] : grouped) {
    std::sort(track.points.begin(), track.points.end(),
              [](const TrackPoint& a, const TrackPoint& b) { return a.frame < b.frame; });
    for (std::size_t i = 1; i < track.points.size(); ++i) {
      const auto& prev = track.points[i - 1];
      const auto& cur = track.points[i];
      if (cur.frame <= prev.frame) {
        throw Error(ErrorCode::NonMonotonicFrames, "track_id " + std::to_string(id));
      }
      // timestamps carry millisecond resolution
      const double expected = static_cast<double>(cur.frame - prev.frame) * spacing;
      if (std::abs((cur.t - prev.t) - expected) > 1e-3) {
        throw Error(ErrorCode::NonMonotonicFrames,
                    "track_id " + std::to_string(id) + " timestamps disagree with frame rate");
      }
    }
    result.tracks.push_back(std::move(track));
  }
  return result;
}

ParseResult parse_tracks(const std::filesystem::path& csv_path, double frame_rate) {
  std::ifstream in(csv_path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + csv_path.string());
  return parse_tracks(in, frame_rate);
}

Index TrajectorySample::present_neighbors() const {
  return std::count_if(neighbor_histories.begin(), neighbor_histories.end(),
                       [](const auto& n) { return n.has_value(); });
}

bool operator==(const TrajectorySample& a, const TrajectorySample& b) {
  if (a.scenario_id != b.scenario_id || a.target_track_id != b.target_track_id ||
      a.last_observed_frame != b.last_observed_frame)
    return false;
  if (a.target_history.rows() != b.target_history.rows() || a.target_history != b.target_history) return false;
  if (a.target_future.rows() != b.target_future.rows() || a.target_future != b.target_future) return false;
  if (a.neighbor_histories.size() != b.neighbor_histories.size()) return false;
  for (std::size_t i = 0; i < a.neighbor_histories.size(); ++i) {
    const auto& na = a.neighbor_histories[i];
    const auto& nb = b.neighbor_histories[i];
    if (na.has_value() != nb.has_value()) return false;
    if (na && (na->rows() != nb->rows() || *na != *nb)) return false;
  }
  return true;
}

Index WindowConfig::history_frames() const { return static_cast<Index>(std::lround(history_seconds * frame_rate)); }
Index WindowConfig::future_frames() const { return static_cast<Index>(std::lround(future_seconds * frame_rate)); }

void WindowConfig::validate() const {
  if (!(history_seconds > 0.0) || !(future_seconds > 0.0) || !(frame_rate > 0.0))
    throw Error(ErrorCode::BadSpec, "window horizons and frame rate must be positive");
  if (history_frames() < 1 || future_frames() < 1)
    throw Error(ErrorCode::BadSpec, "window horizons shorter than one frame");
  if (max_neighbors < 0 || stride < 1) throw Error(ErrorCode::BadSpec, "max_neighbors >= 0 and stride >= 1 required");
}

namespace {

// Frame lookup for one track; contiguous when index distance equals frame distance.
struct TrackIndex {
  const Track* track = nullptr;
  std::unordered_map<std::int64_t, std::size_t> by_frame;

  std::optional<std::size_t> at(std::int64_t frame) const {
    auto it = by_frame.find(frame);
    if (it == by_frame.end()) return std::nullopt;
    return it->second;
  }

  // Row block [first, first+count) when the track covers every frame in it.
  std::optional<std::size_t> contiguous(std::int64_t first, Index count) const {
    auto a = at(first);
    auto b = at(first + count - 1);
    if (!a || !b || static_cast<Index>(*b - *a) != count - 1) return std::nullopt;
    return a;
  }

  Trajectory slice(std::size_t start, Index count) const {
    Trajectory out(count, 2);
    for (Index i = 0; i < count; ++i) {
      const auto& p = track->points[start + static_cast<std::size_t>(i)];
      out(i, 0) = p.x;
      out(i, 1) = p.y;
    }
    return out;
  }
};

}  // namespace

SampleBuildResult build_samples(std::span<const Track> tracks, const WindowConfig& config, int scenario_id) {
  config.validate();
  const Index h = config.history_frames();
  const Index f = config.future_frames();
  const Index span_frames = h + f;

  std::vector<const Track*> ordered;
  for (const auto& t : tracks) ordered.push_back(&t);
  std::sort(ordered.begin(), ordered.end(), [](const Track* a, const Track* b) { return a->id < b->id; });

  std::vector<TrackIndex> index(ordered.size());
  std::map<std::int64_t, std::vector<std::size_t>> tracks_at_frame;
  for (std::size_t i = 0; i < ordered.size(); ++i) {
    index[i].track = ordered[i];
    for (std::size_t j = 0; j < ordered[i]->points.size(); ++j) {
      index[i].by_frame[ordered[i]->points[j].frame] = j;
      tracks_at_frame[ordered[i]->points[j].frame].push_back(i);
    }
  }

  SampleBuildResult result;
  for (std::size_t ti = 0; ti < ordered.size(); ++ti) {
    const Track& target = *ordered[ti];
    if (target.points.empty()) continue;
    const auto first = target.first_frame();
    const auto last = target.last_frame();
    if (last - first + 1 < span_frames) {
      ++result.skipped_windows;
      continue;
    }
    for (auto start = first; start + span_frames - 1 <= last; start += config.stride) {
      auto row = index[ti].contiguous(start, span_frames);
      if (!row) {
        ++result.skipped_windows;
        continue;
      }
      TrajectorySample sample;
      sample.scenario_id = scenario_id;
      sample.target_track_id = target.id;
      sample.last_observed_frame = start + h - 1;
      sample.target_history = index[ti].slice(*row, h);
      sample.target_future = index[ti].slice(*row + static_cast<std::size_t>(h), f);

      const Eigen::RowVector2d anchor = sample.target_history.row(h - 1);
      struct Candidate {
        double distance;
        std::int64_t id;
        std::size_t track;
        std::size_t row;
      };
      std::vector<Candidate> candidates;
      for (std::size_t ni : tracks_at_frame[sample.last_observed_frame]) {
        if (ni == ti) continue;
        auto nrow = index[ni].contiguous(start, h);
        if (!nrow) continue;
        const auto& p = ordered[ni]->points[*nrow + static_cast<std::size_t>(h - 1)];
        const double d = std::hypot(p.x - anchor(0), p.y - anchor(1));
        candidates.push_back({d, ordered[ni]->id, ni, *nrow});
      }
      const auto keep = std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(config.max_neighbors));
      std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                        [](const Candidate& a, const Candidate& b) {
                          return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
                        });
      sample.neighbor_histories.assign(static_cast<std::size_t>(config.max_neighbors), std::nullopt);
      for (std::size_t k = 0; k < keep; ++k) {
        sample.neighbor_histories[k] = index[candidates[k].track].slice(candidates[k].row, h);
      }
      result.samples.push_back(std::move(sample));
    }
  }
  return result;
}

std::vector<TrajectorySample> ScenarioDataset::gather(const std::vector<std::size_t>& ids) const {
  std::vector<TrajectorySample> out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(samples.at(i));
  return out;
}

ScenarioDataset split_dataset(std::vector<TrajectorySample> samples, const SplitRatios& ratios, std::uint64_t seed) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (ratios.train < 0.0 || ratios.val < 0.0 || ratios.test < 0.0 || std::abs(sum - 1.0) > 1e-9)
    throw Error(ErrorCode::BadRatios, "ratios must be nonnegative and sum to 1");

  const std::size_t n = samples.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_rng(seed, {0x5917u});
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_train = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(n)));
  const auto n_train_val = std::min(
      n, static_cast<std::size_t>(std::llround((ratios.train + ratios.val) * static_cast<double>(n))));

  ScenarioDataset ds;
  ds.split_seed = seed;
  ds.ratios = ratios;
  ds.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(std::min(n_train, n)));
  ds.val.assign(order.begin() + static_cast<std::ptrdiff_t>(std::min(n_train, n)),
                order.begin() + static_cast<std::ptrdiff_t>(n_train_val));
  ds.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train_val), order.end());
  std::sort(ds.train.begin(), ds.train.end());
  std::sort(ds.val.begin(), ds.val.end());
  std::sort(ds.test.begin(), ds.test.end());
  if (!samples.empty()) ds.scenario_id = samples.front().scenario_id;
  ds.samples = std::move(samples);
  return ds;
}

std::string to_string(ScenarioFamily family) {
  switch (family) {
    case ScenarioFamily::StraightFlow: return "straight_flow";
    case ScenarioFamily::Merge: return "merge";
    case ScenarioFamily::Roundabout: return "roundabout";
    case ScenarioFamily::IntersectionStop: return "intersection_stop";
  }
  return "straight_flow";
}

ScenarioFamily scenario_family_from_string(std::string_view name) {
  if (name == "straight_flow") return ScenarioFamily::StraightFlow;
  if (name == "merge") return ScenarioFamily::Merge;
  if (name == "roundabout") return ScenarioFamily::Roundabout;
  if (name == "intersection_stop") return ScenarioFamily::IntersectionStop;
  throw Error(ErrorCode::BadSpec, "unknown scenario family '" + std::string(name) + "'");
}

void SyntheticScenarioSpec::validate() const {
  if (n_vehicles < 1) throw Error(ErrorCode::BadSpec, "n_vehicles must be >= 1");
  if (!(speed_range[0] > 0.0) || !(speed_range[1] >= speed_range[0]) || !std::isfinite(speed_range[1]))
    throw Error(ErrorCode::BadSpec, "speed_range must satisfy 0 < min <= max");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) throw Error(ErrorCode::BadSpec, "noise_std must be >= 0");
  if (!(radius > 0.0)) throw Error(ErrorCode::BadSpec, "radius must be positive");
  if (!(merge_angle > 0.0) || !(merge_angle < std::numbers::pi / 2)) throw Error(ErrorCode::BadSpec, "merge_angle must lie in (0, pi/2)");
  if (!(duration > 0.0) || !(frame_rate > 0.0)) throw Error(ErrorCode::BadSpec, "duration and frame_rate must be positive");
}

SyntheticScenarioSpec default_spec(ScenarioFamily family, std::uint64_t seed) {
  SyntheticScenarioSpec spec;
  spec.family = family;
  spec.seed = seed;
  switch (family) {
    case ScenarioFamily::StraightFlow: spec.speed_range = {8.0, 14.0}; break;
    case ScenarioFamily::Merge: spec.speed_range = {7.0, 12.0}; break;
    case ScenarioFamily::Roundabout: spec.speed_range = {5.0, 9.0}; break;
    case ScenarioFamily::IntersectionStop: spec.speed_range = {6.0, 10.0}; break;
  }
  return spec;
}

namespace {

using Path = std::vector<Eigen::Vector2d>;

constexpr double kLaneWidth = 3.5;

Path straight_path(double speed, Index lane, double dt) {
  const double length = 150.0;
  Path out;
  for (Index k = 0;; ++k) {
    const double x = speed * static_cast<double>(k) * dt;
    if (x > length) break;
    out.emplace_back(x, kLaneWidth * static_cast<double>(lane));
  }
  return out;
}

Path merge_path(double speed, bool ramp, Index lane, double angle, double dt) {
  const double length = 160.0;
  const double merge_x = 80.0;
  const double offset = merge_x * std::tan(angle);
  Path out;
  double x = 0.0;
  double v = ramp ? 0.7 * speed : speed;
  const double accel = 1.0;
  while (x <= length) {
    double y = kLaneWidth * static_cast<double>(lane);
    if (ramp) {
      const double u = std::clamp(x / merge_x, 0.0, 1.0);
      const double smooth = u * u * (3.0 - 2.0 * u);
      y = -offset * (1.0 - smooth);
    }
    out.emplace_back(x, y);
    x += v * dt;
    if (ramp) v = std::min(speed, v + accel * dt);
  }
  return out;
}

Path roundabout_path(double speed, double radius, double theta0, double sweep, double dt) {
  Path out;
  const double omega = speed / radius;
  for (Index k = 0;; ++k) {
    const double swept = omega * static_cast<double>(k) * dt;
    if (swept > sweep) break;
    const double th = theta0 + swept;
    out.emplace_back(radius * std::cos(th), radius * std::sin(th));
  }
  return out;
}

Path intersection_path(double speed, int approach, double wait, double dt) {
  static const std::array<Eigen::Vector2d, 4> dirs{Eigen::Vector2d(1, 0), Eigen::Vector2d(-1, 0),
                                                   Eigen::Vector2d(0, 1), Eigen::Vector2d(0, -1)};
  const Eigen::Vector2d u = dirs[static_cast<std::size_t>(approach)];
  const Eigen::Vector2d right(u.y(), -u.x());
  const Eigen::Vector2d origin = -60.0 * u + 0.5 * kLaneWidth * right;
  const double stop_s = 52.0;
  const double end_s = 120.0;
  const double brake = 3.0;
  const double accel = 2.0;

  enum class Phase { Cruise, Brake, Wait, Go } phase = Phase::Cruise;
  double s = 0.0;
  double v = speed;
  double waited = 0.0;
  Path out;
  while (s <= end_s) {
    out.push_back(origin + s * u);
    switch (phase) {
      case Phase::Cruise: {
        const double remaining = stop_s - s;
        if (remaining <= v * v / (2.0 * brake)) phase = Phase::Brake;
        s += v * dt;
        break;
      }
      case Phase::Brake: {
        const double remaining = stop_s - s;
        if (remaining <= 0.05 || v <= 0.05) {
          if (remaining <= 0.05) s = stop_s;
          v = 0.0;
          phase = Phase::Wait;
          break;
        }
        const double a = v * v / (2.0 * remaining);
        v = std::max(0.0, v - a * dt);
        s += v * dt;
        break;
      }
      case Phase::Wait:
        waited += dt;
        if (waited >= wait) phase = Phase::Go;
        break;
      case Phase::Go:
        v = std::min(speed, v + accel * dt);
        s += v * dt;
        break;
    }
  }
  return out;
}

}  // namespace

std::vector<Track> generate_synthetic_tracks(const SyntheticScenarioSpec& spec) {
  spec.validate();
  auto rng = make_rng(spec.seed, {0x51u, static_cast<std::uint64_t>(spec.family)});
  std::uniform_real_distribution<double> speed_dist(spec.speed_range[0], spec.speed_range[1]);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  const double dt = 1.0 / spec.frame_rate;
  const auto total_frames = static_cast<std::int64_t>(std::floor(spec.duration * spec.frame_rate));
  const auto spawn_limit = std::max<std::int64_t>(1, static_cast<std::int64_t>(0.6 * static_cast<double>(total_frames)));

  std::vector<Track> tracks;
  for (Index i = 0; i < spec.n_vehicles; ++i) {
    const double speed = speed_dist(rng);
    const auto spawn = static_cast<std::int64_t>(unit(rng) * static_cast<double>(spawn_limit));
    const bool truck = unit(rng) < 0.1;

    Path path;
    switch (spec.family) {
      case ScenarioFamily::StraightFlow:
        path = straight_path(speed, static_cast<Index>(unit(rng) * 3.0), dt);
        break;
      case ScenarioFamily::Merge: {
        const bool ramp = unit(rng) < 0.5;
        path = merge_path(speed, ramp, static_cast<Index>(unit(rng) * 2.0), spec.merge_angle, dt);
        break;
      }
      case ScenarioFamily::Roundabout: {
        const double theta0 = unit(rng) * 2.0 * std::numbers::pi;
        const double sweep = std::numbers::pi * (1.0 + unit(rng));
        path = roundabout_path(speed, spec.radius, theta0, sweep, dt);
        break;
      }
      case ScenarioFamily::IntersectionStop: {
        const int approach = static_cast<int>(unit(rng) * 4.0) % 4;
        const double wait = 1.0 + 2.0 * unit(rng);
        path = intersection_path(speed, approach, wait, dt);
        break;
      }
    }

    Track track;
    track.id = static_cast<std::int64_t>(i + 1);
    track.agent_type = truck ? AgentType::Truck : AgentType::Car;
    const auto n = std::min<std::int64_t>(static_cast<std::int64_t>(path.size()), total_frames - spawn);
    for (std::int64_t k = 0; k < n; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      TrackPoint p;
      p.track_id = track.id;
      p.frame = spawn + k;
      p.t = static_cast<double>(p.frame) * dt;
      const double nx = noise(rng);
      const double ny = noise(rng);
      p.x = path[ku].x() + spec.noise_std * nx;
      p.y = path[ku].y() + spec.noise_std * ny;
      const auto prev = ku == 0 ? ku : ku - 1;
      const auto next = ku + 1 < path.size() ? ku + 1 : ku;
      if (next != prev) {
        const Eigen::Vector2d vel = (path[next] - path[prev]) / (static_cast<double>(next - prev) * dt);
        p.vx = vel.x();
        p.vy = vel.y();
      }
      p.agent_type = track.agent_type;
      track.points.push_back(p);
    }
    if (!track.points.empty()) tracks.push_back(std::move(track));
  }
  return tracks;
}

ScenarioDataset generate_synthetic(const SyntheticScenarioSpec& spec, const WindowConfig& window,
                                   const SplitRatios& ratios, int scenario_id) {
  const auto tracks = generate_synthetic_tracks(spec);
  WindowConfig w = window;
  w.frame_rate = spec.frame_rate;
  auto built = build_samples(tracks, w, scenario_id);
  auto ds = split_dataset(std::move(built.samples), ratios, spec.seed);
  ds.scenario_id = scenario_id;
  ds.name = to_string(spec.family);
  ds.frame_rate = spec.frame_rate;
  return ds;
}

}  // namespace dgsm
