#include "dgsm/error.hpp"
#include "dgsm/scenario_data.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>

using namespace dgsm;

namespace {

std::string csv_row(std::int64_t id, std::int64_t frame, double x, double y) {
  std::ostringstream os;
  os.precision(17);
  os << id << ',' << frame << ',' << frame * 100 << ",car," << x << ',' << y << '\n';
  return os.str();
}

const char* kHeader = "track_id,frame_id,timestamp_ms,agent_type,x,y\n";

Track line_track(std::int64_t id, std::int64_t first, std::int64_t count, double x0, double y0, double vx, double vy) {
  Track t;
  t.id = id;
  for (std::int64_t k = 0; k < count; ++k) {
    TrackPoint p;
    p.track_id = id;
    p.frame = first + k;
    p.t = static_cast<double>(p.frame) * 0.1;
    p.x = x0 + vx * static_cast<double>(k) * 0.1;
    p.y = y0 + vy * static_cast<double>(k) * 0.1;
    t.points.push_back(p);
  }
  return t;
}

}  // namespace

TEST_CASE("parse_tracks reads a well formed file") {
  std::istringstream in(std::string(kHeader) + csv_row(1, 0, 0, 0) + csv_row(1, 1, 1, 0) + csv_row(1, 2, 2, 0));
  const auto r = parse_tracks(in, 10.0);
  REQUIRE(r.tracks.size() == 1);
  CHECK(r.tracks[0].points.size() == 3);
  CHECK(r.tracks[0].points[2].x == 2.0);
  CHECK(r.tracks[0].points[1].t == doctest::Approx(0.1));
}

TEST_CASE("parse_tracks names the missing column") {
  std::istringstream in("track_id,frame_id,timestamp_ms,y\n1,0,0,0\n");
  try {
    parse_tracks(in, 10.0);
    FAIL("expected MissingColumn");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingColumn);
    CHECK(e.detail() == "x");
  }
}

TEST_CASE("parse_tracks rejects empty input and duplicate frames") {
  std::istringstream empty("");
  CHECK_THROWS_AS(parse_tracks(empty, 10.0), Error);
  std::istringstream header_only(kHeader);
  try {
    parse_tracks(header_only, 10.0);
    FAIL("expected EmptyFile");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyFile);
  }
  std::istringstream dup(std::string(kHeader) + csv_row(7, 0, 0, 0) + csv_row(7, 0, 1, 0));
  try {
    parse_tracks(dup, 10.0);
    FAIL("expected NonMonotonicFrames");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonMonotonicFrames);
    CHECK(e.detail().find("7") != std::string::npos);
  }
}

TEST_CASE("parse_tracks drops rows with non-finite coordinates") {
  std::istringstream in(std::string(kHeader) + csv_row(1, 0, 0, 0) + "1,1,100,car,nan,0\n" + csv_row(1, 2, 2, 0));
  const auto r = parse_tracks(in, 10.0);
  CHECK(r.rejected_rows == 1);
  CHECK(r.tracks[0].points.size() == 2);
}

TEST_CASE("parse_tracks matches a sort-then-group oracle regardless of row order") {
  std::vector<std::string> rows;
  std::map<std::int64_t, std::vector<std::pair<std::int64_t, double>>> expected;
  for (std::int64_t id : {3, 11}) {
    for (std::int64_t f = 0; f < 25; ++f) {
      const double x = static_cast<double>(id * 100 + f);
      rows.push_back(csv_row(id, f + id, x, -x));
      expected[id].push_back({f + id, x});
    }
  }
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(rows.begin(), rows.end(), rng);
    std::string text = kHeader;
    for (const auto& r : rows) text += r;
    std::istringstream in(text);
    const auto parsed = parse_tracks(in, 10.0);
    REQUIRE(parsed.tracks.size() == 2);
    for (const auto& t : parsed.tracks) {
      auto want = expected.at(t.id);
      std::sort(want.begin(), want.end());
      REQUIRE(t.points.size() == want.size());
      for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(t.points[i].frame == want[i].first);
        CHECK(t.points[i].x == want[i].second);
      }
    }
  }
}

TEST_CASE("build_samples window lengths at 10 Hz") {
  WindowConfig w;
  CHECK(w.history_frames() == 20);
  CHECK(w.future_frames() == 40);
  std::vector<Track> tracks{line_track(1, 0, 80, 0, 0, 10, 0)};
  const auto r = build_samples(tracks, w);
  REQUIRE(!r.samples.empty());
  CHECK(r.samples.size() == 80 - 60 + 1);
  for (const auto& s : r.samples) {
    CHECK(s.target_history.rows() == 20);
    CHECK(s.target_future.rows() == 40);
    CHECK(s.present_neighbors() == 0);
    CHECK(s.neighbor_histories.size() == 5);
  }
}

TEST_CASE("build_samples history and future are contiguous and disjoint") {
  WindowConfig w;
  w.stride = 3;
  std::vector<Track> tracks{line_track(1, 0, 90, 0, 0, 1, 0)};
  for (const auto& s : build_samples(tracks, w).samples) {
    // x advances 0.1 m per frame on this track
    const double last_hist = s.target_history(19, 0);
    CHECK(s.target_future(0, 0) == doctest::Approx(last_hist + 0.1));
    CHECK(last_hist == doctest::Approx(0.1 * static_cast<double>(s.last_observed_frame)));
  }
}

TEST_CASE("build_samples keeps the nearest neighbours by exhaustive search") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> pos(-40.0, 40.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Track> tracks{line_track(1, 0, 60, 0, 0, 5, 0)};
    for (std::int64_t id = 2; id <= 8; ++id) tracks.push_back(line_track(id, 0, 60, pos(rng), pos(rng), 5, 1));
    WindowConfig w;
    const auto r = build_samples(tracks, w);
    const auto& s = r.samples.front();
    REQUIRE(s.target_track_id == 1);
    const Eigen::RowVector2d anchor = s.target_history.row(19);
    std::vector<std::pair<double, std::int64_t>> all;
    for (std::size_t i = 1; i < tracks.size(); ++i) {
      const auto& p = tracks[i].points[19];
      all.push_back({std::hypot(p.x - anchor(0), p.y - anchor(1)), tracks[i].id});
    }
    std::sort(all.begin(), all.end());
    REQUIRE(s.present_neighbors() == 5);
    for (std::size_t k = 0; k < 5; ++k) {
      const auto& expected = tracks[static_cast<std::size_t>(all[k].second - 1)];
      CHECK((*s.neighbor_histories[k])(19, 0) == expected.points[19].x);
      CHECK((*s.neighbor_histories[k])(0, 1) == expected.points[0].y);
    }
  }
}

TEST_CASE("build_samples is invariant to row order of the raw file") {
  const auto tracks = generate_synthetic_tracks(default_spec(ScenarioFamily::Merge, 4));
  std::ostringstream text;
  text.precision(17);
  std::vector<std::string> rows;
  for (const auto& t : tracks)
    for (const auto& p : t.points) rows.push_back(csv_row(t.id, p.frame, p.x, p.y));
  auto parse_rows = [&](const std::vector<std::string>& rs) {
    std::string s = kHeader;
    for (const auto& r : rs) s += r;
    std::istringstream in(s);
    return parse_tracks(in, 10.0).tracks;
  };
  WindowConfig w;
  w.stride = 7;
  const auto a = build_samples(parse_rows(rows), w).samples;
  std::mt19937_64 rng(2);
  std::shuffle(rows.begin(), rows.end(), rng);
  const auto b = build_samples(parse_rows(rows), w).samples;
  REQUIRE(a.size() == b.size());
  REQUIRE(!a.empty());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("split_dataset sizes, coverage and determinism") {
  std::vector<TrajectorySample> samples(10);
  const auto ds = split_dataset(samples, {0.7, 0.1, 0.2}, 3);
  CHECK(ds.train.size() == 7);
  CHECK(ds.val.size() == 1);
  CHECK(ds.test.size() == 2);
  std::set<std::size_t> all;
  for (const auto* part : {&ds.train, &ds.val, &ds.test}) all.insert(part->begin(), part->end());
  CHECK(all.size() == 10);
  CHECK(*all.rbegin() == 9);

  const auto again = split_dataset(samples, {0.7, 0.1, 0.2}, 3);
  CHECK(again.train == ds.train);
  CHECK(again.test == ds.test);

  const auto only_train = split_dataset(samples, {1.0, 0.0, 0.0}, 1);
  CHECK(only_train.train.size() == 10);
  CHECK(only_train.val.empty());
  CHECK(only_train.test.empty());

  CHECK_THROWS_AS(split_dataset(samples, {0.5, 0.1, 0.2}, 0), Error);
}

TEST_CASE("split_dataset partition is a bijection for many sizes") {
  for (std::size_t n = 1; n < 60; n += 7) {
    std::vector<TrajectorySample> samples(n);
    const auto ds = split_dataset(samples, {0.7, 0.1, 0.2}, n);
    std::vector<std::size_t> all;
    for (const auto* part : {&ds.train, &ds.val, &ds.test}) all.insert(all.end(), part->begin(), part->end());
    std::sort(all.begin(), all.end());
    REQUIRE(all.size() == n);
    for (std::size_t i = 0; i < n; ++i) CHECK(all[i] == i);
    CHECK(std::abs(static_cast<double>(ds.train.size()) - 0.7 * static_cast<double>(n)) <= 1.0);
  }
}

TEST_CASE("straight_flow without noise has constant heading and step") {
  auto spec = default_spec(ScenarioFamily::StraightFlow, 9);
  spec.noise_std = 0.0;
  for (const auto& t : generate_synthetic_tracks(spec)) {
    REQUIRE(t.points.size() >= 3);
    const double dx0 = t.points[1].x - t.points[0].x;
    const double dy0 = t.points[1].y - t.points[0].y;
    for (std::size_t i = 2; i < t.points.size(); ++i) {
      CHECK(t.points[i].x - t.points[i - 1].x == doctest::Approx(dx0).epsilon(1e-9));
      CHECK(t.points[i].y - t.points[i - 1].y == doctest::Approx(dy0).epsilon(1e-9));
    }
  }
}

TEST_CASE("roundabout tracks curve on more than 90 percent of frames") {
  auto spec = default_spec(ScenarioFamily::Roundabout, 1);
  std::size_t curved = 0, total = 0;
  for (const auto& t : generate_synthetic_tracks(spec)) {
    for (std::size_t i = 1; i + 1 < t.points.size(); ++i) {
      const Eigen::Vector2d a(t.points[i].x - t.points[i - 1].x, t.points[i].y - t.points[i - 1].y);
      const Eigen::Vector2d b(t.points[i + 1].x - t.points[i].x, t.points[i + 1].y - t.points[i].y);
      const double cross = a.x() * b.y() - a.y() * b.x();
      const double kappa = 2.0 * std::abs(cross) / (a.norm() * b.norm() * (a + b).norm());
      ++total;
      if (kappa > 1e-6) ++curved;
    }
  }
  REQUIRE(total > 0);
  CHECK(static_cast<double>(curved) > 0.9 * static_cast<double>(total));
}

TEST_CASE("synthetic data is reproducible and obeys track invariants") {
  for (auto family : {ScenarioFamily::StraightFlow, ScenarioFamily::Merge, ScenarioFamily::Roundabout,
                      ScenarioFamily::IntersectionStop}) {
    const auto spec = default_spec(family, 21);
    const auto a = generate_synthetic_tracks(spec);
    const auto b = generate_synthetic_tracks(spec);
    CHECK(a.size() >= static_cast<std::size_t>(spec.n_vehicles));
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      REQUIRE(a[i].points.size() == b[i].points.size());
      for (std::size_t k = 0; k < a[i].points.size(); ++k) {
        CHECK(a[i].points[k].x == b[i].points[k].x);
        CHECK(a[i].points[k].y == b[i].points[k].y);
        if (k > 0) {
          CHECK(a[i].points[k].frame == a[i].points[k - 1].frame + 1);
          CHECK(a[i].points[k].t - a[i].points[k - 1].t == doctest::Approx(0.1).epsilon(1e-6));
        }
      }
    }
    const auto da = generate_synthetic(spec, {}, {}, 2);
    const auto db = generate_synthetic(spec, {}, {}, 2);
    CHECK(da.samples.size() == db.samples.size());
    CHECK(da.train == db.train);
    for (std::size_t i = 0; i < da.samples.size(); i += 97) CHECK(da.samples[i] == db.samples[i]);
  }
}

TEST_CASE("bad synthetic specs are rejected") {
  auto spec = default_spec(ScenarioFamily::Merge);
  spec.n_vehicles = 0;
  CHECK_THROWS_AS(generate_synthetic_tracks(spec), Error);
  spec = default_spec(ScenarioFamily::Merge);
  spec.noise_std = -1.0;
  CHECK_THROWS_AS(generate_synthetic_tracks(spec), Error);
  CHECK_THROWS_AS(scenario_family_from_string("highway"), Error);
}
