#include "dgsm/cl_trainer.hpp"
#include "dgsm/continual.hpp"
#include "dgsm/divergence.hpp"
#include "dgsm/error.hpp"
#include "dgsm/memory.hpp"
#include "dgsm/metrics.hpp"
#include "dgsm/predictor.hpp"

#include "oracles.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>

using namespace dgsm;

namespace {

int failures = 0;

void report(int id, bool pass, double seconds, const std::string& detail) {
  std::printf("criterion %2d: %s  %.1fs  %s\n", id, pass ? "PASS" : "FAIL", seconds, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

void criterion(int id, const std::function<bool(std::ostringstream&)>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  std::ostringstream detail;
  bool pass = false;
  try {
    pass = body(detail);
  } catch (const std::exception& e) {
    detail << "exception: " << e.what();
  }
  report(id, pass, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), detail.str());
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix out(static_cast<Index>(r.size()), static_cast<Index>(r.begin()->size()));
  Index i = 0;
  for (const auto& row : r) out.row(i++) = vec(row).transpose();
  return out;
}

GaussianMixture single(const Vector& mean, const Vector& var) {
  GaussianMixture g;
  g.weights = Vector::Ones(1);
  g.means = mean.transpose();
  g.variances = var.transpose();
  return g;
}

// Desk-scale experiment settings shared by the directional criteria.
WindowConfig desk_window() {
  WindowConfig w;
  w.stride = 5;
  return w;
}

ContinualConfig desk_config(std::uint64_t seed) {
  ContinualConfig c;
  c.trainer.learning_rate = 0.05;
  c.trainer.epochs = 20;
  c.trainer.clip_norm = 10.0;
  c.trainer.seed = seed;
  c.seed = seed;
  c.memory_budget = 1000;
  c.divergence.mdn.components = 5;
  c.divergence.mdn.min_cases_per_component = 50;
  c.divergence.mdn.epochs = 10;
  c.divergence.max_conditions = 300;
  c.divergence.n_mc = 50;
  return c;
}

ScenarioDataset desk_scenario(ScenarioFamily family, std::uint64_t seed, int id) {
  auto d = generate_synthetic(default_spec(family, seed), desk_window(), {}, id);
  d.name = to_string(family);
  return d;
}

std::vector<ScenarioDataset> desk_sequence(std::uint64_t seed, std::initializer_list<ScenarioFamily> families) {
  std::vector<ScenarioDataset> out;
  int id = 0;
  for (auto f : families) {
    out.push_back(desk_scenario(f, seed * 10 + static_cast<std::uint64_t>(id), id));
    ++id;
  }
  return out;
}

constexpr auto kStraight = ScenarioFamily::StraightFlow;
constexpr auto kMerge = ScenarioFamily::Merge;
constexpr auto kRoundabout = ScenarioFamily::Roundabout;
constexpr auto kIntersection = ScenarioFamily::IntersectionStop;

std::vector<Trajectory> single_traj(std::initializer_list<std::pair<double, double>> pts) {
  Trajectory t(static_cast<Index>(pts.size()), 2);
  Index i = 0;
  for (const auto& [x, y] : pts) {
    t(i, 0) = x;
    t(i, 1) = y;
    ++i;
  }
  return {t};
}

PathState state(double t, double x, double y, double vx, double vy) {
  PathState s;
  s.t = t;
  s.position = {x, y};
  s.velocity = Eigen::Vector2d(vx, vy);
  return s;
}

}  // namespace

int main() {
  criterion(1, [](std::ostringstream& d) {
    std::mt19937_64 rng(101);
    std::normal_distribution<double> z;
    std::uniform_int_distribution<int> dim(1, 20), cons(1, 4);
    double worst_gap = 0.0, worst_dot = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      const int n = dim(rng), m = cons(rng);
      const Matrix G = Matrix::NullaryExpr(m, n, [&] { return z(rng); });
      const Vector g = Vector::NullaryExpr(n, [&] { return z(rng); });
      const auto res = project_gradient(g, G, 0.0);
      worst_gap = std::max(worst_gap, (res.g_tilde - oracle::projection_by_enumeration(g, G)).norm());
      worst_dot = std::min(worst_dot, (G * res.g_tilde).minCoeff());
    }
    d << "max |g~ - oracle| " << worst_gap << " (<= 1e-6), min <g~, g_r> " << worst_dot << " (>= -1e-8)";
    return worst_gap <= 1e-6 && worst_dot >= -1e-8;
  });

  criterion(2, [](std::ostringstream& d) {
    const auto a = project_gradient(vec({1, 2}), rows({{1, 0}}), 0.0);
    const auto b = project_gradient(vec({1, -1}), rows({{0, 1}}), 0.0);
    const auto c = project_gradient(vec({-1, -1}), rows({{1, 0}, {0, 1}}), 0.0);
    const double ea = (a.g_tilde - vec({1, 2})).norm();
    const double eb = (b.g_tilde - vec({1, 0})).norm();
    const double ec = c.g_tilde.norm();
    d << "errors " << ea << ", " << eb << ", " << ec << " (<= 1e-9)";
    return ea <= 1e-9 && eb <= 1e-9 && ec <= 1e-9;
  });

  criterion(3, [](std::ostringstream& d) {
    auto rel = [](double a, double fd) { return std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6}); };
    PredictorConfig pc;
    pc.history_frames = 4;
    pc.future_frames = 3;
    pc.max_neighbors = 3;
    pc.encoder_hidden = 6;
    pc.embedding = 4;
    pc.decoder_hidden = 7;
    Predictor p(pc);
    std::mt19937_64 rng(303);
    std::normal_distribution<double> z;
    auto path = [&](Index frames) {
      Trajectory t(frames, 2);
      double x = 5 * z(rng), y = 5 * z(rng);
      const double vx = z(rng), vy = z(rng);
      for (Index k = 0; k < frames; ++k) {
        x += vx + 0.1 * z(rng);
        y += vy + 0.1 * z(rng);
        t(k, 0) = x;
        t(k, 1) = y;
      }
      return t;
    };
    double worst_pred = 0.0;
    for (int probe = 0; probe < 50; ++probe) {
      std::vector<TrajectorySample> batch(3);
      for (auto& s : batch) {
        const auto full = path(7);
        s.target_history = full.topRows(4);
        s.target_future = full.bottomRows(3);
        s.neighbor_histories.resize(3);
        for (auto& n : s.neighbor_histories)
          if (z(rng) > -0.25) n = path(4);
      }
      const auto theta = p.initial_parameters(static_cast<std::uint64_t>(probe));
      const auto lg = p.loss_gradient(theta, batch);
      std::uniform_int_distribution<Index> pick(0, p.parameter_count() - 1);
      const Index i = pick(rng);
      const double fd = oracle::central_difference([&](const Vector& v) { return p.nll_loss(ParameterVector{v}, batch); },
                                                   theta.values, i, 1e-5);
      worst_pred = std::max(worst_pred, rel(lg.gradient.values[i], fd));
    }

    MdnConfig mc;
    mc.components = 3;
    mc.hidden = 8;
    mc.min_cases_per_component = 0;
    mc.seed = 4;
    MdnModel m(3, 2, mc);
    std::vector<DivergenceCase> cases(12);
    for (auto& c : cases) {
      c.condition = Vector::NullaryExpr(3, [&] { return z(rng); });
      c.future = Vector::NullaryExpr(2, [&] { return z(rng); });
    }
    double worst_mdn = 0.0;
    for (int probe = 0; probe < 50; ++probe) {
      m.parameters() = Vector::NullaryExpr(m.parameter_count(), [&] { return 0.3 * z(rng); });
      Vector grad;
      m.loss_gradient(cases, &grad);
      const Vector base = m.parameters();
      std::uniform_int_distribution<Index> pick(0, m.parameter_count() - 1);
      const Index i = pick(rng);
      const double fd = oracle::central_difference(
          [&](const Vector& v) {
            m.parameters() = v;
            return m.loss_gradient(cases, nullptr);
          },
          base, i, 1e-5);
      m.parameters() = base;
      worst_mdn = std::max(worst_mdn, rel(grad[i], fd));
    }
    d << "max rel err predictor " << worst_pred << ", mdn " << worst_mdn << " (< 1e-4)";
    return worst_pred < 1e-4 && worst_mdn < 1e-4;
  });

  criterion(4, [](std::ostringstream& d) {
    const auto unit = mc_kld(single(vec({0, 0}), vec({1, 1})), single(vec({1, 0}), vec({1, 1})), 10000, std::uint64_t{1}).value;
    const auto p = single(vec({0}), vec({1}));
    const auto q = single(vec({0}), vec({4}));
    const double pq = mc_kld(p, q, 10000, std::uint64_t{2}).value;
    const double qp = mc_kld(q, p, 10000, std::uint64_t{3}).value;
    const double want_pq = oracle::gaussian_kl(vec({0}), 1.0, vec({0}), 2.0);
    const double want_qp = oracle::gaussian_kl(vec({0}), 2.0, vec({0}), 1.0);
    const double self = mc_kld(q, q, 10000, std::uint64_t{4}).value;
    d << "unit " << unit << " (0.5), pair " << pq << "/" << qp << " (" << want_pq << "/" << want_qp << "), self " << self
      << " (tol 0.05, self exact)";
    return std::abs(unit - 0.5) <= 0.05 && std::abs(want_pq - 0.3181) <= 1e-4 && std::abs(want_qp - 0.8069) <= 1e-4 &&
           std::abs(pq - 0.3181) <= 0.05 && std::abs(qp - 0.8069) <= 0.05 && self == 0.0;
  });

  criterion(5, [](std::ostringstream& d) {
    const double w = 0.5;
    const double d1 = weighted_ckld(65.45, 152.44, w), d2 = weighted_ckld(121.10, 171.08, w), d3 = weighted_ckld(987.29, 109.58, w);
    const auto plan = allocate({{1, d1}, {2, d2}, {3, d3}}, 3500, 4);
    bool ok = std::abs(d1 - 108.945) <= 1e-9 && std::abs(d2 - 146.09) <= 1e-9 && std::abs(d3 - 548.435) <= 1e-9;
    const std::vector<std::pair<int, long>> want{{1, 232}, {2, 311}, {3, 1166}};
    for (const auto& [id, n] : want) ok = ok && std::abs(static_cast<long>(plan.counts.at(id)) - n) <= 1;

    std::mt19937_64 rng(505);
    std::uniform_real_distribution<double> u(0.0, 1000.0);
    std::uniform_int_distribution<int> count(1, 8);
    bool symmetric = true, invariant = true, monotone = true;
    for (int trial = 0; trial < 100; ++trial) {
      const double a = u(rng), b = u(rng);
      symmetric = symmetric && weighted_ckld(a, b, 0.5) == weighted_ckld(b, a, 0.5);
      std::map<int, double> div, scaled;
      const int past = count(rng);
      const double alpha = 0.01 + u(rng) / 10.0;
      for (int r = 0; r < past; ++r) {
        div[r] = u(rng);
        scaled[r] = alpha * div[r];
      }
      const auto p1 = allocate(div, 3500, static_cast<std::size_t>(past + 1));
      invariant = invariant && p1.counts == allocate(scaled, 3500, static_cast<std::size_t>(past + 1)).counts;
      for (const auto& [i, di] : div)
        for (const auto& [j, dj] : div)
          if (di >= dj) monotone = monotone && p1.counts.at(i) >= p1.counts.at(j);
    }
    d << "weighted {" << d1 << ", " << d2 << ", " << d3 << "}, plan {" << plan.counts.at(1) << ", " << plan.counts.at(2) << ", "
      << plan.counts.at(3) << "} (+-1), symmetric " << symmetric << ", scale-invariant " << invariant << ", monotone " << monotone;
    return ok && symmetric && invariant && monotone;
  });

  criterion(6, [](std::ostringstream& d) {
    WindowConfig w;
    w.stride = 1;
    ScenarioRepository repo(9000);
    bool ok = true;
    std::map<int, std::size_t> available;
    std::map<int, std::vector<std::size_t>> previous;
    int id = 0;
    for (auto f : {kStraight, kMerge, kRoundabout, kIntersection}) {
      auto spec = default_spec(f, 60 + static_cast<std::uint64_t>(id));
      spec.n_vehicles = 200;
      spec.duration = 120.0;
      const auto ds = generate_synthetic(spec, w, {}, id);
      const auto train = ds.train_samples();
      available[id] = train.size();
      repo.update(id, train, static_cast<std::uint64_t>(id));
      const std::size_t cap = 9000 / static_cast<std::size_t>(id + 1);
      d << "{";
      for (int k : repo.scenario_ids()) {
        const auto& buf = repo.buffer(k);
        d << buf.size() << (k == id ? "}" : ",");
        ok = ok && buf.size() == std::min(cap, available[k]);
        if (previous.count(k))
          ok = ok && std::includes(previous[k].begin(), previous[k].end(), buf.source_ids.begin(), buf.source_ids.end());
        previous[k] = buf.source_ids;
      }
      d << " ";
      ++id;
    }
    d << "(= min(M/c, available), subset of earlier contents)";
    return ok;
  });

  criterion(7, [](std::ostringstream& d) {
    int gsm_wins = 0, dgsm_wins = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto seq = desk_sequence(seed, {kStraight, kMerge, kRoundabout});
      const auto cfg = desk_config(seed);
      const double v = run_continual(seq, cfg, TrainingMode::Vanilla).evals.back().average_ade;
      const double g = run_continual(seq, cfg, TrainingMode::Gsm).evals.back().average_ade;
      const double dg = run_continual(seq, cfg, TrainingMode::Dgsm).evals.back().average_ade;
      gsm_wins += g < v;
      dgsm_wins += dg < v;
      d << "seed " << seed << " vanilla/gsm/dgsm " << v << "/" << g << "/" << dg << "; ";
    }
    d << "wins gsm " << gsm_wins << "/5, dgsm " << dgsm_wins << "/5 (>= 4)";
    return gsm_wins >= 4 && dgsm_wins >= 4;
  });

  criterion(8, [](std::ostringstream& d) {
    const std::vector<std::size_t> sizes{0, 100, 500};
    std::vector<double> means;
    for (auto m : sizes) {
      double sum = 0;
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto cfg = desk_config(seed);
        cfg.memory_per_task = m;
        sum += run_continual(desk_sequence(seed, {kStraight, kMerge, kRoundabout}), cfg, TrainingMode::Gsm).evals.back().average_ade;
      }
      means.push_back(sum / 5.0);
      d << "m=" << m << " mean ADE " << means.back() << "; ";
    }
    int inversions = 0;
    bool small = true;
    for (std::size_t i = 1; i < means.size(); ++i)
      if (means[i] > means[i - 1]) {
        ++inversions;
        small = small && (means[i] - means[i - 1]) <= 0.05 * means[i - 1];
      }
    d << "inversions " << inversions << " (<= 1, each <= 5%)";
    return inversions == 0 || (inversions == 1 && small);
  });

  criterion(9, [](std::ostringstream& d) {
    const std::uint64_t seed = 3;
    const auto cfg = desk_config(seed);
    std::vector<double> divergence, increment;
    int second_seed = 0;
    for (auto f : {kStraight, kMerge, kIntersection, kRoundabout}) {
      std::vector<ScenarioDataset> seq{desk_scenario(kStraight, 900, 0), desk_scenario(f, 901 + static_cast<std::uint64_t>(second_seed++), 1)};
      DivergenceReport rep;
      const std::vector<const ScenarioDataset*> learned{&seq[0], &seq[1]};
      const double w = mdn_divergence_provider(cfg.divergence)(learned, &rep).at(0);
      const auto run = run_continual(seq, cfg, TrainingMode::Vanilla);
      const auto& first = run.forgetting.entries.front();
      divergence.push_back(w);
      increment.push_back(first.increment);
      d << to_string(f) << " ckld " << w << " dADE " << first.increment << "; ";
    }
    const double rho = oracle::spearman(divergence, increment);
    d << "spearman " << rho << " (> 0)";
    return rho > 0.0;
  });

  criterion(10, [](std::ostringstream& d) {
    const auto seq = desk_sequence(1, {kStraight, kMerge, kRoundabout, kIntersection});
    const auto cfg = desk_config(1);
    const auto gsm = run_continual(seq, cfg, TrainingMode::Gsm);
    const auto dgsm = run_continual(seq, cfg, TrainingMode::Dgsm);
    const double ratio = static_cast<double>(dgsm.allocated_samples) / static_cast<double>(gsm.allocated_samples);
    d << "allocated dgsm " << dgsm.allocated_samples << " vs gsm " << gsm.allocated_samples << ", cost ratio " << ratio
      << " (< 1), time ratio " << static_cast<double>(dgsm.sample_evaluations) / static_cast<double>(gsm.sample_evaluations);
    return dgsm.allocated_samples < gsm.allocated_samples && ratio < 1.0;
  });

  criterion(11, [](std::ostringstream& d) {
    MdnConfig cfg;
    cfg.components = 20;
    cfg.hidden = 4;
    cfg.epochs = 1;
    std::mt19937_64 rng(11);
    std::normal_distribution<double> z;
    auto cases = [&](std::size_t n) {
      std::vector<DivergenceCase> out(n);
      for (auto& c : out) {
        c.condition = Vector::NullaryExpr(3, [&] { return z(rng); });
        c.future = Vector::NullaryExpr(2, [&] { return z(rng); });
      }
      return out;
    };
    bool refused = false;
    try {
      fit_mdn(cases(5000), cfg);
    } catch (const Error& e) {
      refused = e.code() == ErrorCode::InsufficientData;
      d << "5000 cases: " << e.detail() << "; ";
    }
    bool trained = true;
    try {
      fit_mdn(cases(6000), cfg);
    } catch (const Error&) {
      trained = false;
    }
    d << "6000 cases trained " << trained;
    return refused && trained;
  });

  criterion(12, [](std::ostringstream& d) {
    const auto truth = single_traj({{0, 0}, {1, 1}});
    bool ok = ade(truth, truth) == 0.0 && fde(truth, truth) == 0.0;
    ok = ok && std::abs(ade(single_traj({{1, 0}, {2, 1}}), truth) - 1.0) <= 1e-12;
    ok = ok && std::abs(ade(single_traj({{3, 4}, {1, 1}}), truth) - 2.5) <= 1e-12;
    ok = ok && std::abs(fde(single_traj({{0, 0}, {4, 5}}), truth) - 5.0) <= 1e-12;
    const std::vector<PathState> v1{state(0, 0, 0, 5, 0), state(2, 10, 0, 5, 0)};
    const std::vector<PathState> v2{state(0, 10, -12, 0, 4), state(3, 10, 0, 0, 4)};
    const auto t = ttcp_min(v1, v2, {10, 0});
    const std::vector<PathState> w2{state(0, 10, -8, 0, 4), state(2, 10, 0, 0, 4)};
    const auto t0 = ttcp_min(v1, w2, {10, 0});
    ok = ok && std::abs(t.value - 1.0) <= 1e-12 && t.interaction && std::abs(t0.value) <= 1e-12;

    std::mt19937_64 rng(12);
    std::normal_distribution<double> z(0.0, 5.0);
    std::uniform_real_distribution<double> angle(-3.14, 3.14);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Eigen::Matrix2d rot = Eigen::Rotation2Dd(angle(rng)).toRotationMatrix();
      const Eigen::RowVector2d shift(z(rng), z(rng));
      std::vector<Trajectory> pred, gt, pred_t, gt_t;
      for (int i = 0; i < 4; ++i) {
        pred.push_back(Trajectory::NullaryExpr(8, 2, [&] { return z(rng); }));
        gt.push_back(Trajectory::NullaryExpr(8, 2, [&] { return z(rng); }));
        Trajectory a = pred.back() * rot.transpose(), b = gt.back() * rot.transpose();
        a.rowwise() += shift;
        b.rowwise() += shift;
        pred_t.push_back(a);
        gt_t.push_back(b);
      }
      worst = std::max({worst, std::abs(ade(pred_t, gt_t) - ade(pred, gt)) / ade(pred, gt),
                        std::abs(fde(pred_t, gt_t) - fde(pred, gt)) / fde(pred, gt)});
    }
    d << "worked examples exact to 1e-12 " << ok << ", ttcp " << t.value << "/" << t0.value
      << ", max rigid-transform rel change " << worst << " (<= 1e-12)";
    return ok && worst <= 1e-12;
  });

  std::printf("%s: %d criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
