#pragma once

#include "dgsm/error.hpp"
#include "dgsm/memory.hpp"
#include "dgsm/predictor.hpp"
#include "dgsm/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <vector>

namespace dgsm {

// ---------------------------------------------------------------------------
// Gradient projection

/// Indices r with <g, G.row(r)> < 0.
std::vector<Index> gradient_violations(const Vector& g, const Matrix& G);

struct DualSolution {
  Vector v;                   // >= 0
  double kkt_residual = 0.0;  // || min(v, H v + b) ||_inf
  Index iterations = 0;
  bool converged = false;
};

/// min 0.5 v'Hv + b'v  s.t. v >= 0, with H = G G' and b = G g.
/// Projected coordinate descent with an exact solve on the detected support.
DualSolution qp_solve_dual(const Matrix& GGt, const Vector& Gg, double qp_tol = 1e-8, Index max_iter = 10000);

struct ProjectionResult {
  Vector g_tilde;
  bool active = false;
  std::vector<Index> violations_before;
  std::vector<Index> violations_after;
  DualSolution dual;
};

/// Closest g_tilde to g with <g_tilde, g_r> >= 0 for every row g_r of G
/// (shifted by gamma along the constraint rows). Returns g untouched when
/// nothing is violated.
ProjectionResult project_gradient(const Vector& g, const Matrix& G, double gamma, double eps_feas = 1e-8,
                                  double qp_tol = 1e-8, Index max_iter = 10000);

// ---------------------------------------------------------------------------
// Training loop

struct TrainerConfig {
  double learning_rate = 0.001;
  Index epochs = 250;
  Index batch_size = 64;
  double gamma = 1e-3;
  double eps_feas = 1e-8;
  double qp_tol = 1e-8;
  Index qp_max_iter = 10000;
  double clip_norm = 0.0;            // rescale the applied step above this norm; 0 = off
  bool full_memory_batches = false;  // evaluate each past task on its whole allocation
  bool resample = true;              // redraw memory batches every step
  std::uint64_t seed = 0;

  void validate() const;
};

struct TaskLossSet {
  std::map<int, double> current;    // l(f_theta, m_r)
  std::map<int, double> reference;  // l(f'_theta, m_r), frozen at scenario start
  std::size_t snapshot = 0;
};

struct StepRecord {
  Index step = 0;
  Index epoch = 0;
  double loss = 0.0;
  std::map<int, double> task_losses;
  Index violations = 0;
  bool projection_active = false;
  double projection_delta = 0.0;  // ||g_tilde - g||
};

struct TrainHistory {
  std::vector<StepRecord> steps;
  TaskLossSet reference;
  std::size_t sample_evaluations = 0;  // per-sample gradient evaluations, the cost proxy
  Index projections = 0;
  Index unconverged_qp = 0;
};

/// Mean loss of every non-empty memory batch.
template <typename Model>
std::map<int, double> previous_losses(const Model& model, const ParameterVector& theta,
                                      const std::map<int, std::vector<typename Model::Sample>>& memory) {
  std::map<int, double> out;
  for (const auto& [id, batch] : memory) {
    if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "memory batch for scenario " + std::to_string(id) + " is empty");
    out[id] = model.nll_loss(theta, batch);
  }
  return out;
}

/// One scenario of constrained training. `memory` holds the allocated pool for
/// each past task; empty pools impose no constraint.
template <typename Model>
ParameterVector train_scenario(const Model& model, ParameterVector theta,
                               std::span<const typename Model::Sample> current,
                               const std::map<int, std::vector<typename Model::Sample>>& memory,
                               const TrainerConfig& config, TrainHistory* history = nullptr) {
  using Sample = typename Model::Sample;
  config.validate();
  if (current.empty()) throw Error(ErrorCode::EmptyBatch, "no training data for the current scenario");

  std::map<int, std::vector<Sample>> pools;
  for (const auto& [id, pool] : memory)
    if (!pool.empty()) pools[id] = pool;

  TrainHistory local;
  TrainHistory& hist = history ? *history : local;
  if (!pools.empty()) {
    hist.reference.reference = previous_losses(model, theta, pools);
    hist.reference.current = hist.reference.reference;
  }

  auto draw = [&](int id, const std::vector<Sample>& pool, Index step) {
    const auto n = pool.size();
    const auto k = std::min<std::size_t>(n, static_cast<std::size_t>(config.batch_size));
    if (config.full_memory_batches || k == n) return pool;
    auto rng = config.resample ? make_rng(config.seed, {0xba7cu, static_cast<std::uint64_t>(id), static_cast<std::uint64_t>(step)})
                               : make_rng(config.seed, {0xf1edu, static_cast<std::uint64_t>(id)});
    std::vector<Sample> batch;
    batch.reserve(k);
    for (auto i : choose_subset(n, k, rng)) batch.push_back(pool[i]);
    return batch;
  };

  const auto n = current.size();
  std::vector<std::size_t> order(n);
  std::vector<Sample> batch;
  Index step = 0;
  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = make_rng(config.seed, {0xe40cu, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size)) {
      const auto end = std::min(n, start + static_cast<std::size_t>(config.batch_size));
      batch.clear();
      for (auto i = start; i < end; ++i) batch.push_back(current[order[i]]);

      const LossGradient lg = model.loss_gradient(theta, batch);
      hist.sample_evaluations += batch.size();
      StepRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.loss = lg.loss;

      Vector applied = lg.gradient.values;
      if (!pools.empty()) {
        Matrix G(static_cast<Index>(pools.size()), applied.size());
        Index r = 0;
        for (const auto& [id, pool] : pools) {
          const auto mb = draw(id, pool, step);
          const LossGradient past = model.loss_gradient(theta, mb);
          hist.sample_evaluations += mb.size();
          rec.task_losses[id] = past.loss;
          G.row(r++) = past.gradient.values.transpose();
        }
        auto proj = project_gradient(applied, G, config.gamma, config.eps_feas, config.qp_tol, config.qp_max_iter);
        rec.violations = static_cast<Index>(proj.violations_before.size());
        rec.projection_active = proj.active;
        if (proj.active) {
          ++hist.projections;
          if (!proj.dual.converged) ++hist.unconverged_qp;
          rec.projection_delta = (proj.g_tilde - applied).norm();
          applied = std::move(proj.g_tilde);
        }
        hist.reference.current = rec.task_losses;
      }
      if (config.clip_norm > 0.0) {
        const double norm = applied.norm();
        if (norm > config.clip_norm) applied *= config.clip_norm / norm;
      }
      theta = sgd_step(theta, GradientVector{std::move(applied)}, config.learning_rate);
      if (!theta.values.allFinite()) throw Error(ErrorCode::NonFiniteLoss, "parameters diverged at step " + std::to_string(step));
      hist.steps.push_back(std::move(rec));
      ++step;
    }
  }
  return theta;
}

}  // namespace dgsm
