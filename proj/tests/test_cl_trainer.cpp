#include "dgsm/cl_trainer.hpp"
#include "dgsm/error.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace dgsm;

namespace {

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

// Two conflicting quadratic tasks on theta = (x, y):
// task 1: 0.5 (x - 1)^2, task 2: 0.5 ((x + 1)^2 + (y - 2)^2).
struct ToyQuadratic {
  using Sample = int;

  static double task_loss(const Vector& t, int task) {
    if (task == 1) return 0.5 * (t[0] - 1) * (t[0] - 1);
    return 0.5 * ((t[0] + 1) * (t[0] + 1) + (t[1] - 2) * (t[1] - 2));
  }
  static Vector task_grad(const Vector& t, int task) {
    if (task == 1) return vec({t[0] - 1, 0.0});
    return vec({t[0] + 1, t[1] - 2});
  }
  double nll_loss(const ParameterVector& theta, std::span<const int> batch) const {
    double s = 0;
    for (int task : batch) s += task_loss(theta.values, task);
    return s / static_cast<double>(batch.size());
  }
  LossGradient loss_gradient(const ParameterVector& theta, std::span<const int> batch) const {
    LossGradient out;
    out.loss = nll_loss(theta, batch);
    out.gradient.values = Vector::Zero(2);
    for (int task : batch) out.gradient.values += task_grad(theta.values, task);
    out.gradient.values /= static_cast<double>(batch.size());
    return out;
  }
};

}  // namespace

TEST_CASE("gradient violations use strict sign") {
  CHECK(gradient_violations(vec({1, 2}), rows({{1, 0}})).empty());
  CHECK(gradient_violations(vec({1, -1}), rows({{0, 1}})) == std::vector<Index>{0});
  CHECK(gradient_violations(vec({1, 0}), rows({{0, 1}})).empty());
  CHECK_THROWS_AS(gradient_violations(vec({1, 0, 0}), rows({{0, 1}})), Error);
}

TEST_CASE("dual solutions for small cases") {
  const auto zero = qp_solve_dual(rows({{2, 1}, {1, 2}}), vec({0.5, 0.0}));
  CHECK(zero.v.isZero());
  CHECK(zero.converged);

  const auto one = qp_solve_dual(rows({{1}}), vec({-1}));
  CHECK(one.v[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(one.kkt_residual <= 1e-8);

  CHECK_THROWS_AS(qp_solve_dual(rows({{1}}), vec({std::nan("")})), Error);
  CHECK_THROWS_AS(qp_solve_dual(rows({{1, 0}}), vec({1})), Error);
}

TEST_CASE("dual solver matches exhaustive active-set enumeration") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z;
  std::uniform_int_distribution<int> dim(1, 20), cons(1, 4);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = dim(rng), m = cons(rng);
    const Matrix G = Matrix::NullaryExpr(m, n, [&] { return z(rng); });
    const Vector g = Vector::NullaryExpr(n, [&] { return z(rng); });
    const Matrix H = G * G.transpose();
    const Vector b = G * g;
    const auto sol = qp_solve_dual(H, b);
    CHECK((sol.v.array() >= 0.0).all());
    CHECK(sol.converged);
    const Vector want = oracle::dual_by_enumeration(H, b);
    // compare primal images; the dual is not unique when G is rank deficient
    CHECK((G.transpose() * sol.v - G.transpose() * want).norm() <= 1e-6);
    if (n >= m) CHECK((sol.v - want).norm() <= 1e-6 * std::max(1.0, want.norm()));
  }
}

TEST_CASE("projection worked examples") {
  const auto none = project_gradient(vec({1, 2}), rows({{1, 0}}), 0.0);
  CHECK(!none.active);
  CHECK(none.g_tilde == vec({1, 2}));

  const auto half = project_gradient(vec({1, -1}), rows({{0, 1}}), 0.0);
  CHECK(half.active);
  CHECK(std::abs(half.g_tilde[0] - 1.0) <= 1e-9);
  CHECK(std::abs(half.g_tilde[1] - 0.0) <= 1e-9);

  const auto corner = project_gradient(vec({-1, -1}), rows({{1, 0}, {0, 1}}), 0.0);
  CHECK(corner.g_tilde.norm() <= 1e-9);
  CHECK(corner.violations_before.size() == 2);
  CHECK(corner.violations_after.empty());
  CHECK((corner.g_tilde - oracle::projection_by_enumeration(vec({-1, -1}), rows({{1, 0}, {0, 1}}))).norm() <= 1e-9);
}

TEST_CASE("projection is feasible, optimal and idempotent on random instances") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  std::uniform_int_distribution<int> dim(2, 20), cons(1, 4);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = dim(rng), m = cons(rng);
    const Matrix G = Matrix::NullaryExpr(m, n, [&] { return z(rng); });
    const Vector g = Vector::NullaryExpr(n, [&] { return z(rng); });
    const auto res = project_gradient(g, G, 0.0);
    const Vector dots = G * res.g_tilde;
    for (Index r = 0; r < m; ++r) CHECK(dots[r] >= -1e-8 * std::max(1e-300, res.g_tilde.norm() * G.row(r).norm()) - 1e-14);
    CHECK((res.g_tilde - oracle::projection_by_enumeration(g, G)).norm() <= 1e-6);
    if (!res.active) CHECK(res.g_tilde == g);
    const auto again = project_gradient(res.g_tilde, G, 0.0);
    CHECK((again.g_tilde - res.g_tilde).norm() <= 1e-9 * std::max(1.0, res.g_tilde.norm()));
  }
}

TEST_CASE("gamma shifts the projection along the constraint rows") {
  const auto res = project_gradient(vec({1, -1}), rows({{0, 1}}), 0.1);
  CHECK(res.g_tilde[0] == doctest::Approx(1.0));
  CHECK(res.g_tilde[1] == doctest::Approx(0.1));
}

TEST_CASE("one projected step keeps past quadratic losses to second order") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> z;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 5, m = 3;
    std::vector<Matrix> A;
    std::vector<Vector> b;
    for (int r = 0; r < m; ++r) {
      A.push_back(Matrix::NullaryExpr(n, n, [&] { return z(rng); }));
      b.push_back(Vector::NullaryExpr(n, [&] { return z(rng); }));
    }
    const Vector theta = Vector::NullaryExpr(n, [&] { return z(rng); });
    auto loss = [&](int r, const Vector& t) { return 0.5 * (A[static_cast<std::size_t>(r)] * t - b[static_cast<std::size_t>(r)]).squaredNorm(); };
    Matrix G(m, n);
    for (int r = 0; r < m; ++r) G.row(r) = (A[static_cast<std::size_t>(r)].transpose() * (A[static_cast<std::size_t>(r)] * theta - b[static_cast<std::size_t>(r)])).transpose();
    const Vector g = Vector::NullaryExpr(n, [&] { return z(rng); });
    const auto res = project_gradient(g, G, 0.0);
    const double lr = 1e-2;
    const Vector next = theta - lr * res.g_tilde;
    for (int r = 0; r < m; ++r) {
      const double second = 0.5 * lr * lr * (A[static_cast<std::size_t>(r)] * res.g_tilde).squaredNorm();
      CHECK(loss(r, next) <= loss(r, theta) + second + 1e-12);
    }
  }
}

TEST_CASE("previous losses use the predictor loss") {
  Predictor p(fixture::small_predictor());
  const auto theta = p.initial_parameters(1);
  const auto batch = fixture::random_batch(p.config(), 2, 3);
  std::map<int, std::vector<TrajectorySample>> memory{{0, batch}, {4, batch}};
  const auto losses = previous_losses(p, theta, memory);
  CHECK(losses.at(0) == p.nll_loss(theta, batch));
  CHECK(losses.at(0) == losses.at(4));
  const std::vector<TrajectorySample> a{batch[0]}, b{batch[1]};
  CHECK(losses.at(0) == doctest::Approx(0.5 * (p.nll_loss(theta, a) + p.nll_loss(theta, b))).epsilon(1e-14));
  memory[5] = {};
  CHECK_THROWS_AS(previous_losses(p, theta, memory), Error);
}

TEST_CASE("training without past tasks is plain SGD") {
  Predictor p(fixture::small_predictor());
  const auto theta0 = p.initial_parameters(2);
  const auto data = fixture::random_batch(p.config(), 1, 5);
  TrainerConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.epochs = 7;
  cfg.batch_size = 1;
  TrainHistory hist;
  const auto trained = train_scenario(p, theta0, std::span<const TrajectorySample>(data), {}, cfg, &hist);
  auto manual = theta0;
  for (int k = 0; k < 7; ++k) manual = sgd_step(manual, p.loss_gradient(manual, data).gradient, 0.01);
  CHECK(trained.values == manual.values);
  CHECK(hist.steps.size() == 7);
  CHECK(hist.projections == 0);
  CHECK(hist.sample_evaluations == 7);
}

TEST_CASE("memory equal to the current sample never triggers projection") {
  Predictor p(fixture::small_predictor());
  const auto data = fixture::random_batch(p.config(), 1, 8);
  TrainerConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.epochs = 20;
  cfg.batch_size = 1;
  TrainHistory hist;
  train_scenario(p, p.initial_parameters(1), std::span<const TrajectorySample>(data), {{0, data}}, cfg, &hist);
  CHECK(hist.projections == 0);
  CHECK(hist.reference.reference.count(0) == 1);
  CHECK(hist.sample_evaluations == 40);
}

TEST_CASE("constrained training protects the first quadratic task") {
  ToyQuadratic model;
  const ParameterVector start{vec({1.0, 0.0})};
  const std::vector<int> task2(4, 2);
  const std::map<int, std::vector<int>> memory{{1, {1}}};
  TrainerConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.epochs = 1500;
  cfg.batch_size = 4;

  TrainHistory hist;
  const auto projected = train_scenario(model, start, std::span<const int>(task2), memory, cfg, &hist);
  const auto sgd = train_scenario(model, start, std::span<const int>(task2), {}, cfg);
  const double ref = ToyQuadratic::task_loss(start.values, 1);
  CHECK(hist.reference.reference.at(1) == ref);
  CHECK(ToyQuadratic::task_loss(projected.values, 1) <= ref + 1e-3);
  CHECK(ToyQuadratic::task_loss(sgd.values, 1) > ref + 1e-3);
  CHECK(projected.values[1] == doctest::Approx(2.0).epsilon(1e-3));
  CHECK(hist.projections > 0);
  CHECK(hist.unconverged_qp == 0);
}

TEST_CASE("trainer validates its configuration") {
  ToyQuadratic model;
  const std::vector<int> data{2};
  TrainerConfig cfg;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(train_scenario(model, ParameterVector{vec({0, 0})}, std::span<const int>(data), {}, cfg), Error);
  cfg = {};
  const std::vector<int> none;
  CHECK_THROWS_AS(train_scenario(model, ParameterVector{vec({0, 0})}, std::span<const int>(none), {}, cfg), Error);
}
