#include "dgsm/cl_trainer.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>

namespace dgsm {

std::vector<Index> gradient_violations(const Vector& g, const Matrix& G) {
  if (G.cols() != g.size())
    throw Error(ErrorCode::ShapeMismatch, "constraint rows have " + std::to_string(G.cols()) + " entries, gradient has " +
                                              std::to_string(g.size()));
  std::vector<Index> out;
  const Vector dots = G * g;
  for (Index r = 0; r < dots.size(); ++r)
    if (dots[r] < 0.0) out.push_back(r);
  return out;
}

namespace {

double natural_residual(const Matrix& H, const Vector& b, const Vector& v) {
  if (v.size() == 0) return 0.0;
  return (H * v + b).cwiseMin(v).cwiseAbs().maxCoeff();
}

// Exact minimiser restricted to the support of v; empty optional-like result on failure.
bool polish(const Matrix& H, const Vector& b, const Vector& v, Vector& out) {
  std::vector<Index> support;
  for (Index i = 0; i < v.size(); ++i)
    if (v[i] > 0.0) support.push_back(i);
  out = Vector::Zero(v.size());
  if (support.empty()) return true;
  const auto s = static_cast<Index>(support.size());
  Matrix Hs(s, s);
  Vector bs(s);
  for (Index i = 0; i < s; ++i) {
    bs[i] = b[support[i]];
    for (Index j = 0; j < s; ++j) Hs(i, j) = H(support[i], support[j]);
  }
  const Vector vs = Hs.completeOrthogonalDecomposition().solve(-bs);
  if (!vs.allFinite() || vs.minCoeff() < 0.0) return false;
  for (Index i = 0; i < s; ++i) out[support[i]] = vs[i];
  return true;
}

}  // namespace

DualSolution qp_solve_dual(const Matrix& GGt, const Vector& Gg, double qp_tol, Index max_iter) {
  const Index m = Gg.size();
  if (GGt.rows() != m || GGt.cols() != m) throw Error(ErrorCode::ShapeMismatch, "dual Hessian does not match the linear term");
  if (!GGt.allFinite() || !Gg.allFinite()) throw Error(ErrorCode::NonFiniteInput, "non-finite values in the dual problem");

  DualSolution sol;
  sol.v = Vector::Zero(m);
  const double scale = std::max({1.0, Gg.cwiseAbs().maxCoeff(), m > 0 ? GGt.diagonal().maxCoeff() : 0.0});
  const double tol = qp_tol * scale;
  sol.kkt_residual = natural_residual(GGt, Gg, sol.v);
  Vector candidate;
  while (sol.kkt_residual > tol && sol.iterations < max_iter) {
    ++sol.iterations;
    for (Index i = 0; i < m; ++i) {
      const double h = GGt(i, i);
      if (h <= 0.0) continue;
      const double grad = GGt.row(i).dot(sol.v) + Gg[i];
      sol.v[i] = std::max(0.0, sol.v[i] - grad / h);
    }
    sol.kkt_residual = natural_residual(GGt, Gg, sol.v);
    if (sol.kkt_residual > tol && polish(GGt, Gg, sol.v, candidate)) {
      const double r = natural_residual(GGt, Gg, candidate);
      if (r < sol.kkt_residual) {
        sol.v = candidate;
        sol.kkt_residual = r;
      }
    }
  }
  sol.converged = sol.kkt_residual <= tol;
  return sol;
}

ProjectionResult project_gradient(const Vector& g, const Matrix& G, double gamma, double eps_feas, double qp_tol,
                                  Index max_iter) {
  ProjectionResult res;
  res.violations_before = gradient_violations(g, G);
  if (res.violations_before.empty()) {
    res.g_tilde = g;
    return res;
  }
  if (!g.allFinite() || !G.allFinite()) throw Error(ErrorCode::NonFiniteInput, "non-finite gradient");
  res.active = true;
  const Matrix H = G * G.transpose();
  const Vector b = G * g;
  res.dual = qp_solve_dual(H, b, qp_tol, max_iter);
  res.g_tilde = G.transpose() * (res.dual.v.array() + gamma).matrix() + g;

  const Vector dots = G * res.g_tilde;
  for (Index r = 0; r < dots.size(); ++r) {
    const double slack = eps_feas * std::max(1.0, res.g_tilde.norm() * G.row(r).norm());
    if (dots[r] < -slack) res.violations_after.push_back(r);
  }
  return res;
}

void TrainerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::BadConfig, "lr must be positive");
  if (epochs < 0 || batch_size < 1) throw Error(ErrorCode::BadConfig, "epochs must be >= 0 and batch_size >= 1");
  if (!(gamma >= 0.0)) throw Error(ErrorCode::BadConfig, "gamma must be >= 0");
  if (!(eps_feas >= 0.0) || !(qp_tol > 0.0) || qp_max_iter < 1) throw Error(ErrorCode::BadConfig, "bad QP tolerances");
  if (!(clip_norm >= 0.0)) throw Error(ErrorCode::BadConfig, "clip_norm must be >= 0");
}

}  // namespace dgsm
