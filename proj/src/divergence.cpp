#include "dgsm/divergence.hpp"

#include "dgsm/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace dgsm {

namespace {

const double kLogTwoPi = std::log(2.0 * std::numbers::pi);

double log_sum_exp(const Eigen::Ref<const Vector>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

// ---------------------------------------------------------------------------
// Interaction graph

InteractionLaplacian interaction_laplacian(std::span<const std::optional<Trajectory>> histories, double lambda_decay,
                                           double far_distance) {
  if (!(lambda_decay > 0.0) || !(lambda_decay <= 1.0))
    throw Error(ErrorCode::BadLambda, "lambda_decay must lie in (0, 1], got " + std::to_string(lambda_decay));
  const auto n = static_cast<Index>(histories.size());
  if (n == 0) throw Error(ErrorCode::ShapeMismatch, "interaction graph needs at least one vehicle slot");

  Index frames = -1;
  for (const auto& h : histories) {
    if (!h) continue;
    if (h->rows() < 1) throw Error(ErrorCode::ShapeMismatch, "empty vehicle history");
    if (frames >= 0 && h->rows() != frames) throw Error(ErrorCode::ShapeMismatch, "vehicle histories differ in length");
    frames = h->rows();
  }

  Vector weights = Vector::Zero(std::max<Index>(frames, 1));
  for (Index k = 0; k < weights.size(); ++k) weights[k] = std::pow(lambda_decay, static_cast<double>(weights.size() - 1 - k));
  const double weight_sum = weights.sum();

  InteractionLaplacian g;
  g.lambda_decay = lambda_decay;
  g.affinity = Matrix::Identity(n, n);
  const double far = std::exp(-far_distance);
  for (Index i = 0; i < n; ++i) {
    const auto& hi = histories[static_cast<std::size_t>(i)];
    if (!hi) g.imputed = true;
    for (Index j = i + 1; j < n; ++j) {
      const auto& hj = histories[static_cast<std::size_t>(j)];
      double a = far;
      if (hi && hj) {
        const Vector dist = (*hi - *hj).rowwise().norm();
        a = std::max(std::exp(-weights.dot(dist) / weight_sum), far);
      }
      g.affinity(i, j) = a;
      g.affinity(j, i) = a;
    }
  }
  const Vector degree = g.affinity.rowwise().sum();
  g.laplacian = Matrix(degree.asDiagonal()) - g.affinity;
  return g;
}

SpectralFeatures spectral_features(const InteractionLaplacian& graph, Index k) {
  const Index n = graph.laplacian.rows();
  if (k < 0 || k > n)
    throw Error(ErrorCode::KTooLarge, "requested " + std::to_string(k) + " eigenvectors of a " + std::to_string(n) +
                                          "-vertex graph");

  Eigen::SelfAdjointEigenSolver<Matrix> solver(graph.laplacian);
  const Vector& values = solver.eigenvalues();
  Matrix vectors = solver.eigenvectors();

  for (Index c = 0; c < n; ++c) {
    auto v = vectors.col(c);
    const double peak = v.cwiseAbs().maxCoeff();
    Index lead = 0;
    while (lead < n && std::abs(v[lead]) < peak * (1.0 - 1e-10)) ++lead;
    if (lead < n && v[lead] < 0.0) v = -v;
  }

  const double scale = n > 0 ? values.cwiseAbs().maxCoeff() : 0.0;
  const double tie = 1e-10 * scale;
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (std::abs(values[a] - values[b]) > tie) return values[a] < values[b];
    for (Index r = 0; r < n; ++r) {
      if (vectors(r, a) != vectors(r, b)) return vectors(r, a) < vectors(r, b);
    }
    return false;
  });

  SpectralFeatures out;
  out.eigenvalues.resize(k);
  out.vectors.resize(n, k);
  for (Index c = 0; c < k; ++c) {
    out.eigenvalues[c] = values[order[static_cast<std::size_t>(c)]];
    out.vectors.col(c) = vectors.col(order[static_cast<std::size_t>(c)]);
  }
  return out;
}

void ConditionConfig::validate() const {
  if (neighbors < 1) throw Error(ErrorCode::ShapeMismatch, "condition needs at least one neighbour slot");
  if (eigenvectors < 0 || eigenvectors > neighbors) throw Error(ErrorCode::KTooLarge, "eigenvectors must not exceed neighbors");
  if (downsample < 1) throw Error(ErrorCode::ShapeMismatch, "downsample factor must be >= 1");
  if (!(lambda_decay > 0.0) || !(lambda_decay <= 1.0)) throw Error(ErrorCode::BadLambda, "lambda_decay must lie in (0, 1]");
}

std::vector<Index> downsample_indices(Index frames, Index factor) {
  std::vector<Index> out;
  for (Index i = frames - 1; i >= 0; i -= factor) out.push_back(i);
  std::reverse(out.begin(), out.end());
  return out;
}

Index ConditionConfig::condition_dim(Index history_frames) const {
  return 2 * static_cast<Index>(downsample_indices(history_frames, downsample).size()) + eigenvectors * neighbors;
}

Index ConditionConfig::future_dim(Index future_frames) const {
  return 2 * static_cast<Index>(downsample_indices(future_frames, downsample).size());
}

DivergenceCase build_condition(const TrajectorySample& sample, const ConditionConfig& config) {
  config.validate();
  const Index h = sample.target_history.rows();
  if (h < 1 || sample.target_future.rows() < 1) throw Error(ErrorCode::ShapeMismatch, "sample has empty windows");
  const auto hist_idx = downsample_indices(h, config.downsample);
  const auto fut_idx = downsample_indices(sample.target_future.rows(), config.downsample);

  Eigen::RowVector2d anchor = Eigen::RowVector2d::Zero();
  if (config.relative) anchor = sample.target_history.row(h - 1);

  auto pick = [&](const Trajectory& traj, const std::vector<Index>& idx) {
    Trajectory out(static_cast<Index>(idx.size()), 2);
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = traj.row(idx[i]);
    return out;
  };

  std::vector<std::optional<Trajectory>> neighbors(static_cast<std::size_t>(config.neighbors));
  for (std::size_t j = 0; j < neighbors.size() && j < sample.neighbor_histories.size(); ++j) {
    const auto& nb = sample.neighbor_histories[j];
    if (!nb) continue;
    if (nb->rows() != h) throw Error(ErrorCode::ShapeMismatch, "neighbour history length mismatch");
    neighbors[j] = pick(*nb, hist_idx);
  }
  const auto graph = interaction_laplacian(neighbors, config.lambda_decay, config.far_distance);
  const auto spectral = spectral_features(graph, config.eigenvectors);

  DivergenceCase out;
  out.imputed = graph.imputed;
  const auto hn = static_cast<Index>(hist_idx.size());
  out.condition.resize(2 * hn + config.eigenvectors * config.neighbors);
  for (Index i = 0; i < hn; ++i) {
    const Eigen::RowVector2d p = sample.target_history.row(hist_idx[static_cast<std::size_t>(i)]) - anchor;
    out.condition[2 * i] = p.x();
    out.condition[2 * i + 1] = p.y();
  }
  for (Index c = 0; c < config.eigenvectors; ++c)
    out.condition.segment(2 * hn + c * config.neighbors, config.neighbors) = spectral.vectors.col(c);

  const auto fn = static_cast<Index>(fut_idx.size());
  out.future.resize(2 * fn);
  for (Index i = 0; i < fn; ++i) {
    const Eigen::RowVector2d p = sample.target_future.row(fut_idx[static_cast<std::size_t>(i)]) - anchor;
    out.future[2 * i] = p.x();
    out.future[2 * i + 1] = p.y();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Mixtures

double GaussianMixture::log_density(const Eigen::Ref<const Vector>& y) const {
  if (y.size() != dimension()) throw Error(ErrorCode::DimensionMismatch, "mixture evaluated at a point of wrong dimension");
  Vector terms(components());
  for (Index k = 0; k < components(); ++k) {
    if (weights[k] <= 0.0) {
      terms[k] = -std::numeric_limits<double>::infinity();
      continue;
    }
    const auto var = variances.row(k).transpose().array();
    const auto diff = y.array() - means.row(k).transpose().array();
    terms[k] = std::log(weights[k]) - 0.5 * ((kLogTwoPi + var.log()) + diff.square() / var).sum();
  }
  return log_sum_exp(terms);
}

Vector GaussianMixture::sample(Rng& rng) const {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double u = unit(rng) * weights.sum();
  Index k = 0;
  double acc = weights[0];
  while (k + 1 < components() && u >= acc) acc += weights[++k];
  Vector y(dimension());
  for (Index j = 0; j < dimension(); ++j) y[j] = means(k, j) + std::sqrt(variances(k, j)) * normal(rng);
  return y;
}

void MdnConfig::validate() const {
  if (components < 1 || hidden < 1 || epochs < 0 || batch_size < 1 || min_cases_per_component < 0)
    throw Error(ErrorCode::BadConfig, "MDN dimensions must be positive");
  if (!(variance_floor > 0.0)) throw Error(ErrorCode::BadConfig, "variance_floor must be positive");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::BadConfig, "MDN learning rate must be positive");
}

namespace {
// exp() argument cap for the variance head
constexpr double kMaxLogVariance = 30.0;
}  // namespace

MdnModel::MdnModel(Index condition_dim, Index output_dim, const MdnConfig& config)
    : condition_dim_(condition_dim),
      output_dim_(output_dim),
      components_(config.components),
      variance_floor_(config.variance_floor),
      net_("mdn",
           {{condition_dim, config.hidden, Activation::Tanh},
            {config.hidden, config.components * (1 + 2 * output_dim), Activation::Identity}},
           0),
      params_(Vector::Zero(net_.parameter_count())),
      in_mean_(Vector::Zero(condition_dim)),
      in_scale_(Vector::Ones(condition_dim)),
      out_mean_(Vector::Zero(output_dim)),
      out_scale_(Vector::Ones(output_dim)) {
  auto rng = make_rng(config.seed, {0x3d11u});
  net_.initialize(params_, rng);
}

void MdnModel::set_normalization(Vector in_mean, Vector in_scale, Vector out_mean, Vector out_scale) {
  if (in_mean.size() != condition_dim_ || in_scale.size() != condition_dim_ || out_mean.size() != output_dim_ ||
      out_scale.size() != output_dim_)
    throw Error(ErrorCode::ShapeMismatch, "normalization vectors do not match model dimensions");
  in_mean_ = std::move(in_mean);
  in_scale_ = std::move(in_scale);
  out_mean_ = std::move(out_mean);
  out_scale_ = std::move(out_scale);
}

Matrix MdnModel::raw_outputs(const Matrix& conditions, FeedForward::Cache* cache) const {
  Matrix x = (conditions.colwise() - in_mean_).array().colwise() / in_scale_.array();
  return net_.forward(params_, x, cache);
}

GaussianMixture MdnModel::mixture_at(const Eigen::Ref<const Vector>& condition) const {
  if (condition.size() != condition_dim_)
    throw Error(ErrorCode::ShapeMismatch, "condition has " + std::to_string(condition.size()) + " entries, model expects " +
                                              std::to_string(condition_dim_));
  const Matrix raw = raw_outputs(Matrix(condition), nullptr);
  const Index k = components_;
  const Index d = output_dim_;

  GaussianMixture g;
  const Vector logits = raw.col(0).head(k);
  const double m = logits.maxCoeff();
  g.weights = (logits.array() - m).exp();
  g.weights /= g.weights.sum();
  g.means.resize(k, d);
  g.variances.resize(k, d);
  for (Index c = 0; c < k; ++c) {
    for (Index j = 0; j < d; ++j) {
      g.means(c, j) = out_mean_[j] + out_scale_[j] * raw(k + c * d + j, 0);
      const double lv = std::min(raw(k + k * d + c * d + j, 0), kMaxLogVariance);
      g.variances(c, j) = variance_floor_ + out_scale_[j] * out_scale_[j] * std::exp(lv);
    }
  }
  return g;
}

double MdnModel::loss_gradient(std::span<const DivergenceCase> cases, Vector* gradient) const {
  if (cases.empty()) throw Error(ErrorCode::EmptyBatch, "MDN loss on an empty batch");
  const auto b = static_cast<Index>(cases.size());
  const Index k = components_;
  const Index d = output_dim_;

  Matrix conditions(condition_dim_, b);
  for (Index s = 0; s < b; ++s) {
    const auto& c = cases[static_cast<std::size_t>(s)];
    if (c.condition.size() != condition_dim_ || c.future.size() != output_dim_)
      throw Error(ErrorCode::DimensionMismatch, "case dimensions do not match the model");
    conditions.col(s) = c.condition;
  }
  FeedForward::Cache cache;
  const Matrix raw = raw_outputs(conditions, gradient ? &cache : nullptr);
  Matrix d_raw;
  if (gradient) d_raw = Matrix::Zero(raw.rows(), raw.cols());

  const double inv_b = 1.0 / static_cast<double>(b);
  double total = 0.0;
  Vector log_terms(k);
  Matrix mu(k, d), var(k, d);
  for (Index s = 0; s < b; ++s) {
    const Vector& y = cases[static_cast<std::size_t>(s)].future;
    const auto logits = raw.col(s).head(k);
    const double m = logits.maxCoeff();
    const double log_norm = m + std::log((logits.array() - m).exp().sum());
    for (Index c = 0; c < k; ++c) {
      double acc = logits[c] - log_norm;
      for (Index j = 0; j < d; ++j) {
        mu(c, j) = out_mean_[j] + out_scale_[j] * raw(k + c * d + j, s);
        const double lv = std::min(raw(k + k * d + c * d + j, s), kMaxLogVariance);
        var(c, j) = variance_floor_ + out_scale_[j] * out_scale_[j] * std::exp(lv);
        const double diff = y[j] - mu(c, j);
        acc -= 0.5 * (kLogTwoPi + std::log(var(c, j)) + diff * diff / var(c, j));
      }
      log_terms[c] = acc;
    }
    const double lse = log_sum_exp(log_terms);
    total -= lse;

    if (gradient) {
      for (Index c = 0; c < k; ++c) {
        const double resp = std::exp(log_terms[c] - lse);
        const double weight = std::exp(logits[c] - log_norm);
        d_raw(c, s) = inv_b * (weight - resp);
        for (Index j = 0; j < d; ++j) {
          const double diff = y[j] - mu(c, j);
          d_raw(k + c * d + j, s) = inv_b * (-resp * diff / var(c, j)) * out_scale_[j];
          const Index r = k + k * d + c * d + j;
          if (raw(r, s) < kMaxLogVariance) {
            const double d_var = resp * 0.5 * (1.0 / var(c, j) - diff * diff / (var(c, j) * var(c, j)));
            d_raw(r, s) = inv_b * d_var * (var(c, j) - variance_floor_);
          }
        }
      }
    }
  }
  if (gradient) {
    gradient->setZero(params_.size());
    net_.backward(params_, cache, d_raw, *gradient);
  }
  return total * inv_b;
}

MdnModel fit_mdn(std::span<const DivergenceCase> cases, const MdnConfig& config, MdnFitReport* report) {
  config.validate();
  const auto n = static_cast<Index>(cases.size());
  if (n < config.min_cases())
    throw Error(ErrorCode::InsufficientData, "MDN with " + std::to_string(config.components) + " components needs >= " +
                                                 std::to_string(config.min_cases()) + " cases, got " +
                                                 std::to_string(n));
  if (n == 0) throw Error(ErrorCode::InsufficientData, "no cases");
  const Index cdim = cases.front().condition.size();
  const Index ddim = cases.front().future.size();
  for (const auto& c : cases) {
    if (c.condition.size() != cdim || c.future.size() != ddim)
      throw Error(ErrorCode::DimensionMismatch, "cases differ in dimension");
  }

  Vector in_mean = Vector::Zero(cdim), in_sq = Vector::Zero(cdim);
  Vector out_mean = Vector::Zero(ddim), out_sq = Vector::Zero(ddim);
  for (const auto& c : cases) {
    in_mean += c.condition;
    in_sq += c.condition.cwiseAbs2();
    out_mean += c.future;
    out_sq += c.future.cwiseAbs2();
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  in_mean *= inv_n;
  out_mean *= inv_n;
  auto scale_of = [inv_n](const Vector& sq, const Vector& mean) {
    Vector s = (sq * inv_n - mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
    for (Index i = 0; i < s.size(); ++i) s[i] = s[i] > 1e-8 ? s[i] : 1.0;
    return s;
  };

  MdnModel model(cdim, ddim, config);
  model.set_normalization(in_mean, scale_of(in_sq, in_mean), out_mean, scale_of(out_sq, out_mean));

  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Vector m1 = Vector::Zero(model.parameter_count());
  Vector m2 = Vector::Zero(model.parameter_count());
  Vector grad;
  Index step = 0;

  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<DivergenceCase> batch;
  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    auto rng = make_rng(config.seed, {0xe90cu, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (Index start = 0; start < n; start += config.batch_size) {
      const Index end = std::min(n, start + config.batch_size);
      batch.clear();
      for (Index i = start; i < end; ++i) batch.push_back(cases[order[static_cast<std::size_t>(i)]]);
      const double loss = model.loss_gradient(batch, &grad);
      if (!std::isfinite(loss) || !grad.allFinite())
        throw Error(ErrorCode::NonFiniteLoss, "MDN loss diverged in epoch " + std::to_string(epoch));
      epoch_loss += loss * static_cast<double>(end - start);

      ++step;
      m1 = beta1 * m1 + (1.0 - beta1) * grad;
      m2 = beta2 * m2 + (1.0 - beta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      model.parameters().array() -=
          config.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps);
    }
    if (report) report->epoch_losses.push_back(epoch_loss * inv_n);
  }
  return model;
}

// ---------------------------------------------------------------------------
// Monte-Carlo divergences

KldEstimate mc_kld(const GaussianMixture& p1, const GaussianMixture& p2, Index n_mc, Rng& rng,
                   double log_density_floor) {
  if (p1.dimension() != p2.dimension())
    throw Error(ErrorCode::DimensionMismatch, "mixtures of dimension " + std::to_string(p1.dimension()) + " and " +
                                                  std::to_string(p2.dimension()));
  if (n_mc < 1) throw Error(ErrorCode::BadConfig, "n_mc must be >= 1");

  KldEstimate est;
  std::vector<double> ratios(static_cast<std::size_t>(n_mc));
  for (auto& r : ratios) {
    const Vector y = p1.sample(rng);
    double lp1 = p1.log_density(y);
    double lp2 = p2.log_density(y);
    // both sides are floored so p1 == p2 still cancels exactly
    lp1 = std::max(lp1, log_density_floor);
    if (lp2 < log_density_floor) {
      lp2 = log_density_floor;
      ++est.floored;
    }
    r = lp1 - lp2;
  }
  const double n = static_cast<double>(n_mc);
  double sum = 0.0;
  for (double r : ratios) sum += r;
  est.value = sum / n;
  if (n_mc > 1) {
    double ss = 0.0;
    for (double r : ratios) ss += (r - est.value) * (r - est.value);
    est.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
  est.evaluations = static_cast<std::size_t>(n_mc);
  return est;
}

KldEstimate mc_kld(const GaussianMixture& p1, const GaussianMixture& p2, Index n_mc, std::uint64_t seed,
                   double log_density_floor) {
  auto rng = make_rng(seed);
  return mc_kld(p1, p2, n_mc, rng, log_density_floor);
}

KldEstimate ckld(const MdnModel& model_1, const MdnModel& model_2, std::span<const Vector> conditions, Index n_mc,
                 std::uint64_t seed, double log_density_floor) {
  if (model_1.condition_dim() != model_2.condition_dim() || model_1.output_dim() != model_2.output_dim())
    throw Error(ErrorCode::DimensionMismatch, "models disagree on condition or output dimension");
  if (conditions.empty()) throw Error(ErrorCode::EmptyConditions, "ckld needs at least one condition");

  KldEstimate out;
  double sum = 0.0;
  double var_sum = 0.0;
  for (const auto& x : conditions) {
    auto rng = make_rng(seed, {hash_values(x)});
    const auto term = mc_kld(model_1.mixture_at(x), model_2.mixture_at(x), n_mc, rng, log_density_floor);
    sum += term.value;
    var_sum += term.std_error * term.std_error;
    out.floored += term.floored;
    out.evaluations += term.evaluations;
  }
  const double n = static_cast<double>(conditions.size());
  out.value = sum / n;
  out.std_error = std::sqrt(var_sum) / n;
  return out;
}

double weighted_ckld(double ckld_12, double ckld_21, double w1) {
  if (!(w1 >= 0.0) || !(w1 <= 1.0)) throw Error(ErrorCode::BadWeight, "w1 must lie in [0, 1], got " + std::to_string(w1));
  return w1 * ckld_12 + (1.0 - w1) * ckld_21;
}

// ---------------------------------------------------------------------------
// Scenario-level pipeline

void DivergenceConfig::validate() const {
  condition.validate();
  mdn.validate();
  if (n_mc < 1 || max_conditions < 1) throw Error(ErrorCode::BadConfig, "n_mc and max_conditions must be >= 1");
  if (!(w1 >= 0.0) || !(w1 <= 1.0)) throw Error(ErrorCode::BadWeight, "w1 must lie in [0, 1]");
}

ScenarioDensity fit_scenario_density(int scenario_id, const std::string& name, std::span<const TrajectorySample> samples,
                                     const DivergenceConfig& config) {
  config.validate();
  ScenarioDensity out;
  out.scenario_id = scenario_id;
  out.name = name;

  std::vector<DivergenceCase> cases;
  cases.reserve(samples.size());
  for (const auto& s : samples) {
    cases.push_back(build_condition(s, config.condition));
    if (cases.back().imputed) ++out.imputed_cases;
  }
  out.cases = cases.size();

  MdnFitReport fit;
  out.model = fit_mdn(cases, config.mdn, &fit);
  out.epoch_losses = std::move(fit.epoch_losses);

  std::vector<std::size_t> pick(cases.size());
  std::iota(pick.begin(), pick.end(), std::size_t{0});
  if (static_cast<Index>(pick.size()) > config.max_conditions) {
    auto rng = make_rng(config.seed, {0xc0dau, static_cast<std::uint64_t>(scenario_id)});
    std::shuffle(pick.begin(), pick.end(), rng);
    pick.resize(static_cast<std::size_t>(config.max_conditions));
    std::sort(pick.begin(), pick.end());
  }
  for (auto i : pick) out.conditions.push_back(cases[i].condition);
  return out;
}

double DivergenceReport::weighted_between(int highlighted, int other) const {
  auto find = [this](int id) {
    auto it = std::find(scenario_ids.begin(), scenario_ids.end(), id);
    if (it == scenario_ids.end()) throw Error(ErrorCode::UnknownScenario, "scenario " + std::to_string(id) + " not in report");
    return static_cast<Index>(it - scenario_ids.begin());
  };
  return weighted(find(highlighted), find(other));
}

DivergenceReport measure_divergence(std::span<const ScenarioDensity> densities, const DivergenceConfig& config) {
  config.validate();
  const auto n = static_cast<Index>(densities.size());
  DivergenceReport r;
  r.config = config;
  r.w1 = config.w1;
  r.n_mc = config.n_mc;
  r.log_density_floor = config.log_density_floor;
  r.directed = Matrix::Zero(n, n);
  r.std_error = Matrix::Zero(n, n);
  r.weighted = Matrix::Zero(n, n);
  r.floored = Matrix::Zero(n, n);
  for (const auto& d : densities) {
    r.scenario_ids.push_back(d.scenario_id);
    r.names.push_back(d.name);
    r.n_conditions.push_back(d.conditions.size());
    r.case_counts.push_back(d.cases);
    r.imputed_counts.push_back(d.imputed_cases);
  }
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      const auto& a = densities[static_cast<std::size_t>(i)];
      const auto& b = densities[static_cast<std::size_t>(j)];
      const auto est = ckld(a.model, b.model, a.conditions, config.n_mc, config.seed, config.log_density_floor);
      r.directed(i, j) = est.value;
      r.std_error(i, j) = est.std_error;
      r.floored(i, j) = static_cast<double>(est.floored);
    }
  }
  const double w2 = 1.0 - config.w1;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      r.weighted(i, j) = weighted_ckld(r.directed(i, j), r.directed(j, i), config.w1);
      const double se = std::sqrt(config.w1 * config.w1 * r.std_error(i, j) * r.std_error(i, j) +
                                  w2 * w2 * r.std_error(j, i) * r.std_error(j, i));
      r.noise_bound = std::max(r.noise_bound, 3.0 * se);
    }
  }
  return r;
}

}  // namespace dgsm
