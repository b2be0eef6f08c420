#include "dgsm/predictor.hpp"

#include "dgsm/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dgsm {

namespace {

const double kLogTwoPi = std::log(2.0 * std::numbers::pi);

struct StepMap {
  double value;
  double derivative;  // d value / d raw
};

StepMap sigma_map(double raw, double log_scale) {
  static const double lo = std::log(Predictor::kSigmaMin);
  static const double hi = std::log(Predictor::kSigmaMax);
  const double z = raw + log_scale;
  if (z <= lo) return {Predictor::kSigmaMin, 0.0};
  if (z >= hi) return {Predictor::kSigmaMax, 0.0};
  const double s = std::exp(z);
  return {s, s};
}

StepMap rho_map(double raw) {
  const double t = std::tanh(raw);
  return {Predictor::kRhoLimit * t, Predictor::kRhoLimit * (1.0 - t * t)};
}

}  // namespace

double bivariate_nll(const BivariateGaussianStep& s, double x, double y) {
  const double ux = (x - s.mu_x) / s.sigma_x;
  const double uy = (y - s.mu_y) / s.sigma_y;
  const double q = 1.0 - s.rho * s.rho;
  const double z = ux * ux + uy * uy - 2.0 * s.rho * ux * uy;
  return kLogTwoPi + std::log(s.sigma_x) + std::log(s.sigma_y) + 0.5 * std::log(q) + z / (2.0 * q);
}

void PredictorConfig::validate() const {
  if (history_frames < 1 || future_frames < 1 || max_neighbors < 0 || encoder_hidden < 1 || embedding < 1 ||
      decoder_hidden < 1)
    throw Error(ErrorCode::ShapeMismatch, "predictor dimensions must be positive");
  if (!(position_scale > 0.0)) throw Error(ErrorCode::ShapeMismatch, "position_scale must be positive");
}

Predictor::Predictor(PredictorConfig config) : config_(config) {
  config_.validate();
  const Index in = 2 * config_.history_frames;
  encoder_ = FeedForward("encoder",
                         {{in, config_.encoder_hidden, Activation::Tanh},
                          {config_.encoder_hidden, config_.embedding, Activation::Tanh}},
                         0);
  decoder_ = FeedForward("decoder",
                         {{2 * config_.embedding, config_.decoder_hidden, Activation::Tanh},
                          {config_.decoder_hidden, kParamsPerStep * config_.future_frames, Activation::Identity}},
                         encoder_.parameter_count());
  encoder_.append_layout(layout_);
  decoder_.append_layout(layout_);
}

ParameterVector Predictor::initial_parameters(std::uint64_t seed) const {
  ParameterVector theta{Vector::Zero(parameter_count())};
  auto rng = make_rng(seed, {0x9e3du});
  encoder_.initialize(theta.values, rng);
  decoder_.initialize(theta.values, rng);
  return theta;
}

void Predictor::zero_output_layer(ParameterVector& theta) const {
  check_theta(theta);
  decoder_.zero_output_layer(theta.values);
}

void Predictor::check_theta(const ParameterVector& theta) const {
  if (theta.values.size() != parameter_count())
    throw Error(ErrorCode::ShapeMismatch, "parameter vector has " + std::to_string(theta.values.size()) +
                                              " entries, expected " + std::to_string(parameter_count()));
}

struct Predictor::Pass {
  Index batch = 0;
  Matrix anchor;         // 2 x B
  Matrix mask;           // N x B, 1 for present neighbours
  Vector inv_count;      // B, 1 / max(1, present)
  FeedForward::Cache encoder_cache;
  FeedForward::Cache decoder_cache;
  Matrix raw;            // 5F x B
};

Predictor::Pass Predictor::run_forward(const ParameterVector& theta, std::span<const TrajectorySample> batch,
                                       bool keep_cache) const {
  check_theta(theta);
  const Index h = config_.history_frames;
  const Index n = config_.max_neighbors;
  const Index b = static_cast<Index>(batch.size());
  const double scale = config_.normalize ? config_.position_scale : 1.0;

  Pass pass;
  pass.batch = b;
  pass.anchor = Matrix::Zero(2, b);
  pass.mask = Matrix::Zero(n, b);
  pass.inv_count = Vector::Ones(b);

  // columns: B targets, then B*N neighbour slots (sample-major)
  Matrix features = Matrix::Zero(2 * h, b * (1 + n));
  auto write = [&](Index col, const Trajectory& traj, const Eigen::Vector2d& anchor) {
    for (Index k = 0; k < h; ++k) {
      features(2 * k, col) = (traj(k, 0) - anchor.x()) / scale;
      features(2 * k + 1, col) = (traj(k, 1) - anchor.y()) / scale;
    }
  };

  for (Index s = 0; s < b; ++s) {
    const auto& sample = batch[static_cast<std::size_t>(s)];
    if (sample.target_history.rows() != h)
      throw Error(ErrorCode::ShapeMismatch, "target history has " + std::to_string(sample.target_history.rows()) +
                                                " frames, expected " + std::to_string(h));
    Eigen::Vector2d anchor = Eigen::Vector2d::Zero();
    if (config_.normalize) anchor = sample.target_history.row(h - 1).transpose();
    pass.anchor.col(s) = anchor;
    write(s, sample.target_history, anchor);

    Index present = 0;
    const auto slots = std::min<std::size_t>(sample.neighbor_histories.size(), static_cast<std::size_t>(n));
    for (std::size_t j = 0; j < slots; ++j) {
      const auto& neighbor = sample.neighbor_histories[j];
      if (!neighbor) continue;
      if (neighbor->rows() != h) throw Error(ErrorCode::ShapeMismatch, "neighbour history length mismatch");
      const Index col = b + s * n + static_cast<Index>(j);
      write(col, *neighbor, anchor);
      pass.mask(static_cast<Index>(j), s) = 1.0;
      ++present;
    }
    pass.inv_count[s] = 1.0 / static_cast<double>(std::max<Index>(1, present));
  }

  const Matrix encoded = encoder_.forward(theta.values, features, keep_cache ? &pass.encoder_cache : nullptr);
  const Index e = config_.embedding;
  Matrix decoder_in(2 * e, b);
  decoder_in.topRows(e) = encoded.leftCols(b);
  for (Index s = 0; s < b; ++s) {
    Vector pooled = Vector::Zero(e);
    for (Index j = 0; j < n; ++j) {
      if (pass.mask(j, s) != 0.0) pooled += encoded.col(b + s * n + j);
    }
    decoder_in.block(e, s, e, 1) = pooled * pass.inv_count[s];
  }
  pass.raw = decoder_.forward(theta.values, decoder_in, keep_cache ? &pass.decoder_cache : nullptr);
  return pass;
}

namespace {

BivariateGaussianStep map_step(const Matrix& raw, Index t, Index s, const Eigen::Vector2d& anchor, double scale,
                               double log_scale) {
  const Index r = Predictor::kParamsPerStep * t;
  BivariateGaussianStep step;
  step.mu_x = anchor.x() + scale * raw(r, s);
  step.mu_y = anchor.y() + scale * raw(r + 1, s);
  step.sigma_x = sigma_map(raw(r + 2, s), log_scale).value;
  step.sigma_y = sigma_map(raw(r + 3, s), log_scale).value;
  step.rho = rho_map(raw(r + 4, s)).value;
  return step;
}

}  // namespace

std::vector<PredictionDistribution> Predictor::forward(const ParameterVector& theta,
                                                       std::span<const TrajectorySample> batch) const {
  const Pass pass = run_forward(theta, batch, false);
  const double scale = config_.normalize ? config_.position_scale : 1.0;
  const double log_scale = std::log(scale);
  std::vector<PredictionDistribution> out(batch.size());
  for (Index s = 0; s < pass.batch; ++s) {
    auto& steps = out[static_cast<std::size_t>(s)].steps;
    steps.reserve(static_cast<std::size_t>(config_.future_frames));
    const Eigen::Vector2d anchor = pass.anchor.col(s);
    for (Index t = 0; t < config_.future_frames; ++t) steps.push_back(map_step(pass.raw, t, s, anchor, scale, log_scale));
  }
  return out;
}

PredictionDistribution Predictor::forward(const ParameterVector& theta, const TrajectorySample& sample) const {
  return forward(theta, std::span<const TrajectorySample>(&sample, 1)).front();
}

double Predictor::reduce_loss(const Pass& pass, std::span<const TrajectorySample> batch, Matrix* d_raw) const {
  const Index f = config_.future_frames;
  const double scale = config_.normalize ? config_.position_scale : 1.0;
  const double log_scale = std::log(scale);
  const double norm = 1.0 / static_cast<double>(pass.batch * f);
  if (d_raw) d_raw->setZero(pass.raw.rows(), pass.raw.cols());

  double total = 0.0;
  for (Index s = 0; s < pass.batch; ++s) {
    const auto& future = batch[static_cast<std::size_t>(s)].target_future;
    if (future.rows() != f)
      throw Error(ErrorCode::ShapeMismatch, "target future has " + std::to_string(future.rows()) +
                                                " frames, expected " + std::to_string(f));
    for (Index t = 0; t < f; ++t) {
      const Index r = kParamsPerStep * t;
      const double mx = pass.anchor(0, s) + scale * pass.raw(r, s);
      const double my = pass.anchor(1, s) + scale * pass.raw(r + 1, s);
      const auto sx = sigma_map(pass.raw(r + 2, s), log_scale);
      const auto sy = sigma_map(pass.raw(r + 3, s), log_scale);
      const auto rh = rho_map(pass.raw(r + 4, s));

      const double ux = (future(t, 0) - mx) / sx.value;
      const double uy = (future(t, 1) - my) / sy.value;
      const double q = 1.0 - rh.value * rh.value;
      const double z = ux * ux + uy * uy - 2.0 * rh.value * ux * uy;
      total += kLogTwoPi + std::log(sx.value) + std::log(sy.value) + 0.5 * std::log(q) + z / (2.0 * q);

      if (d_raw) {
        const double ax = ux - rh.value * uy;
        const double ay = uy - rh.value * ux;
        auto& d = *d_raw;
        d(r, s) = norm * scale * (-ax / (sx.value * q));
        d(r + 1, s) = norm * scale * (-ay / (sy.value * q));
        // d/dsigma * sigma, zero where the clamp is active
        d(r + 2, s) = sx.derivative == 0.0 ? 0.0 : norm * (1.0 - ax * ux / q);
        d(r + 3, s) = sy.derivative == 0.0 ? 0.0 : norm * (1.0 - ay * uy / q);
        const double d_rho = -rh.value / q - ux * uy / q + rh.value * z / (q * q);
        d(r + 4, s) = norm * d_rho * rh.derivative;
      }
    }
  }
  return total * norm;
}

double Predictor::nll_loss(const ParameterVector& theta, std::span<const TrajectorySample> batch) const {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "nll_loss on an empty batch");
  const Pass pass = run_forward(theta, batch, false);
  const double loss = reduce_loss(pass, batch, nullptr);
  if (!std::isfinite(loss)) throw Error(ErrorCode::NonFiniteLoss, "predictor loss is not finite");
  return loss;
}

LossGradient Predictor::loss_gradient(const ParameterVector& theta, std::span<const TrajectorySample> batch) const {
  if (batch.empty()) throw Error(ErrorCode::EmptyBatch, "loss_gradient on an empty batch");
  const Pass pass = run_forward(theta, batch, true);
  Matrix d_raw;
  LossGradient out;
  out.loss = reduce_loss(pass, batch, &d_raw);
  if (!std::isfinite(out.loss)) throw Error(ErrorCode::NonFiniteLoss, "predictor loss is not finite");

  out.gradient.values = Vector::Zero(parameter_count());
  const Matrix d_decoder_in = decoder_.backward(theta.values, pass.decoder_cache, d_raw, out.gradient.values);

  const Index b = pass.batch;
  const Index n = config_.max_neighbors;
  const Index e = config_.embedding;
  Matrix d_encoded = Matrix::Zero(e, b * (1 + n));
  d_encoded.leftCols(b) = d_decoder_in.topRows(e);
  for (Index s = 0; s < b; ++s) {
    for (Index j = 0; j < n; ++j) {
      if (pass.mask(j, s) != 0.0) d_encoded.col(b + s * n + j) = d_decoder_in.block(e, s, e, 1) * pass.inv_count[s];
    }
  }
  encoder_.backward(theta.values, pass.encoder_cache, d_encoded, out.gradient.values);
  return out;
}

ParameterVector sgd_step(const ParameterVector& theta, const GradientVector& gradient, double learning_rate) {
  if (theta.values.size() != gradient.values.size())
    throw Error(ErrorCode::ShapeMismatch, "sgd_step: parameter and gradient lengths differ");
  return ParameterVector{theta.values - learning_rate * gradient.values};
}

Trajectory mean_trajectory(const PredictionDistribution& dist) {
  Trajectory out(static_cast<Index>(dist.steps.size()), 2);
  for (std::size_t t = 0; t < dist.steps.size(); ++t) {
    out(static_cast<Index>(t), 0) = dist.steps[t].mu_x;
    out(static_cast<Index>(t), 1) = dist.steps[t].mu_y;
  }
  return out;
}

}  // namespace dgsm
