#pragma once

#include "dgsm/feed_forward.hpp"
#include "dgsm/scenario_data.hpp"
#include "dgsm/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace dgsm {

struct BivariateGaussianStep {
  double mu_x = 0.0;
  double mu_y = 0.0;
  double sigma_x = 1.0;
  double sigma_y = 1.0;
  double rho = 0.0;
};

struct PredictionDistribution {
  std::vector<BivariateGaussianStep> steps;
};

struct ParameterVector {
  Vector values;
};

struct GradientVector {
  Vector values;
};

struct LossGradient {
  double loss = 0.0;
  GradientVector gradient;
};

/// Negative log density of (x, y) under one bivariate Gaussian step.
double bivariate_nll(const BivariateGaussianStep& step, double x, double y);

struct PredictorConfig {
  Index history_frames = 20;
  Index future_frames = 40;
  Index max_neighbors = 5;
  Index encoder_hidden = 32;
  Index embedding = 16;
  Index decoder_hidden = 64;
  // Express inputs and means relative to the target's last observed position
  // (scaled by position_scale). Off = raw absolute coordinates.
  bool normalize = true;
  double position_scale = 10.0;

  void validate() const;
};

/// Reference interaction-aware predictor: a shared per-vehicle history
/// encoder, masked mean-pooling over present neighbours, and a decoder that
/// emits (mu_x, mu_y, sigma_x, sigma_y, rho) for every future frame.
class Predictor {
 public:
  using Sample = TrajectorySample;

  static constexpr Index kParamsPerStep = 5;
  static constexpr double kSigmaMin = 1e-3;
  static constexpr double kSigmaMax = 1e3;
  static constexpr double kRhoLimit = 0.99;

  explicit Predictor(PredictorConfig config = {});

  const PredictorConfig& config() const { return config_; }
  Index parameter_count() const { return encoder_.parameter_count() + decoder_.parameter_count(); }
  const ParameterLayout& layout() const { return layout_; }

  ParameterVector initial_parameters(std::uint64_t seed) const;
  void zero_output_layer(ParameterVector& theta) const;

  PredictionDistribution forward(const ParameterVector& theta, const TrajectorySample& sample) const;
  std::vector<PredictionDistribution> forward(const ParameterVector& theta,
                                              std::span<const TrajectorySample> batch) const;

  /// Mean over samples and future steps of the per-step negative log-likelihood.
  double nll_loss(const ParameterVector& theta, std::span<const TrajectorySample> batch) const;
  LossGradient loss_gradient(const ParameterVector& theta, std::span<const TrajectorySample> batch) const;

 private:
  struct Pass;
  Pass run_forward(const ParameterVector& theta, std::span<const TrajectorySample> batch, bool keep_cache) const;
  double reduce_loss(const Pass& pass, std::span<const TrajectorySample> batch, Matrix* d_raw) const;
  void check_theta(const ParameterVector& theta) const;

  PredictorConfig config_;
  FeedForward encoder_;
  FeedForward decoder_;
  ParameterLayout layout_;
};

ParameterVector sgd_step(const ParameterVector& theta, const GradientVector& gradient, double learning_rate);

Trajectory mean_trajectory(const PredictionDistribution& dist);

}  // namespace dgsm
