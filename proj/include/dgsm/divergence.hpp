#pragma once

#include "dgsm/feed_forward.hpp"
#include "dgsm/scenario_data.hpp"
#include "dgsm/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dgsm {

// ---------------------------------------------------------------------------
// Interaction graph

struct InteractionLaplacian {
  Matrix affinity;   // A, symmetric, entries in (0, 1]
  Matrix laplacian;  // L = D - A
  double lambda_decay = 0.9;
  bool imputed = false;  // at least one absent vehicle was filled in
};

/// Exponentially time-weighted mean pairwise distance turned into an
/// affinity, a_ij = exp(-sum_k w_k e_ij(k) / sum_k w_k) with
/// w_k = lambda^(last - k). Absent vehicles get affinity exp(-far_distance)
/// to everyone else so the matrix keeps its N x N size.
InteractionLaplacian interaction_laplacian(std::span<const std::optional<Trajectory>> histories,
                                           double lambda_decay, double far_distance = 100.0);

struct SpectralFeatures {
  Vector eigenvalues;  // k smallest, ascending
  Matrix vectors;      // N x k, unit columns, sign-canonical
};

/// Eigenvectors of the k smallest eigenvalues. Each vector is flipped so its
/// first largest-magnitude entry is positive; exactly tied eigenvalues are
/// ordered lexicographically by their canonical vectors.
SpectralFeatures spectral_features(const InteractionLaplacian& graph, Index k);

struct ConditionConfig {
  Index neighbors = 5;      // N
  Index eigenvectors = 3;   // k
  double lambda_decay = 0.9;
  Index downsample = 5;     // keep every n-th frame, aligned to the window end
  double far_distance = 100.0;
  // Express the target history and future relative to its last observed
  // position. Off = raw absolute coordinates.
  bool relative = true;

  void validate() const;
  Index condition_dim(Index history_frames) const;
  Index future_dim(Index future_frames) const;
};

struct DivergenceCase {
  Vector condition;  // [flattened target history, v_1, ..., v_k]
  Vector future;     // flattened downsampled target future
  bool imputed = false;
};

/// Frame indices kept by temporal downsampling of a length-`frames` window.
std::vector<Index> downsample_indices(Index frames, Index factor);

DivergenceCase build_condition(const TrajectorySample& sample, const ConditionConfig& config);

// ---------------------------------------------------------------------------
// Mixtures and mixture density networks

/// Diagonal-covariance Gaussian mixture.
struct GaussianMixture {
  Vector weights;    // K, on the simplex
  Matrix means;      // K x d
  Matrix variances;  // K x d

  Index components() const { return weights.size(); }
  Index dimension() const { return means.cols(); }

  double log_density(const Eigen::Ref<const Vector>& y) const;
  Vector sample(Rng& rng) const;
};

struct MdnConfig {
  Index components = 20;
  Index hidden = 64;
  double variance_floor = 1e-2;
  Index epochs = 30;
  double learning_rate = 3e-3;
  Index batch_size = 64;
  Index min_cases_per_component = 300;
  std::uint64_t seed = 0;

  Index min_cases() const { return min_cases_per_component * components; }
  void validate() const;
};

/// Conditional mixture density model p(future | condition). Inputs are
/// standardised internally; output means/variances are in data units.
class MdnModel {
 public:
  MdnModel() = default;
  MdnModel(Index condition_dim, Index output_dim, const MdnConfig& config);

  Index condition_dim() const { return condition_dim_; }
  Index output_dim() const { return output_dim_; }
  Index components() const { return components_; }
  double variance_floor() const { return variance_floor_; }
  Index parameter_count() const { return net_.parameter_count(); }

  Vector& parameters() { return params_; }
  const Vector& parameters() const { return params_; }

  void set_normalization(Vector in_mean, Vector in_scale, Vector out_mean, Vector out_scale);

  GaussianMixture mixture_at(const Eigen::Ref<const Vector>& condition) const;

  /// Mean negative log-likelihood over the cases and its gradient w.r.t. parameters.
  double loss_gradient(std::span<const DivergenceCase> cases, Vector* gradient) const;

  const Vector& input_mean() const { return in_mean_; }
  const Vector& input_scale() const { return in_scale_; }
  const Vector& output_mean() const { return out_mean_; }
  const Vector& output_scale() const { return out_scale_; }

 private:
  Matrix raw_outputs(const Matrix& conditions, FeedForward::Cache* cache) const;

  Index condition_dim_ = 0;
  Index output_dim_ = 0;
  Index components_ = 0;
  double variance_floor_ = 1e-2;
  FeedForward net_;
  Vector params_;
  Vector in_mean_, in_scale_, out_mean_, out_scale_;
};

struct MdnFitReport {
  std::vector<double> epoch_losses;
};

/// Fits an MDN by minibatch negative log-likelihood descent (Adam updates).
/// Throws InsufficientData when fewer than components * min_cases_per_component
/// cases are supplied.
MdnModel fit_mdn(std::span<const DivergenceCase> cases, const MdnConfig& config, MdnFitReport* report = nullptr);

// ---------------------------------------------------------------------------
// Monte-Carlo divergences

struct KldEstimate {
  double value = 0.0;
  double std_error = 0.0;      // sample std of the log-ratio / sqrt(n)
  std::size_t floored = 0;     // evaluations of log p2 clamped at the floor
  std::size_t evaluations = 0;
};

constexpr double kDefaultLogDensityFloor = -1e4;

/// (1/n) sum_j [log p1(Y_j) - log p2(Y_j)] with Y_j ~ p1.
KldEstimate mc_kld(const GaussianMixture& p1, const GaussianMixture& p2, Index n_mc, Rng& rng,
                   double log_density_floor = kDefaultLogDensityFloor);
KldEstimate mc_kld(const GaussianMixture& p1, const GaussianMixture& p2, Index n_mc, std::uint64_t seed,
                   double log_density_floor = kDefaultLogDensityFloor);

/// Conditional KLD: mean over conditions of mc_kld(p1(.|x), p2(.|x)). Every
/// condition draws from its own stream keyed on (seed, condition contents).
KldEstimate ckld(const MdnModel& model_1, const MdnModel& model_2, std::span<const Vector> conditions, Index n_mc,
                 std::uint64_t seed, double log_density_floor = kDefaultLogDensityFloor);

double weighted_ckld(double ckld_12, double ckld_21, double w1);

// ---------------------------------------------------------------------------
// Scenario-level pipeline

struct DivergenceConfig {
  ConditionConfig condition;
  MdnConfig mdn;
  Index n_mc = 200;
  Index max_conditions = 2000;
  double w1 = 0.5;
  double log_density_floor = kDefaultLogDensityFloor;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ScenarioDensity {
  int scenario_id = 0;
  std::string name;
  MdnModel model;
  std::vector<Vector> conditions;  // at most max_conditions, chosen uniformly at fixed seed
  std::size_t cases = 0;
  std::size_t imputed_cases = 0;
  std::vector<double> epoch_losses;
};

ScenarioDensity fit_scenario_density(int scenario_id, const std::string& name,
                                     std::span<const TrajectorySample> samples, const DivergenceConfig& config);

struct DivergenceReport {
  std::vector<int> scenario_ids;
  std::vector<std::string> names;
  Matrix directed;      // (i, j) = CKLD(p_i || p_j)
  Matrix std_error;     // Monte-Carlo standard error of each directed entry
  Matrix weighted;      // (i, j) = w1 CKLD(p_i || p_j) + (1 - w1) CKLD(p_j || p_i); i highlighted
  Matrix floored;       // floored log-density evaluations per directed entry
  double w1 = 0.5;
  Index n_mc = 0;
  std::vector<std::size_t> n_conditions;
  std::vector<std::size_t> case_counts;
  std::vector<std::size_t> imputed_counts;
  double log_density_floor = kDefaultLogDensityFloor;
  double noise_bound = 0.0;  // 3 x the largest weighted standard error
  DivergenceConfig config;

  double weighted_between(int highlighted, int other) const;
};

DivergenceReport measure_divergence(std::span<const ScenarioDensity> densities, const DivergenceConfig& config);

}  // namespace dgsm
