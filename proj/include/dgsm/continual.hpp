#pragma once

#include "dgsm/cl_trainer.hpp"
#include "dgsm/divergence.hpp"
#include "dgsm/memory.hpp"
#include "dgsm/metrics.hpp"
#include "dgsm/predictor.hpp"
#include "dgsm/scenario_data.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dgsm {

enum class TrainingMode { Vanilla, Gsm, Dgsm, Joint };

std::string to_string(TrainingMode mode);
TrainingMode training_mode_from_string(std::string_view name);

struct ContinualConfig {
  PredictorConfig predictor;
  TrainerConfig trainer;
  std::size_t memory_capacity = 9000;          // M
  std::size_t memory_budget = 3500;            // M_cl
  std::optional<std::size_t> memory_per_task;  // fixed m per past task (gsm only)
  std::size_t memory_floor = kDefaultMemoryFloor;
  DivergenceConfig divergence;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PhaseRecord {
  std::vector<int> scenario_ids;  // trained on (several for joint)
  std::string name;
  AllocationPlan plan;
  TrainHistory history;
  EvalReport eval;
  ParameterVector theta;
  std::vector<std::string> warnings;
};

struct RunArtifacts {
  TrainingMode mode = TrainingMode::Vanilla;
  ContinualConfig config;
  std::vector<PhaseRecord> phases;
  std::vector<EvalReport> evals;
  ForgettingReport forgetting;
  std::optional<DivergenceReport> divergence;
  std::optional<ScenarioRepository> repository;  // final state (not kept for vanilla / joint)
  ParameterVector theta;
  std::size_t allocated_samples = 0;   // sum of plan totals over phases
  std::size_t sample_evaluations = 0;  // time-cost proxy
};

/// Weighted divergence of the current scenario (highlighted) against each
/// past one. `learned` lists every scenario seen so far, current last.
using DivergenceProvider =
    std::function<std::map<int, double>(std::span<const ScenarioDataset* const> learned, DivergenceReport* report)>;

/// Fits one density per scenario on its training split (cached) and
/// measures weighted CKLD between the newest scenario and every earlier one.
DivergenceProvider mdn_divergence_provider(const DivergenceConfig& config);

/// Trains over the scenario sequence in the requested mode, evaluating after each phase.
RunArtifacts run_continual(std::span<const ScenarioDataset> sequence, const ContinualConfig& config, TrainingMode mode,
                           DivergenceProvider divergence = {});

}  // namespace dgsm
