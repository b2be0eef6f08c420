#include "dgsm/continual.hpp"

#include "dgsm/error.hpp"

#include <algorithm>
#include <memory>

namespace dgsm {

std::string to_string(TrainingMode mode) {
  switch (mode) {
    case TrainingMode::Vanilla: return "vanilla";
    case TrainingMode::Gsm: return "gsm";
    case TrainingMode::Dgsm: return "dgsm";
    case TrainingMode::Joint: return "joint";
  }
  return "vanilla";
}

TrainingMode training_mode_from_string(std::string_view name) {
  if (name == "vanilla") return TrainingMode::Vanilla;
  if (name == "gsm") return TrainingMode::Gsm;
  if (name == "dgsm") return TrainingMode::Dgsm;
  if (name == "joint") return TrainingMode::Joint;
  throw Error(ErrorCode::BadConfig, "unknown mode '" + std::string(name) + "' (vanilla, gsm, dgsm, joint)");
}

void ContinualConfig::validate() const {
  predictor.validate();
  trainer.validate();
  divergence.validate();
  if (memory_capacity == 0) throw Error(ErrorCode::CapacityZero, "M must be positive");
}

DivergenceProvider mdn_divergence_provider(const DivergenceConfig& config) {
  auto cache = std::make_shared<std::map<int, ScenarioDensity>>();
  return [config, cache](std::span<const ScenarioDataset* const> learned, DivergenceReport* report) {
    std::vector<ScenarioDensity> densities;
    for (const auto* d : learned) {
      auto it = cache->find(d->scenario_id);
      if (it == cache->end()) {
        const auto train = d->train_samples();
        it = cache->emplace(d->scenario_id, fit_scenario_density(d->scenario_id, d->name, train, config)).first;
      }
      densities.push_back(it->second);
    }
    const auto full = measure_divergence(densities, config);
    std::map<int, double> out;
    const int current = learned.back()->scenario_id;
    for (const auto* d : learned)
      if (d->scenario_id != current) out[d->scenario_id] = full.weighted_between(current, d->scenario_id);
    if (report) *report = full;
    return out;
  };
}

namespace {

std::string checkpoint_id(std::size_t phase, const std::vector<int>& ids) {
  std::string s = "phase-" + std::to_string(phase);
  for (int id : ids) s += "-s" + std::to_string(id);
  return s;
}

}  // namespace

RunArtifacts run_continual(std::span<const ScenarioDataset> sequence, const ContinualConfig& config, TrainingMode mode,
                           DivergenceProvider divergence) {
  config.validate();
  if (sequence.empty()) throw Error(ErrorCode::Empty, "scenario sequence is empty");
  if (mode == TrainingMode::Dgsm && !divergence) divergence = mdn_divergence_provider(config.divergence);

  const Predictor predictor(config.predictor);
  RunArtifacts run;
  run.mode = mode;
  run.config = config;
  run.theta = predictor.initial_parameters(config.seed);

  auto phase_trainer = [&](std::size_t phase) {
    TrainerConfig t = config.trainer;
    t.seed = static_cast<std::uint64_t>(make_rng(config.trainer.seed, {0x7a5eu, phase})());
    return t;
  };

  if (mode == TrainingMode::Joint) {
    PhaseRecord rec;
    std::vector<TrajectorySample> all;
    std::vector<const ScenarioDataset*> learned;
    for (const auto& d : sequence) {
      const auto train = d.train_samples();
      all.insert(all.end(), train.begin(), train.end());
      if (std::none_of(learned.begin(), learned.end(), [&](auto* p) { return p->scenario_id == d.scenario_id; }))
        learned.push_back(&d);
      rec.scenario_ids.push_back(d.scenario_id);
    }
    rec.name = "joint";
    run.theta = train_scenario(predictor, run.theta, std::span<const TrajectorySample>(all), {}, phase_trainer(0), &rec.history);
    rec.theta = run.theta;
    rec.eval = evaluate(predictor, run.theta, learned, to_string(mode), checkpoint_id(0, rec.scenario_ids));
    run.sample_evaluations += rec.history.sample_evaluations;
    run.evals.push_back(rec.eval);
    run.phases.push_back(std::move(rec));
    run.forgetting = forgetting(run.evals);
    return run;
  }

  ScenarioRepository repo(config.memory_capacity);
  std::vector<const ScenarioDataset*> learned;
  for (std::size_t phase = 0; phase < sequence.size(); ++phase) {
    const auto& current = sequence[phase];
    PhaseRecord rec;
    rec.scenario_ids = {current.scenario_id};
    rec.name = current.name;

    auto seen = std::find_if(learned.begin(), learned.end(), [&](auto* p) { return p->scenario_id == current.scenario_id; });
    if (seen != learned.end()) learned.erase(seen);
    learned.push_back(&current);

    std::vector<int> past;
    for (int id : repo.scenario_ids())
      if (id != current.scenario_id) past.push_back(id);

    if (mode != TrainingMode::Vanilla && !past.empty()) {
      if (mode == TrainingMode::Gsm) {
        rec.plan = config.memory_per_task ? fixed_allocation(past, *config.memory_per_task)
                                          : equal_allocation(past, config.memory_budget);
      } else {
        DivergenceReport report;
        const auto div = divergence(learned, &report);
        std::map<int, double> wanted;
        for (int id : past) wanted[id] = div.at(id);
        rec.plan = allocate(wanted, config.memory_budget, past.size() + 1, config.memory_floor);
        run.divergence = report;
      }
    }
    rec.warnings = rec.plan.warnings;

    const auto memory = sample_memory(repo, rec.plan, make_rng(config.seed, {0x3e30u, phase})(), &rec.warnings);
    const auto train = current.train_samples();
    run.theta = train_scenario(predictor, run.theta, std::span<const TrajectorySample>(train), memory,
                               phase_trainer(phase), &rec.history);
    if (mode != TrainingMode::Vanilla) repo.update(current.scenario_id, train, make_rng(config.seed, {0x4e90u, phase})());

    rec.theta = run.theta;
    rec.eval = evaluate(predictor, run.theta, learned, to_string(mode), checkpoint_id(phase, rec.scenario_ids));
    run.allocated_samples += rec.plan.total();
    run.sample_evaluations += rec.history.sample_evaluations;
    run.evals.push_back(rec.eval);
    run.phases.push_back(std::move(rec));
  }
  if (mode != TrainingMode::Vanilla) run.repository = std::move(repo);
  run.forgetting = forgetting(run.evals);
  return run;
}

}  // namespace dgsm
