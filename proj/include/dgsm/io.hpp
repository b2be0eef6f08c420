#pragma once

#include "dgsm/continual.hpp"
#include "dgsm/divergence.hpp"
#include "dgsm/memory.hpp"
#include "dgsm/metrics.hpp"
#include "dgsm/predictor.hpp"
#include "dgsm/scenario_data.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace dgsm {

using Json = nlohmann::ordered_json;

Json to_json(const TrajectorySample& sample);
TrajectorySample sample_from_json(const Json& j);

/// Dataset file: {"manifest": {...counts, split seed, split indices}, "samples": [...]}.
Json dataset_to_json(const ScenarioDataset& dataset);
ScenarioDataset dataset_from_json(const Json& j);
Json dataset_manifest(const ScenarioDataset& dataset);

Json to_json(const PredictorConfig& config);
PredictorConfig predictor_config_from_json(const Json& j);

/// Lossless parameter checkpoint: layout descriptor plus values.
Json checkpoint_to_json(const Predictor& predictor, const ParameterVector& theta, const std::string& id);
ParameterVector checkpoint_from_json(const Json& j, PredictorConfig* config = nullptr);

Json to_json(const Matrix& m);
Matrix matrix_from_json(const Json& j);

Json to_json(const DivergenceReport& report);
DivergenceReport divergence_report_from_json(const Json& j);
Json to_json(const DivergenceConfig& config);

Json to_json(const AllocationPlan& plan);
AllocationPlan allocation_plan_from_json(const Json& j);

Json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const Json& j);
Json to_json(const ForgettingReport& report);
Json to_json(const TtcpReport& report);

/// CSV: step, epoch, loss, one column per past task, violations, projection_active, delta_norm.
std::string training_log_csv(const TrainHistory& history);

void save_repository(const ScenarioRepository& repo, const std::filesystem::path& dir, std::uint64_t seed);
ScenarioRepository load_repository(const std::filesystem::path& dir);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace dgsm
