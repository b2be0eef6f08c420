#pragma once

#include "dgsm/continual.hpp"
#include "dgsm/io.hpp"
#include "dgsm/scenario_data.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace dgsm {

/// Flat run configuration. Every key has a default; unknown keys and values
/// of the wrong JSON type are rejected. `scenarios` holds dataset paths
/// (.json from ingest/synth, or raw .csv) or synthetic spec objects.
class RunConfig {
 public:
  RunConfig();

  static const Json& defaults();
  static RunConfig from_json(const Json& overrides);
  static RunConfig from_file(const std::filesystem::path& path);

  /// Applies one override; `raw` is parsed as JSON, falling back to a plain string.
  void set(const std::string& key, const std::string& raw);
  void set(const std::string& key, const Json& value);

  const Json& values() const { return values_; }
  template <typename T>
  T get(const std::string& key) const {
    return values_.at(key).get<T>();
  }

  WindowConfig window() const;
  SplitRatios ratios() const;
  PredictorConfig predictor() const;
  TrainerConfig trainer() const;
  DivergenceConfig divergence() const;
  ContinualConfig continual() const;
  TrainingMode mode() const;

  /// Checks every field against the owning module before any work starts.
  void validate() const;

  /// Loads or generates every entry of `scenarios`, relative paths resolved
  /// against `base`.
  std::vector<ScenarioDataset> load_scenarios(const std::filesystem::path& base = {}) const;

 private:
  Json values_;
};

/// Parses a scenario CSV, windows it and splits it.
ScenarioDataset ingest_csv(const std::filesystem::path& csv, const WindowConfig& window, const SplitRatios& ratios,
                           std::uint64_t split_seed, int scenario_id, const std::string& name,
                           ParseResult* parsed = nullptr);

/// Writes tracks in the ingest CSV schema.
std::string tracks_to_csv(std::span<const Track> tracks, double frame_rate);

}  // namespace dgsm
