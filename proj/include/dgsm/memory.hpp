#pragma once

#include "dgsm/scenario_data.hpp"
#include "dgsm/types.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dgsm {

struct ScenarioBuffer {
  std::vector<std::size_t> source_ids;  // position in the scenario's stream of training samples
  std::vector<TrajectorySample> samples;
  std::size_t received = 0;             // training samples offered so far (revisits accumulate)

  std::size_t size() const { return samples.size(); }
};

/// Bounded per-scenario store. Every buffer holds at most floor(M / c) samples
/// where c counts distinct scenarios seen; shrinking keeps a uniform random
/// subset in original order.
class ScenarioRepository {
 public:
  explicit ScenarioRepository(std::size_t capacity = 0);

  std::size_t capacity() const { return capacity_; }
  std::size_t scenarios_seen() const { return buffers_.size(); }
  std::size_t per_scenario_capacity() const;
  std::size_t total_stored() const;

  /// Adds a scenario's training data (or merges a revisit) and shrinks all buffers.
  void update(int scenario_id, std::span<const TrajectorySample> train, std::uint64_t seed);

  bool contains(int scenario_id) const { return buffers_.count(scenario_id) > 0; }
  const ScenarioBuffer& buffer(int scenario_id) const;
  std::vector<int> scenario_ids() const;  // in order of first arrival
  const std::map<int, ScenarioBuffer>& buffers() const { return buffers_; }

  // Restores a persisted state without re-running the shrink law.
  void restore(int scenario_id, ScenarioBuffer buffer);

 private:
  void shrink(int scenario_id, ScenarioBuffer& buffer, std::size_t cap, std::uint64_t seed);

  std::size_t capacity_ = 0;
  std::map<int, ScenarioBuffer> buffers_;
  std::vector<int> arrival_;
};

struct AllocationPlan {
  std::map<int, std::size_t> counts;    // past scenario id -> m_r
  std::size_t m_max = 0;
  std::map<int, double> divergences;    // weighted values used (empty for equal / fixed plans)
  bool equal_fallback = false;
  std::vector<std::string> warnings;

  std::size_t total() const;
};

constexpr std::size_t kDefaultMemoryFloor = 10;

/// m_max = floor(M_cl / (c - 1)); m_r = round-half-up(m_max * d_r / d_max),
/// clipped to m_max and floored at m_floor. All-zero divergences fall back to
/// equal allocation with a warning.
AllocationPlan allocate(const std::map<int, double>& weighted_cklds, std::size_t m_cl, std::size_t c,
                        std::size_t m_floor = kDefaultMemoryFloor);

/// Every past scenario gets floor(M_cl / (c - 1)).
AllocationPlan equal_allocation(std::span<const int> past_ids, std::size_t m_cl);

/// Every past scenario gets the same fixed count.
AllocationPlan fixed_allocation(std::span<const int> past_ids, std::size_t per_task);

/// Uniform draw without replacement of each plan count from the matching
/// buffer. Counts above the buffer size are clipped and reported in `warnings`.
std::map<int, std::vector<TrajectorySample>> sample_memory(const ScenarioRepository& repo, const AllocationPlan& plan,
                                                           std::uint64_t seed,
                                                           std::vector<std::string>* warnings = nullptr);

/// Uniform k-of-n selection without replacement, returned in ascending order.
std::vector<std::size_t> choose_subset(std::size_t n, std::size_t k, Rng& rng);

}  // namespace dgsm
