#include "dgsm/memory.hpp"

#include "dgsm/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dgsm {

std::vector<std::size_t> choose_subset(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (k >= n) return idx;
  // partial Fisher-Yates
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

ScenarioRepository::ScenarioRepository(std::size_t capacity) : capacity_(capacity) {}

std::size_t ScenarioRepository::per_scenario_capacity() const {
  return buffers_.empty() ? capacity_ : capacity_ / buffers_.size();
}

std::size_t ScenarioRepository::total_stored() const {
  std::size_t total = 0;
  for (const auto& [id, b] : buffers_) total += b.size();
  return total;
}

const ScenarioBuffer& ScenarioRepository::buffer(int scenario_id) const {
  auto it = buffers_.find(scenario_id);
  if (it == buffers_.end()) throw Error(ErrorCode::UnknownScenario, "scenario " + std::to_string(scenario_id) + " not stored");
  return it->second;
}

std::vector<int> ScenarioRepository::scenario_ids() const { return arrival_; }

void ScenarioRepository::restore(int scenario_id, ScenarioBuffer buffer) {
  if (!contains(scenario_id)) arrival_.push_back(scenario_id);
  buffers_[scenario_id] = std::move(buffer);
}

void ScenarioRepository::shrink(int scenario_id, ScenarioBuffer& b, std::size_t cap, std::uint64_t seed) {
  if (b.size() <= cap) return;
  auto rng = make_rng(seed, {0x5e1ecu, static_cast<std::uint64_t>(scenario_id), buffers_.size()});
  const auto keep = choose_subset(b.size(), cap, rng);
  ScenarioBuffer out;
  out.received = b.received;
  out.source_ids.reserve(cap);
  out.samples.reserve(cap);
  for (auto i : keep) {
    out.source_ids.push_back(b.source_ids[i]);
    out.samples.push_back(std::move(b.samples[i]));
  }
  b = std::move(out);
}

void ScenarioRepository::update(int scenario_id, std::span<const TrajectorySample> train, std::uint64_t seed) {
  if (capacity_ == 0) throw Error(ErrorCode::CapacityZero, "repository capacity M must be positive");
  if (!contains(scenario_id)) arrival_.push_back(scenario_id);
  auto& b = buffers_[scenario_id];
  for (const auto& s : train) {
    b.source_ids.push_back(b.received++);
    b.samples.push_back(s);
  }
  const std::size_t cap = capacity_ / buffers_.size();
  for (auto& [id, buf] : buffers_) shrink(id, buf, cap, seed);
}

std::size_t AllocationPlan::total() const {
  std::size_t t = 0;
  for (const auto& [id, n] : counts) t += n;
  return t;
}

AllocationPlan allocate(const std::map<int, double>& weighted_cklds, std::size_t m_cl, std::size_t c,
                        std::size_t m_floor) {
  if (c < 2) throw Error(ErrorCode::BadCapacity, "allocation needs at least one past scenario (c >= 2)");
  if (weighted_cklds.size() != c - 1)
    throw Error(ErrorCode::BadCapacity, "expected " + std::to_string(c - 1) + " past divergences, got " +
                                            std::to_string(weighted_cklds.size()));
  if (m_cl < c - 1) throw Error(ErrorCode::BadCapacity, "M_cl too small for " + std::to_string(c - 1) + " past scenarios");
  double d_max = 0.0;
  for (const auto& [id, d] : weighted_cklds) {
    if (!std::isfinite(d) || d < 0.0)
      throw Error(ErrorCode::BadDivergence, "divergence for scenario " + std::to_string(id) + " must be finite and >= 0");
    d_max = std::max(d_max, d);
  }

  AllocationPlan plan;
  plan.m_max = m_cl / (c - 1);
  plan.divergences = weighted_cklds;
  if (d_max == 0.0) {
    plan.equal_fallback = true;
    plan.warnings.push_back("AllZeroDivergence: all weighted divergences are zero, using equal allocation");
    for (const auto& [id, d] : weighted_cklds) plan.counts[id] = plan.m_max;
    return plan;
  }
  const std::size_t floor_count = std::min(m_floor, plan.m_max);
  for (const auto& [id, d] : weighted_cklds) {
    const double exact = static_cast<double>(plan.m_max) * (d / d_max);
    auto m = static_cast<std::size_t>(std::floor(exact + 0.5));
    plan.counts[id] = std::clamp(m, floor_count, plan.m_max);
  }
  return plan;
}

AllocationPlan equal_allocation(std::span<const int> past_ids, std::size_t m_cl) {
  AllocationPlan plan;
  if (past_ids.empty()) return plan;
  plan.m_max = m_cl / past_ids.size();
  for (int id : past_ids) plan.counts[id] = plan.m_max;
  return plan;
}

AllocationPlan fixed_allocation(std::span<const int> past_ids, std::size_t per_task) {
  AllocationPlan plan;
  plan.m_max = per_task;
  for (int id : past_ids) plan.counts[id] = per_task;
  return plan;
}

std::map<int, std::vector<TrajectorySample>> sample_memory(const ScenarioRepository& repo, const AllocationPlan& plan,
                                                           std::uint64_t seed, std::vector<std::string>* warnings) {
  std::map<int, std::vector<TrajectorySample>> out;
  for (const auto& [id, count] : plan.counts) {
    const auto& b = repo.buffer(id);
    if (count > b.size() && warnings)
      warnings->push_back("scenario " + std::to_string(id) + ": plan asks for " + std::to_string(count) +
                          " samples, buffer holds " + std::to_string(b.size()));
    auto rng = make_rng(seed, {0x3e3au, static_cast<std::uint64_t>(id)});
    auto& batch = out[id];
    for (auto i : choose_subset(b.size(), std::min(count, b.size()), rng)) batch.push_back(b.samples[i]);
  }
  return out;
}

}  // namespace dgsm
