#pragma once

#include "dgsm/predictor.hpp"
#include "dgsm/scenario_data.hpp"
#include "dgsm/types.hpp"

#include <random>
#include <vector>

namespace fixture {

inline dgsm::PredictorConfig small_predictor(dgsm::Index history = 4, dgsm::Index future = 3, dgsm::Index neighbors = 3) {
  dgsm::PredictorConfig c;
  c.history_frames = history;
  c.future_frames = future;
  c.max_neighbors = neighbors;
  c.encoder_hidden = 6;
  c.embedding = 4;
  c.decoder_hidden = 7;
  return c;
}

inline dgsm::Trajectory random_path(dgsm::Index frames, std::mt19937_64& rng, double spread = 5.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  dgsm::Trajectory t(frames, 2);
  double x = spread * n(rng), y = spread * n(rng);
  const double vx = n(rng), vy = n(rng);
  for (dgsm::Index k = 0; k < frames; ++k) {
    x += vx + 0.1 * n(rng);
    y += vy + 0.1 * n(rng);
    t(k, 0) = x;
    t(k, 1) = y;
  }
  return t;
}

inline dgsm::TrajectorySample random_sample(const dgsm::PredictorConfig& c, std::mt19937_64& rng, int scenario = 0) {
  dgsm::TrajectorySample s;
  s.scenario_id = scenario;
  const auto full = random_path(c.history_frames + c.future_frames, rng);
  s.target_history = full.topRows(c.history_frames);
  s.target_future = full.bottomRows(c.future_frames);
  std::bernoulli_distribution present(0.6);
  for (dgsm::Index i = 0; i < c.max_neighbors; ++i) {
    if (present(rng))
      s.neighbor_histories.emplace_back(random_path(c.history_frames, rng));
    else
      s.neighbor_histories.emplace_back(std::nullopt);
  }
  return s;
}

inline std::vector<dgsm::TrajectorySample> random_batch(const dgsm::PredictorConfig& c, std::size_t n, std::uint64_t seed,
                                                        int scenario = 0) {
  std::mt19937_64 rng(seed);
  std::vector<dgsm::TrajectorySample> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_sample(c, rng, scenario));
  return out;
}

}  // namespace fixture
