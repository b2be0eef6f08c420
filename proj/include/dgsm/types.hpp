#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <vector>

namespace dgsm {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Positions over consecutive frames, one row per frame, columns (x, y) in meters.
using Trajectory = Eigen::Matrix<double, Eigen::Dynamic, 2>;

using Rng = std::mt19937_64;

/// Seeds a generator from a base seed plus an optional stream path, so that
/// independent consumers (per scenario, per condition, per epoch) draw from
/// decorrelated streams without sharing state.
inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * stream.size());
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(seed);
  for (auto s : stream) push(s);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

/// FNV-1a over raw bytes; used to derive content-addressed RNG streams.
inline std::uint64_t fnv1a(std::span<const unsigned char> bytes,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

template <typename Derived>
std::uint64_t hash_values(const Eigen::DenseBase<Derived>& values, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (Index i = 0; i < values.size(); ++i) {
    const double v = values.derived().coeff(i);
    h = fnv1a(std::span(reinterpret_cast<const unsigned char*>(&v), sizeof(double)), h);
  }
  return h;
}

}  // namespace dgsm
