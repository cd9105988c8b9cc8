#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>

namespace qutnn {

/// SplitMix64 finalizer. Used to derive independent substream seeds.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of substream `index` derived from `master`. All Monte-Carlo draws,
/// simulation replicates and optimizer restarts obtain their own substream
/// through this function, so results are identical no matter how the work is
/// scheduled across threads.
inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 1));
}

inline std::mt19937_64 make_engine(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

inline Eigen::VectorXd standard_normal_vector(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v;
}

inline Eigen::MatrixXd standard_normal_matrix(Eigen::Index rows, Eigen::Index cols,
                                              std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  // Row-major fill order so the draw sequence is part of the contract.
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

}  // namespace qutnn
