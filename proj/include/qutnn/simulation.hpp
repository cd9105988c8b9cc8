#pragma once

#include <cstdint>
#include <vector>

#include "qutnn/network.hpp"
#include "qutnn/optimizer.hpp"
#include "qutnn/qut.hpp"

namespace qutnn {

/// Sparse teacher network: h active neurons, each wired to one needle pair
/// (-1, +1) of adjacent input columns.
struct TeacherSpec {
  int h = 1;
  Eigen::Index p1 = 16;
  Eigen::Index p2 = 16;
  double b2 = 10.0;
  double xi = 0.1;
  Eigen::Index n = 300;

  /// Throws Error unless h >= 1, 2h <= p1 and h <= p2.
  void validate() const;
};

Architecture teacher_architecture(const TeacherSpec& spec);

/// Row i < h of W1 has -1 at column 2i and +1 at column 2i+1 (0-based), the
/// remaining rows are zero; w2 = (1_h, 0_{p2-h}); b1 = 0; b2 from the spec.
NetworkParams generate_teacher(const TeacherSpec& spec);

/// x rows i.i.d. N(0, I_p1); y = teacher forward plus N(0, xi^2) noise.
/// Design and noise use separate substreams of `seed`, so xi = 0 reproduces
/// the same x.
Dataset generate_dataset(const NetworkParams& teacher, const TeacherSpec& spec,
                         std::uint64_t seed);

/// True iff the nonzero pattern of the estimate equals the teacher's W1
/// pattern up to a permutation of hidden-neuron rows (rows are canonicalized
/// by lexicographic sort before comparison).
bool exact_support_recovery(const SupportMask& estimated, const NetworkParams& teacher);

/// sqrt(mean over n_test fresh N(0, I) locations of (mu_fitted - mu_teacher)^2);
/// compares to the noiseless truth.
double generalization_rmse(const NetworkParams& fitted, const Architecture& fitted_arch,
                           const NetworkParams& teacher, const Architecture& teacher_arch,
                           Eigen::Index n_test, std::uint64_t seed);

enum class Strategy { kOracle, kNonOracle };

struct CellSpec {
  int h = 1;
  Eigen::Index p1 = 16;
  Eigen::Index p2 = 16;
};

struct ExperimentConfig {
  int replicates = 20;
  Strategy strategy = Strategy::kOracle;
  int restarts = 1;            // non-oracle only
  double lambda_multiplier = 1.0;
  std::uint64_t base_seed = 0;
  double alpha = 0.05;
  int qut_mc_samples = 10000;
  double xi = 0.1;
  Eigen::Index n = 300;
  Eigen::Index n_test = 0;     // 0 = 100 * n
  FitConfig fit;
};

struct CellResult {
  CellSpec cell;
  double recovery_probability = 0.0;
  double mean_generalization_rmse = 0.0;
  int replicates = 0;
  int failures = 0;
};

struct RecoveryGrid {
  std::vector<CellSpec> cells;
  std::vector<CellResult> results;
};

/// Per replicate: generate teacher and dataset, compute lambda_QUT on that
/// design (times the configured multiplier), fit with the chosen strategy,
/// record exact recovery and generalization error. Replicates own RNG
/// substreams keyed by (cell, replicate), so identical base seeds give
/// identical grids regardless of scheduling; individual failures are counted
/// per cell, not fatal.
RecoveryGrid recovery_experiment(const std::vector<CellSpec>& grid,
                                 const ExperimentConfig& config);

}  // namespace qutnn
