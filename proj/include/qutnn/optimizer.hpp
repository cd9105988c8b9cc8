#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <variant>
#include <vector>

#include "qutnn/loss_grad.hpp"
#include "qutnn/network.hpp"

namespace qutnn {

/// Start from the given parameters.
struct OracleInit {
  NetworkParams params;
};

/// Gaussian weights with the given standard deviation; hidden biases at the
/// center of their feasible interval; output bias at ybar.
struct RandomInit {
  std::uint64_t seed = 0;
  double scale = 0.1;
};

using InitSpec = std::variant<OracleInit, RandomInit>;

struct FitConfig {
  double lr_smooth = 1e-3;
  int smooth_iters = 5000;
  double lr_prox = 1e-3;
  int prox_iters = 5000;
  double tol = 1e-8;        // relative objective change for the stop window
  bool fista = true;
  bool backtracking = true; // halve the proximal step until sufficient decrease
  InitSpec init = RandomInit{};

  /// Throws Error unless learning rates > 0, iteration counts >= 1, tol >= 0.
  void validate() const;
};

/// Exact-zero pattern of W1.
struct SupportMask {
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> mask;  // p2 x p1
  std::vector<Eigen::Index> selected_features;              // columns with any true
  std::vector<Eigen::Index> active_neurons;                 // rows with any true
};

SupportMask support_mask(const Eigen::MatrixXd& w1);

struct FitResult {
  NetworkParams params;
  std::vector<double> objective_trace;  // penalized objective, entry 0 = at init
  std::vector<double> residual_trace;   // ||y - preds||_2 alongside each entry
  int phase_boundary = 0;               // trace index of the first proximal entry
  bool converged = false;
  SupportMask support;
};

/// sign(w) * max(|w| - t, 0).
inline double soft_threshold(double w, double t) {
  const double m = std::abs(w) - t;
  return m > 0.0 ? (w < 0.0 ? -m : m) : 0.0;
}

/// Clips every hidden bias into its feasible interval, layer by layer, using
/// the latents induced by the already-clipped earlier layers. The output bias
/// is untouched.
NetworkParams project_biases(const NetworkParams& params, const Architecture& arch,
                             const Dataset& dataset);

/// Two-phase solver: smooth (sub)gradient descent on the penalized objective,
/// then proximal gradient with exact soft-thresholded zeros in W1. Biases are
/// projected after every step. Stops a phase early once the relative
/// objective change stays below tol for 50 consecutive steps.
FitResult fit(const Dataset& dataset, const Architecture& arch, double lambda,
              const FitConfig& config);

/// The proximal phase alone, started from `start`. fit() runs this after the
/// smooth phase; it is exposed so the sparse fixed point can be driven from a
/// chosen iterate directly.
FitResult proximal_fit(const Dataset& dataset, const Architecture& arch, double lambda,
                       NetworkParams start, const FitConfig& config);

/// Runs fit with `restarts` distinct random-init substreams (restart r seeds
/// its RandomInit with substream_seed(master, r), master taken from the
/// configured RandomInit seed) and returns the result with the smallest final
/// penalized objective; ties break toward the lowest restart index.
FitResult multi_start_fit(const Dataset& dataset, const Architecture& arch, double lambda,
                          const FitConfig& config, int restarts);

}  // namespace qutnn
