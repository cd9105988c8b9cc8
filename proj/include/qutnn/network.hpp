#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "qutnn/activation.hpp"

namespace qutnn {

/// Residual-norm guard below which the square-root loss is treated as
/// non-differentiable.
inline constexpr double kResidualEps = 1e-12;

/// Layer widths p_1..p_l (scalar output after layer l is implied) plus the
/// activation. l >= 2.
struct Architecture {
  std::vector<Eigen::Index> layer_widths;
  ActivationSpec activation;

  Eigen::Index depth() const { return static_cast<Eigen::Index>(layer_widths.size()); }

  /// Throws Error if the widths are empty, fewer than two layers, or any
  /// width is < 1.
  void validate() const;
};

/// All weights and biases of the network.
///
/// weights[k-1] is W_k: shape p_{k+1} x p_k for k < l, and a single row
/// 1 x p_l for k = l. hidden_biases[k-1] is b_k (length p_{k+1}) for k < l;
/// the scalar output offset b_l lives in output_bias.
struct NetworkParams {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> hidden_biases;
  double output_bias = 0.0;
};

/// Training data: rows of x are samples, y the responses.
struct Dataset {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;

  Eigen::Index n() const { return x.rows(); }

  /// Throws Error unless n >= 2, x and y agree on n, and all entries are finite.
  void validate() const;
};

/// Checks that params has the shapes required by arch; throws ShapeError
/// naming the offending layer otherwise.
void check_shapes(const NetworkParams& params, const Architecture& arch);

/// Latent batches u_0..u_{l-1} (u_0 = x, each n x p_{k+1} after layer k) plus
/// the pre-activations of every hidden layer and the final predictions.
/// Produced by a single forward sweep; consumed by the gradient and by the
/// bias machinery.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> latents;   // latents[k] = u_k, k = 0..l-1
  std::vector<Eigen::MatrixXd> preacts;   // preacts[k-1] = z_k of hidden layer k, k = 1..l-1
  Eigen::VectorXd preds;
};

ForwardTrace forward_trace(const NetworkParams& params, const Architecture& arch,
                           const Eigen::MatrixXd& x_batch);

/// Predictions for a batch (rows = samples). First layer is affine inside the
/// activation; layers k > 1 use l2-normalized rows, with a zero-norm row
/// contributing inner product 0.
Eigen::VectorXd forward(const NetworkParams& params, const Architecture& arch,
                        const Eigen::MatrixXd& x_batch);

/// Closed feasible interval for one bias entry.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Feasible interval of b_{k,j} given the layer-(k-1) latent batch.
/// k = 1: [min_i <w,u_i>, max_i <w,u_i>]; 1 < k < l: the same divided by
/// ||w||_2 (and [0,0] for a zero-norm row); k = l: the whole real line.
Interval bias_bounds(const Eigen::VectorXd& weight_row, const Eigen::MatrixXd& latent_batch,
                     int layer_index, int num_layers);

/// One broken invariant. layer is 1-based; unit is the 0-based row/unit index
/// or -1 when the violation is not tied to a unit.
struct Violation {
  int layer = 0;
  Eigen::Index unit = -1;
  std::string message;
};

/// Collects every shape, finiteness and bias-constraint violation of params
/// on the given training set. Empty result means the parameters are feasible.
std::vector<Violation> validate_params(const NetworkParams& params, const Architecture& arch,
                                       const Dataset& dataset);

}  // namespace qutnn
