#pragma once

#include <Eigen/Core>

#include "qutnn/network.hpp"

namespace qutnn {

/// Partial derivatives of the square-root l2 loss, shape-congruent to the
/// NetworkParams they differentiate.
struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> hidden_biases;
  double output_bias = 0.0;
};

/// ||y - preds||_2.
double sqrt_l2_loss(const Eigen::VectorXd& y, const Eigen::VectorXd& preds);

/// Penalized objective: sqrt_l2_loss + lambda * ||w1||_1 (entrywise l1).
double objective(const Eigen::VectorXd& y, const Eigen::VectorXd& preds,
                 const Eigen::MatrixXd& w1, double lambda);

/// Exact gradient of the square-root loss with respect to every parameter,
/// differentiating through the row normalization of layers k > 1.
/// Throws DegenerateResidual when ||y - preds||_2 <= kResidualEps.
Gradients gradient(const NetworkParams& params, const Architecture& arch,
                   const Dataset& dataset);

/// Same, reusing an existing forward trace on dataset.x.
Gradients gradient(const NetworkParams& params, const Architecture& arch,
                   const Dataset& dataset, const ForwardTrace& trace);

/// sup over unit-norm w2 of the sup-norm of the two-layer null gradient:
///   deriv_at_zero * || sum_k (y_k - ybar) x_k ||_inf / ||y - ybar||_2.
/// Throws ConstantResponse when y is constant within kResidualEps.
double null_gradient_sup(const Dataset& dataset, double deriv_at_zero);

}  // namespace qutnn
