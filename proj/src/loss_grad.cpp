#include "qutnn/loss_grad.hpp"

#include <cmath>

#include "qutnn/errors.hpp"

namespace qutnn {

double sqrt_l2_loss(const Eigen::VectorXd& y, const Eigen::VectorXd& preds) {
  if (y.size() != preds.size()) throw ShapeError("sqrt_l2_loss: length mismatch");
  return (y - preds).norm();
}

double objective(const Eigen::VectorXd& y, const Eigen::VectorXd& preds,
                 const Eigen::MatrixXd& w1, double lambda) {
  if (lambda < 0.0) throw Error("objective: lambda must be >= 0");
  return sqrt_l2_loss(y, preds) + lambda * w1.cwiseAbs().sum();
}

Gradients gradient(const NetworkParams& params, const Architecture& arch,
                   const Dataset& dataset) {
  return gradient(params, arch, dataset, forward_trace(params, arch, dataset.x));
}

Gradients gradient(const NetworkParams& params, const Architecture& arch,
                   const Dataset& dataset, const ForwardTrace& trace) {
  const Eigen::Index l = arch.depth();
  const Eigen::VectorXd residual = dataset.y - trace.preds;
  const double loss = residual.norm();
  if (loss <= kResidualEps) {
    throw DegenerateResidual("residual norm " + std::to_string(loss) +
                             " at the non-differentiable point of the square-root loss");
  }

  Gradients grads;
  grads.weights.resize(static_cast<std::size_t>(l));
  grads.hidden_biases.resize(static_cast<std::size_t>(l - 1));

  // d loss / d preds
  const Eigen::VectorXd d = -residual / loss;

  // Output layer: preds = u * w/||w|| + b_l. d loss / d u_{l-1} feeds the
  // backward sweep below.
  Eigen::MatrixXd d_latent;
  {
    const Eigen::VectorXd w = params.weights[l - 1].row(0).transpose();
    const Eigen::MatrixXd& u = trace.latents[static_cast<std::size_t>(l - 1)];
    const double norm = w.norm();
    grads.output_bias = d.sum();
    Eigen::MatrixXd gw(1, w.size());
    if (norm > 0.0) {
      const Eigen::VectorXd w_hat = w / norm;
      const Eigen::VectorXd s = u.transpose() * d;
      gw.row(0) = ((s - w_hat.dot(s) * w_hat) / norm).transpose();
      d_latent = d * w_hat.transpose();
    } else {
      gw.setZero();
      d_latent = Eigen::MatrixXd::Zero(trace.preds.size(), w.size());
    }
    grads.weights[static_cast<std::size_t>(l - 1)] = gw;
  }

  const auto& act = arch.activation;
  for (Eigen::Index k = l - 1; k >= 1; --k) {
    const Eigen::MatrixXd& w = params.weights[k - 1];
    const Eigen::MatrixXd& u_prev = trace.latents[static_cast<std::size_t>(k - 1)];
    const Eigen::MatrixXd& z = trace.preacts[static_cast<std::size_t>(k - 1)];

    // delta = d_latent .* sigma'(z)
    Eigen::MatrixXd delta =
        d_latent.cwiseProduct(z.unaryExpr([&](double v) { return act.deriv(v); }));

    Eigen::MatrixXd gw(w.rows(), w.cols());
    Eigen::VectorXd gb = delta.colwise().sum().transpose();
    Eigen::MatrixXd d_prev = Eigen::MatrixXd::Zero(u_prev.rows(), u_prev.cols());

    if (k == 1) {
      gw.noalias() = delta.transpose() * u_prev;
    } else {
      const Eigen::VectorXd& b = params.hidden_biases[k - 1];
      for (Eigen::Index j = 0; j < w.rows(); ++j) {
        const double norm = w.row(j).norm();
        if (norm == 0.0) {
          // Continuous extension: the normalized inner product is pinned to 0,
          // so nothing flows through this row.
          gw.row(j).setZero();
          continue;
        }
        const Eigen::VectorXd w_hat = w.row(j).transpose() / norm;
        const Eigen::VectorXd t = u_prev.transpose() * delta.col(j);
        // <w_hat, u_i> per sample is the pre-activation minus the bias.
        const Eigen::VectorXd inner = z.col(j).array() - b[j];
        const double a = delta.col(j).dot(inner);
        gw.row(j) = ((t - a * w_hat) / norm).transpose();
        d_prev.noalias() += delta.col(j) * w_hat.transpose();
      }
    }

    grads.weights[static_cast<std::size_t>(k - 1)] = gw;
    grads.hidden_biases[static_cast<std::size_t>(k - 1)] = gb;
    d_latent.swap(d_prev);
  }

  return grads;
}

double null_gradient_sup(const Dataset& dataset, double deriv_at_zero) {
  const double ybar = dataset.y.mean();
  const Eigen::VectorXd centered = dataset.y.array() - ybar;
  const double denom = centered.norm();
  if (denom <= kResidualEps) {
    throw ConstantResponse("response is constant; the null statistic is undefined");
  }
  const double numer = (dataset.x.transpose() * centered).cwiseAbs().maxCoeff();
  return deriv_at_zero * numer / denom;
}

}  // namespace qutnn
