#include "qutnn/network.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "qutnn/errors.hpp"

namespace qutnn {

namespace {

double softplus_centered_eval(double u) {
  return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u))) - std::numbers::ln2;
}

double logistic(double u) {
  if (u >= 0.0) return 1.0 / (1.0 + std::exp(-u));
  const double e = std::exp(u);
  return e / (1.0 + e);
}

std::string shape_of(const Eigen::MatrixXd& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

}  // namespace

ActivationSpec softplus_centered() {
  ActivationSpec spec;
  spec.name = "softplus_centered";
  spec.eval = softplus_centered_eval;
  spec.deriv = logistic;
  spec.deriv_at_zero = 0.5;
  return spec;
}

ActivationSpec activation_by_name(const std::string& name) {
  if (name == "softplus_centered") return softplus_centered();
  throw Error("unknown activation: " + name);
}

void Architecture::validate() const {
  if (depth() < 2) throw Error("architecture needs at least 2 layers");
  for (std::size_t k = 0; k < layer_widths.size(); ++k) {
    if (layer_widths[k] < 1) {
      throw Error("layer width p" + std::to_string(k + 1) + " must be >= 1");
    }
  }
  if (!activation.eval || !activation.deriv) throw Error("architecture has no activation");
  if (!(activation.deriv_at_zero > 0.0)) throw Error("activation derivative at zero must be > 0");
}

void Dataset::validate() const {
  if (x.rows() != y.size()) throw Error("dataset: x rows and y length differ");
  if (n() < 2) throw Error("dataset: need at least 2 samples");
  if (!x.allFinite() || !y.allFinite()) throw Error("dataset: non-finite entries");
}

void check_shapes(const NetworkParams& params, const Architecture& arch) {
  arch.validate();
  const Eigen::Index l = arch.depth();
  if (static_cast<Eigen::Index>(params.weights.size()) != l) {
    throw ShapeError("expected " + std::to_string(l) + " weight matrices, got " +
                     std::to_string(params.weights.size()));
  }
  if (static_cast<Eigen::Index>(params.hidden_biases.size()) != l - 1) {
    throw ShapeError("expected " + std::to_string(l - 1) + " hidden bias vectors, got " +
                     std::to_string(params.hidden_biases.size()));
  }
  for (Eigen::Index k = 1; k <= l; ++k) {
    const Eigen::MatrixXd& w = params.weights[k - 1];
    const Eigen::Index rows = (k < l) ? arch.layer_widths[k] : 1;
    const Eigen::Index cols = arch.layer_widths[k - 1];
    if (w.rows() != rows || w.cols() != cols) {
      std::ostringstream os;
      os << "layer " << k << ": expected W of shape " << rows << "x" << cols << ", got "
         << shape_of(w);
      throw ShapeError(os.str());
    }
    if (k < l) {
      const Eigen::VectorXd& b = params.hidden_biases[k - 1];
      if (b.size() != rows) {
        std::ostringstream os;
        os << "layer " << k << ": expected bias of length " << rows << ", got " << b.size();
        throw ShapeError(os.str());
      }
    }
  }
}

ForwardTrace forward_trace(const NetworkParams& params, const Architecture& arch,
                           const Eigen::MatrixXd& x_batch) {
  check_shapes(params, arch);
  const Eigen::Index l = arch.depth();
  if (x_batch.cols() != arch.layer_widths[0]) {
    std::ostringstream os;
    os << "layer 1: expected input width " << arch.layer_widths[0] << ", got " << x_batch.cols();
    throw ShapeError(os.str());
  }

  ForwardTrace trace;
  trace.latents.reserve(static_cast<std::size_t>(l));
  trace.preacts.reserve(static_cast<std::size_t>(l - 1));
  trace.latents.push_back(x_batch);

  const auto& act = arch.activation;
  for (Eigen::Index k = 1; k < l; ++k) {
    const Eigen::MatrixXd& u = trace.latents.back();
    const Eigen::MatrixXd& w = params.weights[k - 1];
    Eigen::MatrixXd z = u * w.transpose();
    if (k > 1) {
      for (Eigen::Index j = 0; j < w.rows(); ++j) {
        const double norm = w.row(j).norm();
        if (norm > 0.0) {
          z.col(j) /= norm;
        } else {
          z.col(j).setZero();
        }
      }
    }
    z.rowwise() += params.hidden_biases[k - 1].transpose();
    trace.preacts.push_back(z);
    trace.latents.push_back(z.unaryExpr([&](double v) { return act.eval(v); }));
  }

  const Eigen::VectorXd w_out = params.weights[l - 1].row(0).transpose();
  const double norm = w_out.norm();
  const Eigen::MatrixXd& u_last = trace.latents.back();
  if (norm > 0.0) {
    trace.preds = (u_last * w_out) / norm;
  } else {
    trace.preds = Eigen::VectorXd::Zero(u_last.rows());
  }
  trace.preds.array() += params.output_bias;
  if (!trace.preds.allFinite()) {
    throw Error("forward pass produced non-finite predictions");
  }
  return trace;
}

Eigen::VectorXd forward(const NetworkParams& params, const Architecture& arch,
                        const Eigen::MatrixXd& x_batch) {
  return forward_trace(params, arch, x_batch).preds;
}

Interval bias_bounds(const Eigen::VectorXd& weight_row, const Eigen::MatrixXd& latent_batch,
                     int layer_index, int num_layers) {
  if (layer_index == num_layers) {
    return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  }
  if (latent_batch.cols() != weight_row.size()) {
    std::ostringstream os;
    os << "layer " << layer_index << ": latent batch width " << latent_batch.cols()
       << " does not match weight row length " << weight_row.size();
    throw ShapeError(os.str());
  }
  const Eigen::VectorXd products = latent_batch * weight_row;
  double lo = products.minCoeff();
  double hi = products.maxCoeff();
  if (layer_index > 1) {
    const double norm = weight_row.norm();
    if (norm == 0.0) return {0.0, 0.0};
    lo /= norm;
    hi /= norm;
  }
  return {lo, hi};
}

std::vector<Violation> validate_params(const NetworkParams& params, const Architecture& arch,
                                       const Dataset& dataset) {
  std::vector<Violation> violations;
  const Eigen::Index l = arch.depth();

  // Shape violations are reported as data rather than thrown here.
  try {
    check_shapes(params, arch);
  } catch (const ShapeError& e) {
    violations.push_back({0, -1, e.what()});
    return violations;
  }

  for (Eigen::Index k = 1; k <= l; ++k) {
    if (!params.weights[k - 1].allFinite()) {
      violations.push_back({static_cast<int>(k), -1, "non-finite weight entries"});
    }
    if (k < l && !params.hidden_biases[k - 1].allFinite()) {
      violations.push_back({static_cast<int>(k), -1, "non-finite bias entries"});
    }
  }
  if (!std::isfinite(params.output_bias)) {
    violations.push_back({static_cast<int>(l), -1, "non-finite output bias"});
  }
  if (!violations.empty()) return violations;

  if (dataset.x.cols() != arch.layer_widths[0]) {
    violations.push_back({1, -1, "dataset width does not match p1"});
    return violations;
  }

  // Bias membership, layer by layer, on the latents the constrained network
  // itself produces.
  Eigen::MatrixXd u = dataset.x;
  const auto& act = arch.activation;
  for (Eigen::Index k = 1; k < l; ++k) {
    const Eigen::MatrixXd& w = params.weights[k - 1];
    Eigen::MatrixXd z(u.rows(), w.rows());
    for (Eigen::Index j = 0; j < w.rows(); ++j) {
      const Interval box = bias_bounds(w.row(j).transpose(), u, static_cast<int>(k),
                                       static_cast<int>(l));
      const double b = params.hidden_biases[k - 1][j];
      const double slack = 1e-12 * std::max({1.0, std::abs(box.lo), std::abs(box.hi)});
      if (b < box.lo - slack || b > box.hi + slack) {
        std::ostringstream os;
        os << "bias b_" << k << "," << j << " = " << b << " outside [" << box.lo << ", "
           << box.hi << "]";
        violations.push_back({static_cast<int>(k), j, os.str()});
      }
      const double norm = w.row(j).norm();
      if (k == 1) {
        z.col(j) = u * w.row(j).transpose();
      } else if (norm == 0.0) {
        z.col(j).setZero();
      } else {
        z.col(j) = (u * w.row(j).transpose()) / norm;
      }
      z.col(j).array() += b;
    }
    u = z.unaryExpr([&](double v) { return act.eval(v); });
  }
  return violations;
}

}  // namespace qutnn
