#include "qutnn/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "qutnn/errors.hpp"
#include "qutnn/rng.hpp"
#include "qutnn/threading.hpp"

namespace qutnn {

namespace {

constexpr int kStopStreak = 50;
constexpr int kMaxBacktracks = 60;

bool params_finite(const NetworkParams& p) {
  for (const auto& w : p.weights)
    if (!w.allFinite()) return false;
  for (const auto& b : p.hidden_biases)
    if (!b.allFinite()) return false;
  return std::isfinite(p.output_bias);
}

NetworkParams step_params(const NetworkParams& p, const Gradients& g, double t) {
  NetworkParams out = p;
  for (std::size_t k = 0; k < out.weights.size(); ++k) out.weights[k] -= t * g.weights[k];
  for (std::size_t k = 0; k < out.hidden_biases.size(); ++k)
    out.hidden_biases[k] -= t * g.hidden_biases[k];
  out.output_bias -= t * g.output_bias;
  return out;
}

double grad_dot_diff(const Gradients& g, const NetworkParams& a, const NetworkParams& b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < g.weights.size(); ++k)
    acc += (g.weights[k].array() * (a.weights[k] - b.weights[k]).array()).sum();
  for (std::size_t k = 0; k < g.hidden_biases.size(); ++k)
    acc += (g.hidden_biases[k].array() * (a.hidden_biases[k] - b.hidden_biases[k]).array()).sum();
  acc += g.output_bias * (a.output_bias - b.output_bias);
  return acc;
}

double sq_diff(const NetworkParams& a, const NetworkParams& b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.weights.size(); ++k)
    acc += (a.weights[k] - b.weights[k]).squaredNorm();
  for (std::size_t k = 0; k < a.hidden_biases.size(); ++k)
    acc += (a.hidden_biases[k] - b.hidden_biases[k]).squaredNorm();
  const double db = a.output_bias - b.output_bias;
  return acc + db * db;
}

NetworkParams combine_momentum(const NetworkParams& cur, const NetworkParams& prev, double beta) {
  NetworkParams out = cur;
  for (std::size_t k = 0; k < out.weights.size(); ++k)
    out.weights[k] += beta * (cur.weights[k] - prev.weights[k]);
  for (std::size_t k = 0; k < out.hidden_biases.size(); ++k)
    out.hidden_biases[k] += beta * (cur.hidden_biases[k] - prev.hidden_biases[k]);
  out.output_bias += beta * (cur.output_bias - prev.output_bias);
  return out;
}

struct Eval {
  double loss = 0.0;
  double objective = 0.0;
};

std::optional<Eval> try_evaluate(const Dataset& dataset, const Architecture& arch,
                                 const NetworkParams& params, double lambda) {
  if (!params_finite(params)) return std::nullopt;
  Eigen::VectorXd preds;
  try {
    preds = forward(params, arch, dataset.x);
  } catch (const ShapeError&) {
    throw;
  } catch (const Error&) {
    return std::nullopt;  // numerical blowup in the forward pass
  }
  Eval e;
  e.loss = sqrt_l2_loss(dataset.y, preds);
  e.objective = e.loss + lambda * params.weights[0].cwiseAbs().sum();
  if (!std::isfinite(e.objective)) return std::nullopt;
  return e;
}

Eval evaluate_or_throw(const Dataset& dataset, const Architecture& arch,
                       const NetworkParams& params, double lambda,
                       const std::vector<double>& trace) {
  auto e = try_evaluate(dataset, arch, params, lambda);
  if (!e) throw NonFiniteObjective("objective became non-finite", trace);
  return *e;
}

/// Tracks the stop criterion: relative objective change below tol for
/// kStopStreak consecutive steps.
class StopWindow {
 public:
  explicit StopWindow(double tol) : tol_(tol) {}

  bool push(double prev, double cur) {
    const double rel = std::abs(cur - prev) / std::max(1.0, std::abs(prev));
    streak_ = rel < tol_ ? streak_ + 1 : 0;
    return streak_ >= kStopStreak;
  }

 private:
  double tol_;
  int streak_ = 0;
};

NetworkParams random_init_params(const Architecture& arch, const Dataset& dataset,
                                 const RandomInit& init) {
  const Eigen::Index l = arch.depth();
  auto rng = make_engine(init.seed);
  NetworkParams params;
  params.weights.reserve(static_cast<std::size_t>(l));
  for (Eigen::Index k = 1; k <= l; ++k) {
    const Eigen::Index rows = (k < l) ? arch.layer_widths[k] : 1;
    const Eigen::Index cols = arch.layer_widths[k - 1];
    params.weights.push_back(init.scale * standard_normal_matrix(rows, cols, rng));
  }
  // Hidden biases at the center of their feasible interval, filled layer by
  // layer so each interval uses the latents the earlier choices induce.
  Eigen::MatrixXd u = dataset.x;
  const auto& act = arch.activation;
  params.hidden_biases.resize(static_cast<std::size_t>(l - 1));
  for (Eigen::Index k = 1; k < l; ++k) {
    const Eigen::MatrixXd& w = params.weights[k - 1];
    Eigen::VectorXd b(w.rows());
    Eigen::MatrixXd z(u.rows(), w.rows());
    for (Eigen::Index j = 0; j < w.rows(); ++j) {
      Eigen::VectorXd products = u * w.row(j).transpose();
      if (k > 1) {
        const double norm = w.row(j).norm();
        if (norm == 0.0) {
          products.setZero();
        } else {
          products /= norm;
        }
      }
      b[j] = 0.5 * (products.minCoeff() + products.maxCoeff());
      z.col(j) = products.array() + b[j];
    }
    params.hidden_biases[k - 1] = b;
    u = z.unaryExpr([&](double v) { return act.eval(v); });
  }
  params.output_bias = dataset.y.mean();
  return params;
}

struct PhaseState {
  NetworkParams params;
  std::vector<double> objective_trace;
  std::vector<double> residual_trace;
  bool converged = false;
};

void run_smooth_phase(const Dataset& dataset, const Architecture& arch, double lambda,
                      const FitConfig& config, PhaseState& state) {
  StopWindow window(config.tol);
  for (int it = 0; it < config.smooth_iters; ++it) {
    Gradients grads;
    try {
      grads = gradient(state.params, arch, dataset);
    } catch (const DegenerateResidual&) {
      state.converged = true;
      return;
    } catch (const ShapeError&) {
      throw;
    } catch (const Error&) {
      throw NonFiniteObjective("non-finite forward pass in smooth phase",
                               state.objective_trace);
    }
    // l1 subgradient on W1, 0 at exact zeros.
    grads.weights[0].array() +=
        lambda * state.params.weights[0].array().unaryExpr(
                     [](double w) { return w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0); });
    NetworkParams next = step_params(state.params, grads, config.lr_smooth);
    state.params = project_biases(next, arch, dataset);

    const Eval e =
        evaluate_or_throw(dataset, arch, state.params, lambda, state.objective_trace);
    const double prev = state.objective_trace.back();
    state.objective_trace.push_back(e.objective);
    state.residual_trace.push_back(e.loss);
    if (window.push(prev, e.objective)) return;
  }
}

void run_proximal_phase(const Dataset& dataset, const Architecture& arch, double lambda,
                        const FitConfig& config, PhaseState& state) {
  StopWindow window(config.tol);
  NetworkParams current = state.params;
  NetworkParams momentum = current;
  double theta = 1.0;
  double step = config.lr_prox;
  double current_obj = state.objective_trace.back();

  for (int it = 0; it < config.prox_iters; ++it) {
    const NetworkParams& base = config.fista ? momentum : current;
    Gradients grads;
    Eigen::VectorXd base_preds;
    try {
      const ForwardTrace trace = forward_trace(base, arch, dataset.x);
      base_preds = trace.preds;
      grads = gradient(base, arch, dataset, trace);
    } catch (const DegenerateResidual&) {
      state.converged = true;
      break;
    } catch (const ShapeError&) {
      throw;
    } catch (const Error&) {
      throw NonFiniteObjective("non-finite forward pass in proximal phase",
                               state.objective_trace);
    }
    const double base_loss = sqrt_l2_loss(dataset.y, base_preds);

    double t = std::min(config.lr_prox, 2.0 * step);
    NetworkParams candidate;
    Eval cand_eval;
    for (int tries = 0;; ++tries) {
      candidate = step_params(base, grads, t);
      candidate.weights[0] =
          candidate.weights[0].unaryExpr([&](double w) { return soft_threshold(w, t * lambda); });
      candidate = project_biases(candidate, arch, dataset);
      const auto e = try_evaluate(dataset, arch, candidate, lambda);
      if (e) {
        cand_eval = *e;
        if (!config.backtracking || tries >= kMaxBacktracks) break;
        // Proximal sufficient decrease on the smooth part around the base point.
        const double quad = base_loss + grad_dot_diff(grads, candidate, base) +
                            sq_diff(candidate, base) / (2.0 * t);
        if (cand_eval.loss <= quad + 1e-15 * std::max(1.0, std::abs(quad))) break;
      } else if (!config.backtracking || tries >= kMaxBacktracks) {
        throw NonFiniteObjective("objective became non-finite in proximal phase",
                                 state.objective_trace);
      }
      t *= 0.5;
    }
    step = t;

    if (!config.fista &&
        cand_eval.objective > current_obj + 1e-15 * std::max(1.0, std::abs(current_obj))) {
      // Monotone mode: refuse the step, shrink, and count the flat iterate
      // toward the stop window.
      step = 0.5 * t;
      state.objective_trace.push_back(current_obj);
      state.residual_trace.push_back(state.residual_trace.back());
      if (window.push(current_obj, current_obj)) {
        state.converged = true;
        break;
      }
      continue;
    }

    if (config.fista) {
      if (cand_eval.objective > current_obj) {
        theta = 1.0;  // adaptive restart keeps the trace usable
        momentum = candidate;
      } else {
        const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
        const double beta = (theta - 1.0) / theta_next;
        momentum = combine_momentum(candidate, current, beta);
        theta = theta_next;
      }
    }

    current = candidate;
    const double prev = current_obj;
    current_obj = cand_eval.objective;
    state.objective_trace.push_back(cand_eval.objective);
    state.residual_trace.push_back(cand_eval.loss);
    if (window.push(prev, cand_eval.objective)) {
      state.converged = true;
      break;
    }
  }
  state.params = current;
}

FitResult finish(PhaseState&& state, int phase_boundary) {
  FitResult result;
  result.params = std::move(state.params);
  result.objective_trace = std::move(state.objective_trace);
  result.residual_trace = std::move(state.residual_trace);
  result.phase_boundary = phase_boundary;
  result.converged = state.converged;
  result.support = support_mask(result.params.weights[0]);
  return result;
}

}  // namespace

void FitConfig::validate() const {
  if (!(lr_smooth > 0.0) || !(lr_prox > 0.0)) throw Error("fit: learning rates must be > 0");
  if (smooth_iters < 1 || prox_iters < 1) throw Error("fit: iteration counts must be >= 1");
  if (tol < 0.0) throw Error("fit: tol must be >= 0");
}

SupportMask support_mask(const Eigen::MatrixXd& w1) {
  SupportMask support;
  support.mask = w1.array() != 0.0;
  for (Eigen::Index j = 0; j < w1.cols(); ++j) {
    if (support.mask.col(j).any()) support.selected_features.push_back(j);
  }
  for (Eigen::Index i = 0; i < w1.rows(); ++i) {
    if (support.mask.row(i).any()) support.active_neurons.push_back(i);
  }
  return support;
}

NetworkParams project_biases(const NetworkParams& params, const Architecture& arch,
                             const Dataset& dataset) {
  check_shapes(params, arch);
  const Eigen::Index l = arch.depth();
  NetworkParams out = params;
  Eigen::MatrixXd u = dataset.x;
  const auto& act = arch.activation;
  for (Eigen::Index k = 1; k < l; ++k) {
    const Eigen::MatrixXd& w = out.weights[k - 1];
    Eigen::MatrixXd z(u.rows(), w.rows());
    for (Eigen::Index j = 0; j < w.rows(); ++j) {
      Eigen::VectorXd products = u * w.row(j).transpose();
      if (k > 1) {
        const double norm = w.row(j).norm();
        if (norm == 0.0) {
          products.setZero();
        } else {
          products /= norm;
        }
      }
      const double lo = products.minCoeff();
      const double hi = products.maxCoeff();
      double& b = out.hidden_biases[k - 1][j];
      b = std::clamp(b, lo, hi);
      z.col(j) = products.array() + b;
    }
    u = z.unaryExpr([&](double v) { return act.eval(v); });
  }
  return out;
}

FitResult fit(const Dataset& dataset, const Architecture& arch, double lambda,
              const FitConfig& config) {
  config.validate();
  arch.validate();
  dataset.validate();
  if (lambda < 0.0) throw Error("fit: lambda must be >= 0");
  if ((dataset.y.array() - dataset.y.mean()).matrix().norm() <= kResidualEps) {
    throw ConstantResponse("fit: response is constant");
  }

  PhaseState state;
  if (const auto* oracle = std::get_if<OracleInit>(&config.init)) {
    check_shapes(oracle->params, arch);
    state.params = project_biases(oracle->params, arch, dataset);
  } else {
    state.params = random_init_params(arch, dataset, std::get<RandomInit>(config.init));
  }

  const Eval e0 = evaluate_or_throw(dataset, arch, state.params, lambda, {});
  state.objective_trace.push_back(e0.objective);
  state.residual_trace.push_back(e0.loss);

  run_smooth_phase(dataset, arch, lambda, config, state);
  const int phase_boundary = static_cast<int>(state.objective_trace.size());
  if (!state.converged) {
    run_proximal_phase(dataset, arch, lambda, config, state);
  }
  return finish(std::move(state), phase_boundary);
}

FitResult proximal_fit(const Dataset& dataset, const Architecture& arch, double lambda,
                       NetworkParams start, const FitConfig& config) {
  config.validate();
  arch.validate();
  dataset.validate();
  if (lambda < 0.0) throw Error("fit: lambda must be >= 0");
  check_shapes(start, arch);

  PhaseState state;
  state.params = project_biases(start, arch, dataset);
  const Eval e0 = evaluate_or_throw(dataset, arch, state.params, lambda, {});
  state.objective_trace.push_back(e0.objective);
  state.residual_trace.push_back(e0.loss);
  run_proximal_phase(dataset, arch, lambda, config, state);
  return finish(std::move(state), 1);
}

FitResult multi_start_fit(const Dataset& dataset, const Architecture& arch, double lambda,
                          const FitConfig& config, int restarts) {
  if (restarts < 1) throw Error("multi_start_fit: restarts must be >= 1");
  std::uint64_t master = 0;
  double scale = 0.1;
  if (const auto* random = std::get_if<RandomInit>(&config.init)) {
    master = random->seed;
    scale = random->scale;
  }

  std::vector<FitResult> results(static_cast<std::size_t>(restarts));
  parallel_for(static_cast<std::size_t>(restarts), [&](std::size_t r) {
    FitConfig local = config;
    local.init = RandomInit{substream_seed(master, r), scale};
    results[r] = fit(dataset, arch, lambda, local);
  });

  std::size_t best = 0;
  for (std::size_t r = 1; r < results.size(); ++r) {
    if (results[r].objective_trace.back() < results[best].objective_trace.back()) best = r;
  }
  return std::move(results[best]);
}

}  // namespace qutnn
