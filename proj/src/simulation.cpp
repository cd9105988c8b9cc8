#include "qutnn/simulation.hpp"

#include <algorithm>
#include <cmath>

#include "qutnn/errors.hpp"
#include "qutnn/loss_grad.hpp"
#include "qutnn/rng.hpp"
#include "qutnn/threading.hpp"

namespace qutnn {

void TeacherSpec::validate() const {
  if (h < 1) throw Error("teacher: h must be >= 1");
  if (2 * static_cast<Eigen::Index>(h) > p1) throw Error("teacher: need 2h <= p1");
  if (static_cast<Eigen::Index>(h) > p2) throw Error("teacher: need h <= p2");
  if (n < 2) throw Error("teacher: need n >= 2");
  if (xi < 0.0) throw Error("teacher: xi must be >= 0");
}

Architecture teacher_architecture(const TeacherSpec& spec) {
  return Architecture{{spec.p1, spec.p2}, softplus_centered()};
}

NetworkParams generate_teacher(const TeacherSpec& spec) {
  spec.validate();
  NetworkParams teacher;
  Eigen::MatrixXd w1 = Eigen::MatrixXd::Zero(spec.p2, spec.p1);
  for (int i = 0; i < spec.h; ++i) {
    w1(i, 2 * i) = -1.0;
    w1(i, 2 * i + 1) = 1.0;
  }
  Eigen::MatrixXd w2 = Eigen::MatrixXd::Zero(1, spec.p2);
  w2.leftCols(spec.h).setOnes();
  teacher.weights = {std::move(w1), std::move(w2)};
  teacher.hidden_biases = {Eigen::VectorXd::Zero(spec.p2)};
  teacher.output_bias = spec.b2;
  return teacher;
}

Dataset generate_dataset(const NetworkParams& teacher, const TeacherSpec& spec,
                         std::uint64_t seed) {
  spec.validate();
  const Architecture arch = teacher_architecture(spec);
  auto design_rng = make_engine(substream_seed(seed, 0));
  Dataset dataset;
  dataset.x = standard_normal_matrix(spec.n, spec.p1, design_rng);
  dataset.y = forward(teacher, arch, dataset.x);
  if (spec.xi > 0.0) {
    auto noise_rng = make_engine(substream_seed(seed, 1));
    dataset.y += spec.xi * standard_normal_vector(spec.n, noise_rng);
  }
  return dataset;
}

bool exact_support_recovery(const SupportMask& estimated, const NetworkParams& teacher) {
  const Eigen::MatrixXd& w1 = teacher.weights[0];
  if (estimated.mask.rows() != w1.rows() || estimated.mask.cols() != w1.cols()) {
    throw ShapeError("support mask shape does not match the teacher's W1");
  }
  // Hidden neurons are exchangeable: canonicalize both patterns by
  // lexicographic row sort before comparing.
  auto rows_of = [](auto&& getter, Eigen::Index rows, Eigen::Index cols) {
    std::vector<std::vector<bool>> out(static_cast<std::size_t>(rows));
    for (Eigen::Index i = 0; i < rows; ++i) {
      out[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(cols));
      for (Eigen::Index j = 0; j < cols; ++j)
        out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = getter(i, j);
    }
    std::sort(out.begin(), out.end());
    return out;
  };
  const auto est = rows_of([&](Eigen::Index i, Eigen::Index j) { return estimated.mask(i, j); },
                           estimated.mask.rows(), estimated.mask.cols());
  const auto truth = rows_of([&](Eigen::Index i, Eigen::Index j) { return w1(i, j) != 0.0; },
                             w1.rows(), w1.cols());
  return est == truth;
}

double generalization_rmse(const NetworkParams& fitted, const Architecture& fitted_arch,
                           const NetworkParams& teacher, const Architecture& teacher_arch,
                           Eigen::Index n_test, std::uint64_t seed) {
  if (n_test < 1) throw Error("generalization_rmse: n_test must be >= 1");
  const Eigen::Index p1 = teacher_arch.layer_widths[0];
  if (fitted_arch.layer_widths[0] != p1) {
    throw ShapeError("fitted and teacher networks disagree on the input width");
  }
  auto rng = make_engine(substream_seed(seed, 0));
  constexpr Eigen::Index kChunk = 8192;
  double acc = 0.0;
  for (Eigen::Index done = 0; done < n_test; done += kChunk) {
    const Eigen::Index rows = std::min(kChunk, n_test - done);
    const Eigen::MatrixXd x = standard_normal_matrix(rows, p1, rng);
    acc += (forward(fitted, fitted_arch, x) - forward(teacher, teacher_arch, x)).squaredNorm();
  }
  return std::sqrt(acc / static_cast<double>(n_test));
}

namespace {

struct ReplicateOutcome {
  bool failed = false;
  bool recovered = false;
  double rmse = 0.0;
};

ReplicateOutcome run_replicate(const CellSpec& cell, const ExperimentConfig& config,
                               std::uint64_t replicate_seed) {
  TeacherSpec spec;
  spec.h = cell.h;
  spec.p1 = cell.p1;
  spec.p2 = cell.p2;
  spec.xi = config.xi;
  spec.n = config.n;

  const NetworkParams teacher = generate_teacher(spec);
  const Architecture arch = teacher_architecture(spec);
  const Dataset dataset = generate_dataset(teacher, spec, substream_seed(replicate_seed, 0));

  QutConfig qut_config;
  qut_config.alpha = config.alpha;
  qut_config.mc_samples = config.qut_mc_samples;
  qut_config.seed = substream_seed(replicate_seed, 1);
  const QutEstimate qut =
      quantile_universal_threshold(dataset.x, arch.activation.deriv_at_zero, qut_config);
  const double lambda = qut.lambda_qut * config.lambda_multiplier;

  FitConfig fit_config = config.fit;
  FitResult result;
  if (config.strategy == Strategy::kOracle) {
    fit_config.init = OracleInit{teacher};
    result = fit(dataset, arch, lambda, fit_config);
  } else {
    fit_config.init = RandomInit{substream_seed(replicate_seed, 2), 0.1};
    result = multi_start_fit(dataset, arch, lambda, fit_config, config.restarts);
  }

  ReplicateOutcome outcome;
  outcome.recovered = exact_support_recovery(result.support, teacher);
  const Eigen::Index n_test = config.n_test > 0 ? config.n_test : 100 * config.n;
  outcome.rmse = generalization_rmse(result.params, arch, teacher, arch, n_test,
                                     substream_seed(replicate_seed, 3));
  return outcome;
}

}  // namespace

RecoveryGrid recovery_experiment(const std::vector<CellSpec>& grid,
                                 const ExperimentConfig& config) {
  if (grid.empty()) throw Error("recovery_experiment: empty grid");
  if (config.replicates < 1) throw Error("recovery_experiment: replicates must be >= 1");

  const auto cells = grid.size();
  const auto reps = static_cast<std::size_t>(config.replicates);
  std::vector<ReplicateOutcome> outcomes(cells * reps);

  parallel_for(cells * reps, [&](std::size_t task) {
    const std::size_t cell_idx = task / reps;
    const std::size_t rep = task % reps;
    const std::uint64_t replicate_seed = substream_seed(config.base_seed, task);
    try {
      outcomes[task] = run_replicate(grid[cell_idx], config, replicate_seed);
    } catch (const Error&) {
      outcomes[task].failed = true;
    }
    (void)rep;
  });

  RecoveryGrid result;
  result.cells = grid;
  result.results.resize(cells);
  for (std::size_t c = 0; c < cells; ++c) {
    CellResult& cell = result.results[c];
    cell.cell = grid[c];
    cell.replicates = config.replicates;
    int recovered = 0;
    int ok = 0;
    double rmse_sum = 0.0;
    for (std::size_t r = 0; r < reps; ++r) {
      const ReplicateOutcome& o = outcomes[c * reps + r];
      if (o.failed) {
        ++cell.failures;
        continue;
      }
      ++ok;
      recovered += o.recovered ? 1 : 0;
      rmse_sum += o.rmse;
    }
    cell.recovery_probability = static_cast<double>(recovered) / config.replicates;
    cell.mean_generalization_rmse = ok > 0 ? rmse_sum / ok : 0.0;
  }
  return result;
}

}  // namespace qutnn
