// qutnn command line: cross-validation-free feature selection for
// neural-network regression with the quantile universal threshold.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qutnn/errors.hpp"
#include "qutnn/grid_spec.hpp"
#include "qutnn/io.hpp"
#include "qutnn/loss_grad.hpp"
#include "qutnn/network.hpp"
#include "qutnn/optimizer.hpp"
#include "qutnn/qut.hpp"
#include "qutnn/rng.hpp"
#include "qutnn/simulation.hpp"
#include "qutnn/version.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitDegenerate = 3;
constexpr int kExitNumerical = 4;

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void write_manifest(const std::string& dir, const std::string& command, json args,
                    double duration_seconds) {
  json j;
  j["command"] = command;
  j["library_version"] = qutnn::kVersion;
  j["args"] = std::move(args);
  j["duration_seconds"] = duration_seconds;
  qutnn::write_file_atomic((fs::path(dir) / (command + "_manifest.json")).string(),
                           j.dump(2) + "\n");
}

qutnn::Dataset load_dataset(const std::string& path) {
  return qutnn::dataset_from_table(qutnn::read_csv(path));
}

std::vector<Eigen::Index> parse_arch_widths(const std::string& arch_arg, Eigen::Index p1) {
  std::vector<Eigen::Index> widths{p1};
  std::stringstream ss(arch_arg);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      const long v = std::stol(tok);
      if (v < 1) throw std::invalid_argument("width < 1");
      widths.push_back(static_cast<Eigen::Index>(v));
    } catch (const std::exception&) {
      throw qutnn::Error("--arch: invalid layer width '" + tok + "'");
    }
  }
  if (widths.size() < 2) throw qutnn::Error("--arch: need at least one hidden width");
  return widths;
}

struct QutArgs {
  std::string data;
  long n = 0;
  long p1 = 0;
  std::string design = "gaussian";
  double alpha = 0.05;
  int mc = 10000;
  std::uint64_t seed = 0;
  bool standardize = false;
  std::string out = ".";
};

int cmd_qut(const QutArgs& args) {
  Stopwatch watch;
  Eigen::MatrixXd x;
  if (!args.data.empty()) {
    qutnn::Dataset dataset = load_dataset(args.data);
    if (dataset.n() < 2) {
      std::cerr << "qut: need at least 2 data rows\n";
      return kExitDegenerate;
    }
    x = args.standardize
            ? qutnn::apply_standardization(dataset.x, qutnn::compute_standardization(dataset.x))
            : dataset.x;
  } else {
    if (args.n < 2 || args.p1 < 1) {
      std::cerr << "qut: --n must be >= 2 and --p1 >= 1\n";
      return args.n >= 0 && args.n < 2 ? kExitDegenerate : kExitInput;
    }
    auto rng = qutnn::make_engine(qutnn::substream_seed(args.seed, 0xD0));
    x = qutnn::standard_normal_matrix(args.n, args.p1, rng);
  }

  const auto activation = qutnn::softplus_centered();
  qutnn::QutConfig config{args.alpha, args.mc, args.seed};
  const qutnn::QutEstimate estimate =
      qutnn::quantile_universal_threshold(x, activation.deriv_at_zero, config);

  std::cout << qutnn::format_double(estimate.lambda_qut) << "\n";
  qutnn::write_file_atomic((fs::path(args.out) / "qut_estimate.json").string(),
                           qutnn::qut_estimate_to_json(estimate));
  write_manifest(args.out, "qut",
                 json{{"data", args.data},
                      {"n", args.n},
                      {"p1", args.p1},
                      {"design", args.design},
                      {"alpha", args.alpha},
                      {"mc", args.mc},
                      {"seed", args.seed},
                      {"standardize", args.standardize},
                      {"out", args.out}},
                 watch.seconds());
  return kExitOk;
}

struct FitArgs {
  std::string data;
  std::string arch = "16";
  std::string lambda = "qut";
  double alpha = 0.05;
  int mc = 10000;
  int restarts = 1;
  std::uint64_t seed = 0;
  bool standardize = false;
  std::string out = ".";
  qutnn::FitConfig config;
  bool no_fista = false;
  bool no_backtracking = false;
};

int cmd_fit(const FitArgs& args) {
  Stopwatch watch;
  qutnn::Dataset dataset = load_dataset(args.data);
  if (dataset.n() < 2) {
    std::cerr << "fit: need at least 2 data rows\n";
    return kExitDegenerate;
  }

  std::optional<qutnn::Standardization> standardization;
  if (args.standardize) {
    standardization = qutnn::compute_standardization(dataset.x);
    dataset.x = qutnn::apply_standardization(dataset.x, *standardization);
  }

  qutnn::Architecture arch{parse_arch_widths(args.arch, dataset.x.cols()),
                           qutnn::softplus_centered()};

  double lambda = 0.0;
  if (args.lambda == "qut") {
    qutnn::QutConfig qut_config{args.alpha, args.mc, qutnn::substream_seed(args.seed, 0)};
    lambda = qutnn::quantile_universal_threshold(dataset.x, arch.activation.deriv_at_zero,
                                                 qut_config)
                 .lambda_qut;
  } else {
    try {
      std::size_t pos = 0;
      lambda = std::stod(args.lambda, &pos);
      if (pos != args.lambda.size()) throw std::invalid_argument(args.lambda);
    } catch (const std::exception&) {
      throw qutnn::Error("--lambda: expected a number or 'qut', got '" + args.lambda + "'");
    }
    if (lambda < 0.0) throw qutnn::Error("--lambda: must be >= 0");
  }

  qutnn::FitConfig config = args.config;
  config.fista = !args.no_fista;
  config.backtracking = !args.no_backtracking;
  config.init = qutnn::RandomInit{qutnn::substream_seed(args.seed, 1), 0.1};

  qutnn::FitResult result;
  try {
    result = qutnn::multi_start_fit(dataset, arch, lambda, config, args.restarts);
  } catch (const qutnn::NonFiniteObjective& e) {
    // Dump the partial trace for diagnosis before signalling failure.
    std::ostringstream os;
    os << "iter,objective\n";
    for (std::size_t i = 0; i < e.trace().size(); ++i)
      os << i << ',' << qutnn::format_double(e.trace()[i]) << '\n';
    qutnn::write_file_atomic((fs::path(args.out) / "trace_dump.csv").string(), os.str());
    std::cerr << "fit: " << e.what() << " (trace written to trace_dump.csv)\n";
    return kExitNumerical;
  }

  qutnn::Model model{arch, result.params, standardization};
  qutnn::save_model(model, (fs::path(args.out) / "model.json").string());
  qutnn::write_file_atomic((fs::path(args.out) / "support.csv").string(),
                           qutnn::support_to_csv(result.support));
  qutnn::write_file_atomic((fs::path(args.out) / "trace.csv").string(),
                           qutnn::trace_to_csv(result));
  write_manifest(args.out, "fit",
                 json{{"data", args.data},
                      {"arch", args.arch},
                      {"lambda", args.lambda},
                      {"lambda_resolved", lambda},
                      {"alpha", args.alpha},
                      {"mc", args.mc},
                      {"restarts", args.restarts},
                      {"seed", args.seed},
                      {"standardize", args.standardize},
                      {"lr_smooth", config.lr_smooth},
                      {"smooth_iters", config.smooth_iters},
                      {"lr_prox", config.lr_prox},
                      {"prox_iters", config.prox_iters},
                      {"tol", config.tol},
                      {"fista", config.fista},
                      {"backtracking", config.backtracking},
                      {"out", args.out}},
                 watch.seconds());

  std::cout << "lambda=" << qutnn::format_double(lambda)
            << " selected_features=" << result.support.selected_features.size()
            << " active_neurons=" << result.support.active_neurons.size()
            << " objective=" << qutnn::format_double(result.objective_trace.back())
            << " converged=" << (result.converged ? "true" : "false") << "\n";
  return kExitOk;
}

struct SimulateArgs {
  std::string grid;
  int replicates = 20;
  std::string strategy = "oracle";
  int restarts = 1;
  double lambda_multiplier = 1.0;
  std::uint64_t seed = 0;
  double xi = 0.1;
  long n = 300;
  long n_test = 0;
  double alpha = 0.05;
  int mc = 10000;
  bool dry_run = false;
  std::string out = ".";
};

int cmd_simulate(const SimulateArgs& args) {
  Stopwatch watch;
  const std::vector<qutnn::CellSpec> cells = qutnn::parse_grid_spec(args.grid);
  if (qutnn::grid_is_expensive(cells, args.replicates)) {
    std::cerr << "warning: this grid is paper-scale and may run for hours\n";
  }
  if (args.dry_run) {
    std::cout << "grid ok: " << cells.size() << " cells x " << args.replicates
              << " replicates\n";
    return kExitOk;
  }

  qutnn::ExperimentConfig config;
  config.replicates = args.replicates;
  config.strategy =
      args.strategy == "oracle" ? qutnn::Strategy::kOracle : qutnn::Strategy::kNonOracle;
  config.restarts = args.restarts;
  config.lambda_multiplier = args.lambda_multiplier;
  config.base_seed = args.seed;
  config.alpha = args.alpha;
  config.qut_mc_samples = args.mc;
  config.xi = args.xi;
  config.n = args.n;
  config.n_test = args.n_test;

  const qutnn::RecoveryGrid grid = qutnn::recovery_experiment(cells, config);
  qutnn::write_file_atomic((fs::path(args.out) / "recovery_grid.csv").string(),
                           qutnn::recovery_grid_to_csv(grid));
  write_manifest(args.out, "simulate",
                 json{{"grid", args.grid},
                      {"replicates", args.replicates},
                      {"strategy", args.strategy},
                      {"restarts", args.restarts},
                      {"lambda_multiplier", args.lambda_multiplier},
                      {"seed", args.seed},
                      {"xi", args.xi},
                      {"n", args.n},
                      {"n_test", args.n_test},
                      {"alpha", args.alpha},
                      {"mc", args.mc},
                      {"out", args.out}},
                 watch.seconds());
  std::cout << "wrote " << grid.results.size() << " cells to "
            << (fs::path(args.out) / "recovery_grid.csv").string() << "\n";
  return kExitOk;
}

struct PredictArgs {
  std::string model;
  std::string data;
  std::string out = "predictions.csv";
};

int cmd_predict(const PredictArgs& args) {
  Stopwatch watch;
  const qutnn::Model model = qutnn::load_model(args.model);
  const qutnn::CsvTable table = qutnn::read_csv(args.data);

  const Eigen::Index p1 = model.arch.layer_widths[0];
  Eigen::MatrixXd x;
  if (table.values.cols() == p1) {
    x = table.values;
  } else if (table.values.cols() == p1 + 1) {
    x = table.values.leftCols(p1);  // training-format CSV: drop the response
  } else {
    std::cerr << "predict: model expects " << p1 << " features, CSV has " << table.values.cols()
              << " columns\n";
    return kExitInput;
  }
  if (model.standardization) x = qutnn::apply_standardization(x, *model.standardization);

  Eigen::VectorXd preds(0);
  if (x.rows() > 0) preds = qutnn::forward(model.params, model.arch, x);
  qutnn::write_file_atomic(args.out, qutnn::predictions_to_csv(preds));

  const std::string dir = fs::path(args.out).has_parent_path()
                              ? fs::path(args.out).parent_path().string()
                              : std::string(".");
  write_manifest(dir, "predict",
                 json{{"model", args.model}, {"data", args.data}, {"out", args.out}},
                 watch.seconds());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"l1-penalized neural-network feature selection with the quantile universal "
               "threshold"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(qutnn::kVersion));

  QutArgs qut_args;
  auto* qut = app.add_subcommand("qut", "compute lambda_QUT for a design matrix");
  auto* qut_data = qut->add_option("--data", qut_args.data, "CSV (header row; response last)");
  qut->add_option("--n", qut_args.n, "rows of a synthetic design");
  qut->add_option("--p1", qut_args.p1, "columns of a synthetic design");
  qut->add_option("--design", qut_args.design, "synthetic design family")
      ->check(CLI::IsMember({"gaussian"}));
  qut->add_option("--alpha", qut_args.alpha, "quantile level (default 0.05)");
  qut->add_option("--mc", qut_args.mc, "Monte-Carlo draws (default 10000)");
  qut->add_option("--seed", qut_args.seed, "RNG seed");
  qut->add_flag("--standardize", qut_args.standardize, "center/scale feature columns");
  qut->add_option("--out", qut_args.out, "output directory (default .)");

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "fit a sparse network to a CSV dataset");
  fit->add_option("--data", fit_args.data, "CSV (header row; response last)")->required();
  fit->add_option("--arch", fit_args.arch, "hidden widths p2[,p3,...] (default 16)");
  fit->add_option("--lambda", fit_args.lambda, "penalty level, a number or 'qut'");
  fit->add_option("--alpha", fit_args.alpha, "quantile level when --lambda qut");
  fit->add_option("--mc", fit_args.mc, "Monte-Carlo draws when --lambda qut");
  fit->add_option("--restarts", fit_args.restarts, "random restarts (default 1)")
      ->check(CLI::PositiveNumber);
  fit->add_option("--seed", fit_args.seed, "RNG seed");
  fit->add_flag("--standardize", fit_args.standardize, "center/scale feature columns");
  fit->add_option("--out", fit_args.out, "output directory (default .)");
  fit->add_option("--lr-smooth", fit_args.config.lr_smooth, "smooth-phase learning rate");
  fit->add_option("--smooth-iters", fit_args.config.smooth_iters, "smooth-phase iterations");
  fit->add_option("--lr-prox", fit_args.config.lr_prox, "proximal-phase learning rate");
  fit->add_option("--prox-iters", fit_args.config.prox_iters, "proximal-phase iterations");
  fit->add_option("--tol", fit_args.config.tol, "relative-change stop tolerance");
  fit->add_flag("--no-fista", fit_args.no_fista, "disable FISTA momentum");
  fit->add_flag("--no-backtracking", fit_args.no_backtracking, "disable line search");

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "support-recovery experiment grid");
  simulate->add_option("--grid", sim_args.grid, "grid spec, e.g. h=1,2;p1=16,32;p2=16")
      ->required();
  simulate->add_option("--replicates", sim_args.replicates, "replicates per cell (default 20)")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--strategy", sim_args.strategy, "oracle | nonoracle")
      ->check(CLI::IsMember({"oracle", "nonoracle"}));
  simulate->add_option("--restarts", sim_args.restarts, "restarts for nonoracle fits")
      ->check(CLI::PositiveNumber);
  simulate->add_option("--lambda-multiplier", sim_args.lambda_multiplier,
                       "multiple of lambda_QUT (default 1.0)");
  simulate->add_option("--seed", sim_args.seed, "base RNG seed");
  simulate->add_option("--xi", sim_args.xi, "noise standard deviation (default 0.1)");
  simulate->add_option("--n", sim_args.n, "training-set size (default 300)");
  simulate->add_option("--n-test", sim_args.n_test, "test locations (default 100*n)");
  simulate->add_option("--alpha", sim_args.alpha, "QUT level (default 0.05)");
  simulate->add_option("--mc", sim_args.mc, "QUT Monte-Carlo draws (default 10000)");
  simulate->add_flag("--dry-run", sim_args.dry_run, "validate the grid and exit");
  simulate->add_option("--out", sim_args.out, "output directory (default .)");

  PredictArgs predict_args;
  auto* predict = app.add_subcommand("predict", "evaluate a saved model on new data");
  predict->add_option("--model", predict_args.model, "model JSON from fit")->required();
  predict->add_option("--data", predict_args.data, "CSV of feature rows")->required();
  predict->add_option("--out", predict_args.out, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (qut->parsed()) {
      if (qut_args.data.empty() && !(*qut_data) && qut_args.n == 0) {
        std::cerr << "qut: give --data or --n/--p1\n";
        return kExitInput;
      }
      return cmd_qut(qut_args);
    }
    if (fit->parsed()) return cmd_fit(fit_args);
    if (simulate->parsed()) return cmd_simulate(sim_args);
    if (predict->parsed()) return cmd_predict(predict_args);
  } catch (const qutnn::CsvError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const qutnn::ConstantResponse& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDegenerate;
  } catch (const qutnn::NonFiniteObjective& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const qutnn::DegenerateResidual& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const qutnn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
