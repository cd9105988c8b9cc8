#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "qutnn/network.hpp"
#include "qutnn/optimizer.hpp"
#include "qutnn/qut.hpp"
#include "qutnn/simulation.hpp"

namespace qutnn {

/// Parsed numeric CSV: header row plus an n x m matrix of finite doubles.
struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;
};

/// Reads a comma-separated table. The first row is the required header; every
/// other cell must parse as a finite double. Throws CsvError with the 1-based
/// line and column otherwise.
CsvTable read_csv(const std::string& path);

/// Splits a table into features (all but the last column) and response (last
/// column). Throws CsvError when there are fewer than two columns.
Dataset dataset_from_table(const CsvTable& table);

/// Per-column centering/scaling recorded at fit time and replayed at
/// prediction time.
struct Standardization {
  Eigen::VectorXd means;
  Eigen::VectorXd scales;  // columns with zero spread keep scale 1
};

Standardization compute_standardization(const Eigen::MatrixXd& x);
Eigen::MatrixXd apply_standardization(const Eigen::MatrixXd& x, const Standardization& s);

/// A fitted model as stored on disk: architecture, parameters and the
/// optional input standardization.
struct Model {
  Architecture arch;
  NetworkParams params;
  std::optional<Standardization> standardization;
};

std::string model_to_json(const Model& model);
Model model_from_json(const std::string& text);

void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

std::string qut_estimate_to_json(const QutEstimate& estimate);

/// Writes `content` to `path` via a temp file and rename.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

/// Shortest-round-trip decimal form of a double (17 significant digits when
/// needed); the single formatting used in every CSV the library writes.
std::string format_double(double v);

/// recovery grid -> CSV with columns
/// h,p1,p2,recovery_probability,mean_rmse,replicates,failures.
std::string recovery_grid_to_csv(const RecoveryGrid& grid);

std::string predictions_to_csv(const Eigen::VectorXd& preds);

std::string support_to_csv(const SupportMask& support);

std::string trace_to_csv(const FitResult& result);

}  // namespace qutnn
