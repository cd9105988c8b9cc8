#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <vector>

namespace qutnn {

struct QutConfig {
  double alpha = 0.05;
  int mc_samples = 10000;
  std::uint64_t seed = 0;

  /// Throws Error unless 0 < alpha < 1 and mc_samples >= 100.
  void validate() const;
};

struct QutEstimate {
  double lambda_qut = 0.0;
  QutConfig config;
  double sample_min = 0.0;
  double sample_median = 0.0;
  double sample_max = 0.0;
};

/// One draw of the null statistic: y* has i.i.d. standard normal entries
/// (unit variance suffices, the statistic is pivotal) and the value is
/// null_gradient_sup(y*, x). A constant draw is retried once, then rethrown.
double sample_lambda_statistic(const Eigen::MatrixXd& x, double deriv_at_zero,
                               std::mt19937_64& rng);

/// Upper order-statistic quantile: the sorted sample at 1-based index
/// ceil(q*m), i.e. the smallest value that sits at or above fraction q of the
/// sample. Throws EmptySample on empty input.
double empirical_quantile(std::vector<double> samples, double q);

/// lambda_QUT: the (1 - alpha) empirical quantile of mc_samples Monte-Carlo
/// draws of the null statistic. Draw i uses the engine seeded with
/// substream_seed(config.seed, i); draws are aggregated by index, so the
/// estimate is bit-identical no matter how many threads run them.
QutEstimate quantile_universal_threshold(const Eigen::MatrixXd& x, double deriv_at_zero,
                                         const QutConfig& config);

}  // namespace qutnn
