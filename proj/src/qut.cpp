#include "qutnn/qut.hpp"

#include <algorithm>
#include <cmath>

#include "qutnn/errors.hpp"
#include "qutnn/loss_grad.hpp"
#include "qutnn/rng.hpp"
#include "qutnn/threading.hpp"

namespace qutnn {

void QutConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error("qut: alpha must lie in (0, 1)");
  if (mc_samples < 100) throw Error("qut: mc_samples must be >= 100");
}

double sample_lambda_statistic(const Eigen::MatrixXd& x, double deriv_at_zero,
                               std::mt19937_64& rng) {
  if (x.rows() < 2) throw Error("qut: need n >= 2 rows in the design");
  for (int attempt = 0; attempt < 2; ++attempt) {
    Dataset null_draw{x, standard_normal_vector(x.rows(), rng)};
    try {
      return null_gradient_sup(null_draw, deriv_at_zero);
    } catch (const ConstantResponse&) {
      if (attempt == 1) throw;
    }
  }
  throw ConstantResponse("qut: null draw degenerate twice");  // unreachable
}

double empirical_quantile(std::vector<double> samples, double q) {
  if (samples.empty()) throw EmptySample("empirical_quantile: empty sample");
  if (!(q > 0.0 && q < 1.0)) throw Error("empirical_quantile: q must lie in (0, 1)");
  const auto m = samples.size();
  const double target = q * static_cast<double>(m);
  auto k = static_cast<std::size_t>(std::ceil(target));
  // Guard the float product: k is the smallest index with k >= q*m.
  while (k > 1 && static_cast<double>(k - 1) >= target) --k;
  k = std::clamp<std::size_t>(k, 1, m);
  std::nth_element(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   samples.end());
  return samples[k - 1];
}

QutEstimate quantile_universal_threshold(const Eigen::MatrixXd& x, double deriv_at_zero,
                                         const QutConfig& config) {
  config.validate();
  const auto count = static_cast<std::size_t>(config.mc_samples);
  std::vector<double> draws(count);
  parallel_for(count, [&](std::size_t i) {
    auto rng = make_engine(substream_seed(config.seed, i));
    draws[i] = sample_lambda_statistic(x, deriv_at_zero, rng);
  });

  QutEstimate estimate;
  estimate.config = config;
  estimate.lambda_qut = empirical_quantile(draws, 1.0 - config.alpha);
  estimate.sample_min = *std::min_element(draws.begin(), draws.end());
  estimate.sample_max = *std::max_element(draws.begin(), draws.end());
  estimate.sample_median = empirical_quantile(draws, 0.5);
  return estimate;
}

}  // namespace qutnn
