#include <doctest.h>

#include <cmath>

#include "qutnn/errors.hpp"
#include "qutnn/loss_grad.hpp"
#include "test_helpers.hpp"

using namespace qutnn;
using qutnn_test::finite_difference_gradient;
using qutnn_test::gradients_close;
using qutnn_test::random_dataset;
using qutnn_test::random_params;

TEST_CASE("sqrt_l2_loss basics") {
  Eigen::VectorXd y(3), preds(3);
  y << 3.0, -1.0, 2.0;
  preds << 1.0, 1.0, 1.0;
  CHECK(sqrt_l2_loss(y, y) == 0.0);
  CHECK(sqrt_l2_loss(Eigen::VectorXd::Ones(2), Eigen::VectorXd::Zero(2)) ==
        doctest::Approx(std::sqrt(2.0)));
  CHECK(sqrt_l2_loss(y, preds) == doctest::Approx(3.0));
}

TEST_CASE("objective adds the l1 penalty on w1") {
  Eigen::VectorXd y(3), preds(3);
  y << 3.0, -1.0, 2.0;
  preds << 1.0, 1.0, 1.0;
  Eigen::MatrixXd w1(1, 2);
  w1 << 1.0, -2.0;
  CHECK(objective(y, preds, w1, 0.0) == doctest::Approx(3.0));
  CHECK(objective(y, preds, Eigen::MatrixXd::Zero(2, 2), 0.7) == doctest::Approx(3.0));
  CHECK(objective(y, preds, w1, 0.5) == doctest::Approx(4.5));
}

TEST_CASE("objective is 1-homogeneous in the residual scale when w1 = 0") {
  auto rng = make_engine(17);
  const Eigen::VectorXd y = standard_normal_vector(8, rng);
  const Eigen::VectorXd preds = standard_normal_vector(8, rng);
  const Eigen::MatrixXd w1 = Eigen::MatrixXd::Zero(3, 2);
  const double base = objective(y, preds, w1, 1.3);
  for (const double c : {0.2, 5.0}) {
    const Eigen::VectorXd yc = preds + c * (y - preds);
    CHECK(objective(yc, preds, w1, 1.3) == doctest::Approx(c * base).epsilon(1e-12));
  }
}

TEST_CASE("gradient matches central finite differences on random configurations") {
  auto rng = make_engine(2024);
  std::uniform_int_distribution<Eigen::Index> n_dist(4, 20);
  std::uniform_int_distribution<Eigen::Index> p1_dist(1, 5);
  std::uniform_int_distribution<Eigen::Index> p2_dist(1, 4);
  std::uniform_int_distribution<Eigen::Index> p3_dist(1, 3);
  std::uniform_int_distribution<int> depth_dist(2, 3);

  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Eigen::Index> widths{p1_dist(rng), p2_dist(rng)};
    if (depth_dist(rng) == 3) widths.push_back(p3_dist(rng));
    const Architecture arch{widths, softplus_centered()};
    const Dataset dataset = random_dataset(n_dist(rng), widths[0], rng);
    const NetworkParams params = random_params(arch, rng);

    const Gradients got = gradient(params, arch, dataset);
    const Gradients want = finite_difference_gradient(params, arch, dataset);
    CHECK(gradients_close(got, want, 1e-5, 1e-7));
  }
}

TEST_CASE("gradient refuses the non-differentiable point") {
  const Architecture arch{{2, 2}, softplus_centered()};
  auto rng = make_engine(9);
  Dataset dataset = random_dataset(6, 2, rng);
  NetworkParams params = random_params(arch, rng);
  params.weights[0].setZero();
  params.hidden_biases[0].setZero();
  dataset.y = forward(params, arch, dataset.x);  // exact interpolation
  CHECK_THROWS_AS(gradient(params, arch, dataset), DegenerateResidual);
}

TEST_CASE("shifting y and b_l together leaves the W1 gradient unchanged") {
  auto rng = make_engine(55);
  const Architecture arch{{3, 2}, softplus_centered()};
  const Dataset dataset = random_dataset(12, 3, rng);
  const NetworkParams params = random_params(arch, rng);
  const Gradients base = gradient(params, arch, dataset);

  const double c = 4.25;
  Dataset shifted = dataset;
  shifted.y.array() += c;
  NetworkParams shifted_params = params;
  shifted_params.output_bias += c;
  const Gradients moved = gradient(shifted_params, arch, shifted);
  CHECK((moved.weights[0] - base.weights[0]).cwiseAbs().maxCoeff() <= 1e-12);
}

namespace {

NetworkParams null_point_params(const Architecture& arch, const Eigen::RowVectorXd& w2,
                                double ybar) {
  NetworkParams params;
  params.weights = {Eigen::MatrixXd::Zero(arch.layer_widths[1], arch.layer_widths[0]), w2};
  params.hidden_biases = {Eigen::VectorXd::Zero(arch.layer_widths[1])};
  params.output_bias = ybar;
  return params;
}

// Supplement formula for the W1 gradient at the null point, written for an
// unnormalized second layer. The analytic derivative of ||y - mu||_2 carries
// a minus sign relative to the displayed expression; finite differences
// confirm the sign used here.
Eigen::MatrixXd null_point_w1_gradient(const Dataset& dataset, const Eigen::RowVectorXd& w2,
                                       double deriv_at_zero) {
  const double ybar = dataset.y.mean();
  const Eigen::VectorXd centered = dataset.y.array() - ybar;
  const Eigen::VectorXd corr = dataset.x.transpose() * centered;  // length p1
  return -(deriv_at_zero / (centered.norm() * w2.norm())) * w2.transpose() * corr.transpose();
}

}  // namespace

TEST_CASE("closed-form null-point gradient: entries, sup-norm, supremum property") {
  auto rng = make_engine(77);
  const Eigen::Index n = 14, p1 = 4, p2 = 3;
  const Architecture arch{{p1, p2}, softplus_centered()};
  const Dataset dataset = random_dataset(n, p1, rng);
  const double d0 = arch.activation.deriv_at_zero;
  const double sup = null_gradient_sup(dataset, d0);

  SUBCASE("entrywise agreement with the supplement formula") {
    const Eigen::RowVectorXd w2 = standard_normal_vector(p2, rng).transpose();
    const NetworkParams params = null_point_params(arch, w2, dataset.y.mean());
    const Gradients got = gradient(params, arch, dataset);
    const Eigen::MatrixXd want = null_point_w1_gradient(dataset, w2, d0);
    CHECK((got.weights[0] - want).cwiseAbs().maxCoeff() <= 1e-12);
    const Gradients fd = finite_difference_gradient(params, arch, dataset);
    CHECK((fd.weights[0] - want).cwiseAbs().maxCoeff() <= 1e-5);
  }

  SUBCASE("canonical w2 attains the closed form exactly") {
    Eigen::RowVectorXd w2 = Eigen::RowVectorXd::Zero(p2);
    w2[1] = 1.0;
    const NetworkParams params = null_point_params(arch, w2, dataset.y.mean());
    const Gradients got = gradient(params, arch, dataset);
    const double inf_norm = got.weights[0].cwiseAbs().maxCoeff();
    CHECK(std::abs(inf_norm - sup) <= 1e-10 * sup);
  }

  SUBCASE("no unit w2 exceeds the supremum") {
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::RowVectorXd w2 = standard_normal_vector(p2, rng).transpose();
      w2 /= w2.norm();
      const NetworkParams params = null_point_params(arch, w2, dataset.y.mean());
      const Gradients got = gradient(params, arch, dataset);
      CHECK(got.weights[0].cwiseAbs().maxCoeff() <= sup + 1e-12);
    }
  }
}

TEST_CASE("null_gradient_sup: hand-evaluated closed form") {
  Dataset dataset;
  dataset.x.resize(2, 1);
  dataset.x << 1.0, -1.0;
  dataset.y.resize(2);
  dataset.y << 1.0, -1.0;
  const double got = null_gradient_sup(dataset, 0.5);
  CHECK(got == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  CHECK(got == doctest::Approx(0.70711).epsilon(1e-5));
}

TEST_CASE("null_gradient_sup: columns orthogonal to the centered response give zero") {
  Dataset dataset;
  dataset.x.resize(4, 2);
  dataset.x << 1.0, 2.0, 1.0, -2.0, -1.0, 2.0, -1.0, -2.0;
  dataset.y.resize(4);
  dataset.y << 1.0, -1.0, -1.0, 1.0;
  CHECK(null_gradient_sup(dataset, 0.5) == doctest::Approx(0.0).epsilon(0.0));
}

TEST_CASE("null_gradient_sup is exactly pivotal under affine response maps") {
  auto rng = make_engine(31337);
  const Dataset dataset = random_dataset(25, 6, rng);
  const double base = null_gradient_sup(dataset, 0.5);
  for (const double c : {0.1, 1.0, 10.0}) {
    for (const double d : {0.0, 10.0}) {
      Dataset mapped = dataset;
      mapped.y = c * dataset.y.array() + d;
      const double got = null_gradient_sup(mapped, 0.5);
      CHECK(std::abs(got - base) <= 1e-12 * std::max(1.0, base));
    }
  }
}

TEST_CASE("null_gradient_sup rejects constant responses") {
  Dataset dataset;
  dataset.x = Eigen::MatrixXd::Ones(5, 2);
  dataset.y = Eigen::VectorXd::Constant(5, 3.0);
  CHECK_THROWS_AS(null_gradient_sup(dataset, 0.5), ConstantResponse);
}
