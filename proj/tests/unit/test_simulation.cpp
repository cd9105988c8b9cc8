#include <doctest.h>

#include <cmath>

#include "qutnn/errors.hpp"
#include "qutnn/grid_spec.hpp"
#include "qutnn/io.hpp"
#include "qutnn/simulation.hpp"
#include "test_helpers.hpp"

using namespace qutnn;

TEST_CASE("generate_teacher lays out needles and the active output row") {
  TeacherSpec spec;
  spec.h = 1;
  spec.p1 = 4;
  spec.p2 = 2;
  const NetworkParams teacher = generate_teacher(spec);

  Eigen::MatrixXd w1(2, 4);
  w1 << -1, 1, 0, 0, 0, 0, 0, 0;
  CHECK((teacher.weights[0] - w1).cwiseAbs().maxCoeff() == 0.0);
  Eigen::RowVectorXd w2(2);
  w2 << 1, 0;
  CHECK((teacher.weights[1] - w2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(teacher.hidden_biases[0].cwiseAbs().maxCoeff() == 0.0);
  CHECK(teacher.output_bias == 10.0);
}

TEST_CASE("teacher forward matches the closed form") {
  const Architecture arch2 = teacher_architecture(TeacherSpec{1, 4, 2});
  const NetworkParams teacher1 = generate_teacher(TeacherSpec{1, 4, 2});

  SUBCASE("x = 0 gives exactly b2") {
    const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(3, 4);
    const Eigen::VectorXd preds = forward(teacher1, arch2, x);
    for (Eigen::Index i = 0; i < preds.size(); ++i) CHECK(preds[i] == 10.0);
  }

  SUBCASE("h = 2 with unit needle gaps") {
    TeacherSpec spec;
    spec.h = 2;
    spec.p1 = 4;
    spec.p2 = 3;
    const NetworkParams teacher = generate_teacher(spec);
    const Architecture arch = teacher_architecture(spec);
    Eigen::MatrixXd x(1, 4);
    x << 0.0, 1.0, 0.5, 1.5;  // x2 - x1 = 1, x4 - x3 = 1
    const double sigma1 = std::log((1.0 + std::exp(1.0)) / 2.0);
    const double expected = 10.0 + std::sqrt(2.0) * sigma1;
    const double got = forward(teacher, arch, x)[0];
    CHECK(got == doctest::Approx(expected).epsilon(1e-13));
    CHECK(got == doctest::Approx(10.87697).epsilon(1e-5));
  }
}

TEST_CASE("teacher parameters are feasible on Gaussian training data") {
  for (const std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
    TeacherSpec spec;
    spec.h = 2;
    spec.p1 = 8;
    spec.p2 = 4;
    spec.n = 60;
    const NetworkParams teacher = generate_teacher(spec);
    const Dataset dataset = generate_dataset(teacher, spec, seed);
    CHECK(validate_params(teacher, teacher_architecture(spec), dataset).empty());
  }
}

TEST_CASE("generate_dataset: determinism, noiseless exactness, noise scale") {
  TeacherSpec spec;
  spec.h = 1;
  spec.p1 = 6;
  spec.p2 = 3;
  spec.n = 300;
  const NetworkParams teacher = generate_teacher(spec);
  const Architecture arch = teacher_architecture(spec);

  SUBCASE("same seed, same bytes") {
    const Dataset a = generate_dataset(teacher, spec, 11);
    const Dataset b = generate_dataset(teacher, spec, 11);
    CHECK((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.y - b.y).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("xi = 0 reproduces the teacher exactly on the same design") {
    TeacherSpec clean = spec;
    clean.xi = 0.0;
    const Dataset noisy = generate_dataset(teacher, spec, 11);
    const Dataset exact = generate_dataset(teacher, clean, 11);
    CHECK((noisy.x - exact.x).cwiseAbs().maxCoeff() == 0.0);
    CHECK((exact.y - forward(teacher, arch, exact.x)).cwiseAbs().maxCoeff() == 0.0);
  }

  SUBCASE("empirical noise variance is near xi^2") {
    const Dataset dataset = generate_dataset(teacher, spec, 21);
    const Eigen::VectorXd noise = dataset.y - forward(teacher, arch, dataset.x);
    const double var = noise.squaredNorm() / static_cast<double>(noise.size());
    CHECK(var > 0.7 * spec.xi * spec.xi);
    CHECK(var < 1.3 * spec.xi * spec.xi);
  }
}

TEST_CASE("exact_support_recovery is permutation-invariant and strict") {
  TeacherSpec spec;
  spec.h = 2;
  spec.p1 = 6;
  spec.p2 = 3;
  const NetworkParams teacher = generate_teacher(spec);

  SupportMask estimate;
  estimate.mask = teacher.weights[0].array() != 0.0;
  CHECK(exact_support_recovery(estimate, teacher));

  SUBCASE("one extra nonzero breaks it") {
    SupportMask extra = estimate;
    extra.mask(2, 5) = true;
    CHECK(!exact_support_recovery(extra, teacher));
  }

  SUBCASE("one missing nonzero breaks it") {
    SupportMask missing = estimate;
    missing.mask(0, 0) = false;
    CHECK(!exact_support_recovery(missing, teacher));
  }

  SUBCASE("row permutations do not matter") {
    SupportMask permuted = estimate;
    permuted.mask.row(0).swap(permuted.mask.row(2));
    CHECK(exact_support_recovery(permuted, teacher));
  }

  SUBCASE("column permutations do matter") {
    SupportMask wrong = estimate;
    wrong.mask.col(0).swap(wrong.mask.col(5));
    CHECK(!exact_support_recovery(wrong, teacher));
  }
}

TEST_CASE("generalization_rmse: zero for the teacher itself, oracle value for constants") {
  TeacherSpec spec;
  spec.h = 1;
  spec.p1 = 4;
  spec.p2 = 2;
  const NetworkParams teacher = generate_teacher(spec);
  const Architecture arch = teacher_architecture(spec);

  CHECK(generalization_rmse(teacher, arch, teacher, arch, 5000, 3) == 0.0);

  // Monte-Carlo oracle: the teacher minus a constant b2 is sigma(sqrt(2) Z).
  auto rng = make_engine(999);
  const int oracle_draws = 1000000;
  const auto act = softplus_centered();
  double sum = 0.0, sumsq = 0.0;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < oracle_draws; ++i) {
    const double s = act.eval(std::sqrt(2.0) * normal(rng));
    sum += s;
    sumsq += s * s;
  }
  const double mean = sum / oracle_draws;
  const double uncentered = std::sqrt(sumsq / oracle_draws);
  const double centered = std::sqrt(sumsq / oracle_draws - mean * mean);

  NetworkParams flat = teacher;
  flat.weights[0].setZero();
  flat.weights[1].setZero();
  flat.weights[1](0, 0) = 1.0;  // keep a nonzero output row; hidden latent is 0 anyway

  SUBCASE("constant prediction at b2") {
    const double rmse = generalization_rmse(flat, arch, teacher, arch, 200000, 17);
    CHECK(rmse == doctest::Approx(uncentered).epsilon(0.01));
  }

  SUBCASE("constant prediction at the optimal constant") {
    NetworkParams best = flat;
    best.output_bias = teacher.output_bias + mean;
    const double rmse = generalization_rmse(best, arch, teacher, arch, 200000, 17);
    CHECK(rmse == doctest::Approx(centered).epsilon(0.01));
  }
}

TEST_CASE("recovery_experiment: easy cell smoke run and determinism") {
  ExperimentConfig config;
  config.replicates = 2;
  config.strategy = Strategy::kOracle;
  config.base_seed = 31;
  config.xi = 0.0;  // oracle init on noiseless data converges at the teacher
  config.n = 40;
  config.n_test = 500;
  config.qut_mc_samples = 100;
  config.fit.smooth_iters = 50;
  config.fit.prox_iters = 50;

  const std::vector<CellSpec> grid{{1, 4, 2}};
  const RecoveryGrid a = recovery_experiment(grid, config);
  REQUIRE(a.results.size() == 1);
  CHECK(a.results[0].recovery_probability == 1.0);
  CHECK(a.results[0].failures == 0);
  CHECK(a.results[0].mean_generalization_rmse == doctest::Approx(0.0).epsilon(0.0));

  const RecoveryGrid b = recovery_experiment(grid, config);
  CHECK(recovery_grid_to_csv(a) == recovery_grid_to_csv(b));
}

TEST_CASE("recovery_experiment: oracle dominates non-oracle on a small cell") {
  ExperimentConfig config;
  config.replicates = 6;
  config.base_seed = 7;
  config.xi = 0.1;
  config.n = 120;
  config.n_test = 2000;
  config.qut_mc_samples = 400;
  config.fit.smooth_iters = 1200;
  config.fit.prox_iters = 1200;

  const std::vector<CellSpec> grid{{1, 6, 4}};
  config.strategy = Strategy::kOracle;
  const RecoveryGrid oracle = recovery_experiment(grid, config);
  config.strategy = Strategy::kNonOracle;
  config.restarts = 2;
  const RecoveryGrid nonoracle = recovery_experiment(grid, config);

  const double slack = 2.0 / std::sqrt(static_cast<double>(config.replicates));
  CHECK(oracle.results[0].recovery_probability >=
        nonoracle.results[0].recovery_probability - slack);
}

TEST_CASE("teacher spec validation") {
  CHECK_THROWS_AS(TeacherSpec{3, 4, 4}.validate(), Error);   // 2h > p1
  CHECK_THROWS_AS(TeacherSpec{3, 8, 2}.validate(), Error);   // h > p2
  CHECK_NOTHROW(TeacherSpec{2, 4, 2}.validate());
}

TEST_CASE("grid spec parsing") {
  const auto cells = parse_grid_spec("h=1,2;p1=16,32;p2=16");
  REQUIRE(cells.size() == 4);
  CHECK(cells[0].h == 1);
  CHECK(cells[0].p1 == 16);
  CHECK(cells[0].p2 == 16);
  CHECK(cells[3].h == 2);
  CHECK(cells[3].p1 == 32);

  CHECK_THROWS_AS(parse_grid_spec("h=1"), Error);
  CHECK_THROWS_AS(parse_grid_spec("h=1;p1=4;p2=0"), Error);
  CHECK_THROWS_AS(parse_grid_spec("h=4;p1=4;p2=8"), Error);  // 2h > p1
  CHECK_THROWS_AS(parse_grid_spec("bogus"), Error);

  // The paper-scale grid parses and is flagged as expensive.
  const auto paper = parse_grid_spec(
      "h=1,2,4;p1=16,32,64,128,256,512;p2=16,32,64,128,256,512");
  CHECK(paper.size() == 108);
  CHECK(grid_is_expensive(paper, 100));
  CHECK(!grid_is_expensive(parse_grid_spec("h=1;p1=16;p2=16"), 5));
}
