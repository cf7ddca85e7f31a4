#include <random>

#include "doctest.h"
#include "stf/fitting_engine.hpp"

using namespace stf;

namespace {

constexpr double kM = 1e5;  // radar horizontal distance
constexpr double kH = 1e5;  // radar altitude

FotParams constant_fot(std::initializer_list<double> values) {
  FotParams fot;
  fot.basis.order = 1;
  for (double v : values) fot.coeffs.push_back(Eigen::VectorXd::Constant(1, v));
  return fot;
}

Observation make_obs(double t, std::initializer_list<double> values, double weight = 1.0) {
  Observation o;
  o.time = t;
  o.value = Eigen::Map<const Eigen::VectorXd>(values.begin(), values.size());
  o.weight = weight;
  return o;
}

ResidualSpec identity_spec() {
  ResidualSpec spec;
  spec.identity_model = true;
  return spec;
}

double range_of(double h) { return std::sqrt(kM * kM + (h - kH) * (h - kH)); }

ResidualSpec range_spec() {
  ResidualSpec spec;
  spec.model = [](const Eigen::VectorXd& state, int) {
    return Eigen::VectorXd::Constant(1, range_of(state[0]));
  };
  spec.jacobian = [](const Eigen::VectorXd& state, int) {
    Eigen::MatrixXd J(1, 1);
    J(0, 0) = (state[0] - kH) / range_of(state[0]);
    return J;
  };
  spec.projection = [](const Observation& o) {
    const double y = std::max(o.value[0], kM);
    return Eigen::VectorXd::Constant(1, std::sqrt(std::max(y * y - kM * kM, 0.0)) + kH);
  };
  return spec;
}

const std::array<Eigen::Vector2d, 4> kSensors{
    Eigen::Vector2d(-0.5, 3.5), Eigen::Vector2d(-0.5, -3.5), Eigen::Vector2d(7.0, -3.5),
    Eigen::Vector2d(7.0, 3.5)};

Eigen::VectorXd bearings_of(const Eigen::Vector2d& p) {
  Eigen::VectorXd y(4);
  for (int i = 0; i < 4; ++i)
    y[i] = std::atan2(p[1] - kSensors[i][1], p[0] - kSensors[i][0]);
  return y;
}

ResidualSpec bearing_spec() {
  ResidualSpec spec;
  spec.model = [](const Eigen::VectorXd& state, int) {
    return bearings_of(state.head<2>());
  };
  spec.jacobian = [](const Eigen::VectorXd& state, int) {
    Eigen::MatrixXd J(4, 2);
    for (int i = 0; i < 4; ++i) {
      const double dx = state[0] - kSensors[i][0];
      const double dy = state[1] - kSensors[i][1];
      const double d2 = dx * dx + dy * dy;
      J(i, 0) = -dy / d2;
      J(i, 1) = dx / d2;
    }
    return J;
  };
  spec.angular_dims = {0, 1, 2, 3};
  return spec;
}

}  // namespace

TEST_CASE("residual_l2 basics") {
  const FotParams fot = constant_fot({3.0});
  SUBCASE("zero discrepancy") {
    CHECK(residual_l2(fot, make_obs(0.0, {3.0}), identity_spec()) == doctest::Approx(0.0));
  }
  SUBCASE("squared error") {
    CHECK(residual_l2(fot, make_obs(0.0, {5.0}), identity_spec()) == doctest::Approx(4.0));
  }
  SUBCASE("bias compensation cancels") {
    ResidualSpec spec;
    spec.model = [](const Eigen::VectorXd& state, int) { return state; };
    spec.noise_mean = Eigen::VectorXd::Constant(1, 2.0);
    CHECK(residual_l2(fot, make_obs(0.0, {5.0}), spec) == doctest::Approx(0.0));
  }
}

TEST_CASE("weighted_objective normalization and fading") {
  FitProblem problem;
  problem.spec = identity_spec();
  problem.basis.order = 1;
  problem.state_dims = 1;

  SUBCASE("uniform weights average the residuals") {
    problem.observations = {make_obs(0.0, {1.0}), make_obs(1.0, {2.0}),
                            make_obs(2.0, {-2.0})};
    problem.window = {0.0, 2.0, 10};
    const FotParams zero = constant_fot({0.0});
    CHECK(weighted_objective(problem, zero) == doctest::Approx(3.0));
  }

  SUBCASE("fading factor produces geometric weights") {
    problem.spec.fading_factor = 0.5;
    problem.observations = {make_obs(8.0, {1.0}), make_obs(9.0, {1.0}),
                            make_obs(10.0, {1.0})};
    problem.window = {8.0, 10.0, 10};
    const Eigen::VectorXd w = normalized_weights(problem);
    CHECK(w[0] == doctest::Approx(1.0 / 7.0));
    CHECK(w[1] == doctest::Approx(2.0 / 7.0));
    CHECK(w[2] == doctest::Approx(4.0 / 7.0));
    const FotParams zero = constant_fot({0.0});
    CHECK(weighted_objective(problem, zero) == doctest::Approx(1.0));
  }

  SUBCASE("penalty vanishes on an exactly anchored trajectory") {
    problem.observations = {make_obs(0.0, {1.0}), make_obs(1.0, {1.0})};
    problem.window = {0.0, 1.0, 10};
    const FotParams one = constant_fot({1.0});
    const double base = weighted_objective(problem, one);
    problem.spec.penalty = PenaltySpec{0.5, Eigen::VectorXd::Constant(1, 1.0), 10.0};
    CHECK(weighted_objective(problem, one) == doctest::Approx(base));
  }

  SUBCASE("all-zero weights are rejected") {
    problem.observations = {make_obs(0.0, {1.0}, 0.0), make_obs(1.0, {1.0}, 0.0)};
    problem.window = {0.0, 1.0, 10};
    CHECK_THROWS_AS(weighted_objective(problem, constant_fot({0.0})),
                    std::invalid_argument);
  }
}

TEST_CASE("linear_ls_fit recovers exact and hand-solved fits") {
  FitProblem problem;
  problem.spec = identity_spec();
  problem.basis.order = 2;
  problem.state_dims = 1;

  SUBCASE("collinear points are interpolated exactly") {
    problem.observations = {make_obs(0.0, {1.0}), make_obs(1.0, {3.0}),
                            make_obs(2.0, {5.0})};
    problem.window = {0.0, 2.0, 10};
    const FitResult fit = linear_ls_fit(problem);
    CHECK(evaluate(fit.params, 0.0).value[0] == doctest::Approx(1.0));
    CHECK(derivative(fit.params, 0.0, 1)[0] == doctest::Approx(2.0));
    CHECK(evaluate(fit.params, 10.0).value[0] == doctest::Approx(21.0).epsilon(1e-9));
    CHECK(fit.objective == doctest::Approx(0.0));
    CHECK_FALSE(fit.condition_warning);
  }

  SUBCASE("hand-solved normal equations") {
    problem.observations = {make_obs(0.0, {0.0}), make_obs(1.0, {1.0}),
                            make_obs(2.0, {1.0})};
    problem.window = {0.0, 2.0, 10};
    const FitResult fit = linear_ls_fit(problem);
    CHECK(evaluate(fit.params, 0.0).value[0] == doctest::Approx(1.0 / 6.0));
    CHECK(derivative(fit.params, 0.0, 1)[0] == doctest::Approx(0.5));
  }

  SUBCASE("dominant weight pins the fit") {
    problem.basis.order = 1;
    problem.observations = {make_obs(0.0, {1.0}, 1.0), make_obs(1.0, {7.0}, 1e9),
                            make_obs(2.0, {3.0}, 1.0)};
    problem.window = {0.0, 2.0, 10};
    const FitResult fit = linear_ls_fit(problem);
    CHECK(evaluate(fit.params, 1.0).value[0] == doctest::Approx(7.0).epsilon(1e-6));
  }

  SUBCASE("fewer distinct times than order is a rank error") {
    problem.observations = {make_obs(1.0, {1.0}), make_obs(1.0, {2.0})};
    problem.window = {1.0, 1.0, 10};
    CHECK_THROWS_AS(linear_ls_fit(problem), std::runtime_error);
  }

  SUBCASE("all-zero weights are rejected") {
    problem.observations = {make_obs(0.0, {1.0}, 0.0), make_obs(1.0, {1.0}, 0.0),
                            make_obs(2.0, {1.0}, 0.0)};
    problem.window = {0.0, 2.0, 10};
    CHECK_THROWS(linear_ls_fit(problem));
  }

  SUBCASE("ill-conditioned collocation sets the warning") {
    problem.basis.order = 3;
    problem.observations = {make_obs(1e6, {1.0}), make_obs(1e6 + 1, {2.0}),
                            make_obs(1e6 + 2, {4.0})};
    problem.window = {1e6, 1e6 + 2, 10};
    problem.t_ref_override = 0.0;  // defeat the default mid-window re-centering
    const FitResult fit = linear_ls_fit(problem);
    CHECK(fit.condition_warning);
  }
}

TEST_CASE("linear_ls_fit is the global minimum of the weighted objective") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  FitProblem problem;
  problem.spec = identity_spec();
  problem.basis.order = 3;
  problem.state_dims = 1;
  for (int i = 0; i < 12; ++i)
    problem.observations.push_back(
        make_obs(0.3 * i, {2.0 + 0.5 * i + unif(rng)}, 0.5 + i * 0.1));
  problem.window = {0.0, 0.3 * 11, 12};
  const FitResult fit = linear_ls_fit(problem);
  for (int trial = 0; trial < 1000; ++trial) {
    FotParams perturbed = fit.params;
    for (int i = 0; i < 3; ++i) perturbed.coeffs[0][i] += 0.2 * unif(rng);
    CHECK(weighted_objective(problem, perturbed) >= fit.objective - 1e-12);
  }
}

TEST_CASE("nonlinear_ls_fit recovers a quadratic altitude from noiseless ranges") {
  FitProblem problem;
  problem.spec = range_spec();
  problem.basis.order = 3;
  problem.state_dims = 1;
  const auto truth_h = [](double t) { return 3e5 - 2e4 * t - 50.0 * t * t; };
  for (int i = 0; i <= 4; ++i) {
    const double t = i;
    problem.observations.push_back(make_obs(t, {range_of(truth_h(t))}));
  }
  problem.window = {0.0, 4.0, 5};
  const FitResult fit = nonlinear_ls_fit(problem);
  CHECK(fit.converged);
  CHECK(fit.objective < 1e-10);
  for (int i = 0; i <= 4; ++i)
    CHECK(evaluate(fit.params, i).value[0] == doctest::Approx(truth_h(i)).epsilon(1e-8));
}

TEST_CASE("nonlinear_ls_fit recovers a linear path from noiseless bearings") {
  FitProblem problem;
  problem.spec = bearing_spec();
  problem.basis.order = 2;
  problem.state_dims = 2;
  const auto truth = [](double t) { return Eigen::Vector2d(0.5 + 1.0 * t, -0.2 + 0.5 * t); };
  for (int i = 0; i < 10; ++i) {
    const double t = 0.1 * i;
    Observation o;
    o.time = t;
    o.value = bearings_of(truth(t));
    problem.observations.push_back(o);
  }
  problem.window = {0.0, 0.9, 10};

  FotParams seed;
  seed.basis = problem.basis;
  seed.t_ref = 0.45;
  seed.coeffs = {Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2)};
  seed.coeffs[0][0] = 1.0;  // rough center guess
  seed.coeffs[1][0] = 0.0;
  problem.initial_params = seed;

  const FitResult fit = nonlinear_ls_fit(problem);
  CHECK(fit.objective < 1e-12);
  for (int i = 0; i < 10; ++i) {
    const double t = 0.1 * i;
    const Eigen::VectorXd p = evaluate(fit.params, t).value;
    CHECK(p[0] == doctest::Approx(truth(t)[0]).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(truth(t)[1]).epsilon(1e-6));
  }
}

TEST_CASE("nonlinear_ls_fit matches an exhaustive grid-search oracle") {
  // 2-parameter problem: constant position observed in bearings with fixed
  // noise; the oracle scans [-10,10]^2 at 0.01 and refines at 0.001.
  FitProblem problem;
  problem.spec = bearing_spec();
  problem.basis.order = 1;
  problem.state_dims = 2;
  const Eigen::Vector2d truth(2.3, 0.7);
  std::mt19937 rng(17);
  std::normal_distribution<double> noise(0.0, 0.05);
  for (int i = 0; i < 6; ++i) {
    Observation o;
    o.time = 0.1 * i;
    o.value = bearings_of(truth);
    for (int s = 0; s < 4; ++s) o.value[s] += noise(rng);
    problem.observations.push_back(o);
  }
  problem.window = {0.0, 0.5, 10};

  const auto objective_at = [&](double x, double y) {
    FotParams p;
    p.basis = problem.basis;
    p.t_ref = problem.window.midpoint();
    p.coeffs = {Eigen::VectorXd::Constant(1, x), Eigen::VectorXd::Constant(1, y)};
    return weighted_objective(problem, p);
  };

  double best_x = 0, best_y = 0, best = std::numeric_limits<double>::infinity();
  for (double x = -10.0; x <= 10.0 + 1e-12; x += 0.01)
    for (double y = -10.0; y <= 10.0 + 1e-12; y += 0.01) {
      const double v = objective_at(x, y);
      if (v < best) {
        best = v;
        best_x = x;
        best_y = y;
      }
    }
  const double cx = best_x, cy = best_y;
  for (double x = cx - 0.02; x <= cx + 0.02 + 1e-12; x += 0.001)
    for (double y = cy - 0.02; y <= cy + 0.02 + 1e-12; y += 0.001) {
      const double v = objective_at(x, y);
      if (v < best) {
        best = v;
        best_x = x;
        best_y = y;
      }
    }

  FotParams seed;
  seed.basis = problem.basis;
  seed.t_ref = problem.window.midpoint();
  seed.coeffs = {Eigen::VectorXd::Constant(1, 3.0), Eigen::VectorXd::Constant(1, 0.0)};
  problem.initial_params = seed;
  const FitResult fit = nonlinear_ls_fit(problem);

  CHECK(std::abs(fit.params.coeffs[0][0] - best_x) <= 1e-3 + 1e-9);
  CHECK(std::abs(fit.params.coeffs[1][0] - best_y) <= 1e-3 + 1e-9);
  CHECK(fit.objective <= best + 1e-12);
}

TEST_CASE("nonlinear_ls_fit respects the initial objective and zero penalty") {
  FitProblem problem;
  problem.spec = range_spec();
  problem.basis.order = 2;
  problem.state_dims = 1;
  std::mt19937 rng(5);
  std::normal_distribution<double> noise(0.0, 100.0);
  for (int i = 0; i < 5; ++i)
    problem.observations.push_back(
        make_obs(i, {range_of(2.8e5 - 1.5e4 * i) + noise(rng)}));
  problem.window = {0.0, 4.0, 5};

  const FitResult plain = nonlinear_ls_fit(problem);
  const double seed_objective =
      weighted_objective(problem, warm_start_seed(std::nullopt, problem.window, problem));
  CHECK(plain.objective <= seed_objective + 1e-12);

  // trade_off = 0 reduces to the unpenalized problem
  FitProblem with_zero_penalty = problem;
  with_zero_penalty.spec.penalty =
      PenaltySpec{0.0, Eigen::VectorXd::Constant(1, 2.8e5), 0.0};
  const FitResult same = nonlinear_ls_fit(with_zero_penalty);
  CHECK(same.objective == doctest::Approx(plain.objective));
  CHECK(same.params.coeffs[0].isApprox(plain.params.coeffs[0], 1e-12));
  CHECK(same.iterations == plain.iterations);
}

TEST_CASE("nonlinear_ls_fit with an active anchor penalty pulls the fit") {
  FitProblem problem;
  problem.spec = identity_spec();
  problem.basis.order = 1;
  problem.state_dims = 1;
  problem.observations = {make_obs(0.0, {10.0}), make_obs(1.0, {10.0})};
  problem.window = {0.0, 1.0, 10};
  problem.spec.penalty = PenaltySpec{0.5, Eigen::VectorXd::Constant(1, 0.0), 100.0};
  const FitResult fit = nonlinear_ls_fit(problem);
  // strong anchor at 0 drags the constant well below the data mean
  CHECK(fit.params.coeffs[0][0] < 1.0);
  CHECK(fit.objective <= weighted_objective(problem, constant_fot({10.0})));
}

TEST_CASE("coefficient bounds are enforced by projection") {
  FitProblem problem;
  problem.spec = identity_spec();
  problem.basis.order = 2;
  problem.state_dims = 1;
  problem.observations = {make_obs(0.0, {0.0}), make_obs(1.0, {2.0}),
                          make_obs(2.0, {4.0})};
  problem.window = {0.0, 2.0, 10};
  problem.t_ref_override = 0.0;
  CoefficientBounds bounds;
  bounds.lo = Eigen::MatrixXd::Constant(1, 2, -100.0);
  bounds.hi = Eigen::MatrixXd::Constant(1, 2, 100.0);
  bounds.hi(0, 1) = 1.5;  // the data slope is 2
  problem.bounds = bounds;
  const FitResult fit = nonlinear_ls_fit(problem);
  CHECK(fit.params.coeffs[0][1] == doctest::Approx(1.5));
}

TEST_CASE("warm_start_seed re-centers the previous fit") {
  FitProblem problem;
  problem.spec = identity_spec();
  problem.basis.order = 2;
  problem.state_dims = 1;
  problem.observations = {make_obs(0.0, {1.0}), make_obs(1.0, {3.0}),
                          make_obs(2.0, {5.0})};
  problem.window = {0.0, 2.0, 10};
  const FitResult previous = linear_ls_fit(problem);

  const TimeWindow shifted{0.5, 2.5, 10};
  const FotParams seed = warm_start_seed(previous.params, shifted, problem);
  CHECK(seed.t_ref == doctest::Approx(1.5));
  for (double t = 0.5; t <= 2.5; t += 0.25)
    CHECK(evaluate(seed, t).value[0] ==
          doctest::Approx(evaluate(previous.params, t).value[0]).epsilon(1e-9));
}

TEST_CASE("warm_start_seed cold start is optimal for identity models on lines") {
  FitProblem problem;
  problem.spec = identity_spec();
  problem.basis.order = 2;
  problem.state_dims = 1;
  problem.observations = {make_obs(0.0, {1.0}), make_obs(1.0, {3.0}),
                          make_obs(2.0, {5.0})};
  problem.window = {0.0, 2.0, 10};
  const FotParams seed = warm_start_seed(std::nullopt, problem.window, problem);
  CHECK(weighted_objective(problem, seed) == doctest::Approx(0.0));
}

TEST_CASE("recursive_ls_update") {
  SUBCASE("single equal-weight fusion") {
    RlsState state;
    state.coeffs = Eigen::VectorXd::Zero(1);
    state.P = Eigen::MatrixXd::Identity(1, 1);
    const RlsState next =
        recursive_ls_update(state, Eigen::VectorXd::Constant(1, 1.0), 1.0, 1.0);
    CHECK(next.coeffs[0] == doctest::Approx(0.5));
    CHECK(next.P(0, 0) == doctest::Approx(0.5));
    CHECK(next.gain[0] == doctest::Approx(0.5));
  }

  SUBCASE("zero innovation leaves the estimate unchanged") {
    RlsState state;
    state.coeffs = Eigen::VectorXd::Constant(2, 1.5);
    state.P = Eigen::MatrixXd::Identity(2, 2);
    Eigen::VectorXd x(2);
    x << 2.0, -1.0;
    const RlsState next = recursive_ls_update(state, x, x.dot(state.coeffs), 1.0);
    CHECK(next.coeffs.isApprox(state.coeffs, 1e-12));
  }

  SUBCASE("non-finite input is rejected") {
    RlsState state;
    state.coeffs = Eigen::VectorXd::Zero(1);
    state.P = Eigen::MatrixXd::Identity(1, 1);
    CHECK_THROWS_AS(recursive_ls_update(state, Eigen::VectorXd::Constant(1, 1.0),
                                        std::numeric_limits<double>::quiet_NaN(), 1.0),
                    std::invalid_argument);
  }

  SUBCASE("matches batch least squares with unit forgetting") {
    std::mt19937 rng(23);
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    std::uniform_int_distribution<int> m_dist(1, 4);
    std::uniform_int_distribution<int> n_dist(20, 50);
    for (int instance = 0; instance < 20; ++instance) {
      const int m = m_dist(rng);
      const int n = n_dist(rng);
      Eigen::MatrixXd X(n, m);
      Eigen::VectorXd y(n);
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) X(i, j) = unif(rng);
        y[i] = unif(rng);
      }
      // batch oracle
      const Eigen::VectorXd batch = X.colPivHouseholderQr().solve(y);

      // diffuse prior: wide enough to be negligible against the data,
      // narrow enough that the covariance recursion stays well conditioned
      RlsState state;
      state.coeffs = Eigen::VectorXd::Zero(m);
      state.P = 1e8 * Eigen::MatrixXd::Identity(m, m);
      for (int i = 0; i < n; ++i)
        state = recursive_ls_update(state, X.row(i).transpose(), y[i], 1.0);
      for (int j = 0; j < m; ++j)
        CHECK(std::abs(state.coeffs[j] - batch[j]) <= 1e-8 * (1.0 + std::abs(batch[j])));
    }
  }
}
