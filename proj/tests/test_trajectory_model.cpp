#include <random>

#include "doctest.h"
#include "stf/trajectory_model.hpp"

using namespace stf;

namespace {

FotParams quadratic_fot(std::initializer_list<double> coeffs, double t_ref = 0.0) {
  FotParams fot;
  fot.basis.kind = BasisKind::Monomial;
  fot.basis.order = static_cast<int>(coeffs.size());
  fot.coeffs = {Eigen::Map<const Eigen::VectorXd>(coeffs.begin(), coeffs.size())};
  fot.t_ref = t_ref;
  fot.window_k1 = -10.0;
  fot.window_k2 = 10.0;
  return fot;
}

}  // namespace

TEST_CASE("monomial basis vector") {
  BasisSpec spec;
  spec.order = 3;
  const Eigen::VectorXd phi = basis_vector(spec, 2.0, 0.0);
  CHECK(phi.size() == 3);
  CHECK(phi[0] == doctest::Approx(1.0));
  CHECK(phi[1] == doctest::Approx(2.0));
  CHECK(phi[2] == doctest::Approx(4.0));

  BasisSpec constant;
  constant.order = 1;
  CHECK(basis_vector(constant, 123.4, 0.0)[0] == doctest::Approx(1.0));
}

TEST_CASE("trigonometric basis vector") {
  BasisSpec spec;
  spec.kind = BasisKind::Trigonometric;
  spec.order = 2;
  spec.omega = 1.0;
  const Eigen::VectorXd phi = basis_vector(spec, 0.0, 0.0);
  CHECK(phi[0] == doctest::Approx(1.0));
  CHECK(phi[1] == doctest::Approx(0.0));  // sin(0)

  spec.order = 3;
  const Eigen::VectorXd phi3 = basis_vector(spec, 0.5, 0.0);
  CHECK(phi3[1] == doctest::Approx(std::sin(0.5)));
  CHECK(phi3[2] == doctest::Approx(std::cos(0.5)));
}

TEST_CASE("evaluate monomial expansions") {
  CHECK(evaluate(quadratic_fot({5.0}), 7.3).value[0] == doctest::Approx(5.0));

  const FotParams fot = quadratic_fot({1.0, 2.0, 3.0});
  CHECK(evaluate(fot, 2.0).value[0] == doctest::Approx(17.0));
}

TEST_CASE("evaluate flags extrapolation outside the window") {
  FotParams fot = quadratic_fot({1.0, 1.0});
  fot.window_k1 = 0.0;
  fot.window_k2 = 1.0;
  CHECK_FALSE(evaluate(fot, 0.5).extrapolated);
  CHECK(evaluate(fot, 1.5).extrapolated);
  CHECK(evaluate(fot, -0.5).extrapolated);
}

TEST_CASE("analytic derivatives of a quadratic") {
  const FotParams fot = quadratic_fot({1.0, 2.0, 3.0});
  CHECK(derivative(fot, 1.0, 1)[0] == doctest::Approx(8.0));
  CHECK(derivative(fot, -4.2, 2)[0] == doctest::Approx(6.0));
  CHECK(derivative(fot, 0.7, 3)[0] == doctest::Approx(0.0));
}

TEST_CASE("recommended order per motion class") {
  CHECK(recommended_order(MotionClass::CV) == 2);
  CHECK(recommended_order(MotionClass::CA) == 3);
}

TEST_CASE("truncation bound") {
  // f = t^3 on a half-width-0.5 window with an order-3 fit
  CHECK(truncation_bound(6.0, 0.5, 3) == doctest::Approx(0.125));
  CHECK(truncation_bound(6.0, 0.0, 3) == doctest::Approx(0.0));
  CHECK(truncation_bound(0.0, 0.5, 3) == doctest::Approx(0.0));
}

TEST_CASE("truncation bound is monotone in both arguments") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> unif(0.0, 4.0);
  for (int i = 0; i < 200; ++i) {
    const double d = unif(rng), h = unif(rng);
    const int m = 1 + static_cast<int>(unif(rng));
    CHECK(truncation_bound(d + 0.5, h, m) >= truncation_bound(d, h, m));
    CHECK(truncation_bound(d, h + 0.5, m) >= truncation_bound(d, h, m));
  }
}

TEST_CASE("re-centering leaves evaluations unchanged") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> unif(-10.0, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    FotParams fot;
    fot.basis.order = 4;
    Eigen::VectorXd c(4);
    for (int i = 0; i < 4; ++i) c[i] = unif(rng);
    fot.coeffs = {c};
    fot.t_ref = unif(rng);
    fot.window_k1 = -5.0;
    fot.window_k2 = 5.0;
    const double shift = unif(rng);
    const FotParams moved = recenter(fot, fot.t_ref + shift);
    CHECK(moved.t_ref == doctest::Approx(fot.t_ref + shift));
    for (double t = -5.0; t <= 5.0; t += 0.5) {
      const double a = evaluate(fot, t).value[0];
      const double b = evaluate(moved, t).value[0];
      CHECK(b == doctest::Approx(a).epsilon(1e-9));
    }
  }
}

TEST_CASE("derivative matches central finite differences") {
  std::mt19937 rng(13);
  std::uniform_real_distribution<double> unif(-10.0, 10.0);
  const double h = 1e-5;
  for (int trial = 0; trial < 50; ++trial) {
    FotParams fot;
    fot.basis.order = 4;
    Eigen::VectorXd c(4);
    for (int i = 0; i < 4; ++i) c[i] = unif(rng);
    fot.coeffs = {c};
    const double t = unif(rng) * 0.3;
    const double numeric =
        (evaluate(fot, t + h).value[0] - evaluate(fot, t - h).value[0]) / (2.0 * h);
    const double analytic = derivative(fot, t, 1)[0];
    CHECK(analytic == doctest::Approx(numeric).epsilon(1e-5));
  }
}

TEST_CASE("trigonometric derivative matches finite differences") {
  BasisSpec spec;
  spec.kind = BasisKind::Trigonometric;
  spec.order = 5;
  spec.omega = 1.7;
  FotParams fot;
  fot.basis = spec;
  Eigen::VectorXd c(5);
  c << 0.3, -1.2, 2.0, 0.7, -0.4;
  fot.coeffs = {c};
  const double h = 1e-6;
  for (double t : {-1.0, 0.0, 0.4, 2.0}) {
    const double numeric =
        (evaluate(fot, t + h).value[0] - evaluate(fot, t - h).value[0]) / (2.0 * h);
    CHECK(derivative(fot, t, 1)[0] == doctest::Approx(numeric).epsilon(1e-6));
    const double numeric2 = (derivative(fot, t + h, 1)[0] - derivative(fot, t - h, 1)[0]) /
                            (2.0 * h);
    CHECK(derivative(fot, t, 2)[0] == doctest::Approx(numeric2).epsilon(1e-5));
  }
}

TEST_CASE("basis order validation") {
  BasisSpec bad;
  bad.order = 0;
  CHECK_THROWS_AS(basis_vector(bad, 0.0, 0.0), std::invalid_argument);
}
