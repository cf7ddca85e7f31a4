#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace stf {

enum class BasisKind { Monomial, Trigonometric, CustomList };

/// Basis of a parameterized trajectory function of time. "Order" m is the
/// number of terms, NOT the polynomial degree: a monomial basis of order m
/// spans 1, tau, ..., tau^(m-1). The trigonometric basis interleaves
/// 1, sin(w tau), cos(w tau), sin(2w tau), cos(2w tau), ... truncated to m.
struct BasisSpec {
  BasisKind kind = BasisKind::Monomial;
  int order = 2;
  double omega = 1.0;  // rad/s, trigonometric only
  std::vector<std::function<double(double)>> custom;        // tau -> phi_i(tau)
  std::vector<std::function<double(double)>> custom_deriv;  // optional d/dtau phi_i

  void validate() const;
};

/// [phi_1(tau), ..., phi_m(tau)] with tau = t - t_ref.
Eigen::VectorXd basis_vector(const BasisSpec& spec, double t, double t_ref);

/// Element-wise derivative of given order of the basis vector at t.
/// Custom bases fall back to central differences unless custom_deriv is set.
Eigen::VectorXd basis_derivative_vector(const BasisSpec& spec, double t, double t_ref,
                                        int order);

/// Sampling window [k1, k2] plus the sample-count cap that bounds it.
struct TimeWindow {
  double k1 = 0.0;
  double k2 = 0.0;
  int max_count = 10;

  double midpoint() const { return 0.5 * (k1 + k2); }
  double span() const { return k2 - k1; }
};

/// Fitted trajectory function: one coefficient vector per state dimension,
/// all sharing the basis and the re-centering origin t_ref. valid_window is
/// the span the fit was made on; evaluation outside it is flagged.
struct FotParams {
  std::vector<Eigen::VectorXd> coeffs;  // per dimension, each of length order
  BasisSpec basis;
  double t_ref = 0.0;
  double window_k1 = 0.0;
  double window_k2 = 0.0;

  int dims() const { return static_cast<int>(coeffs.size()); }
  bool empty() const { return coeffs.empty(); }
};

struct Evaluation {
  Eigen::VectorXd value;
  bool extrapolated = false;
};

/// Per-dimension inner product of coefficients with the basis vector.
Evaluation evaluate(const FotParams& fot, double t);

/// Analytic time-derivative of the fitted trajectory, order >= 1.
Eigen::VectorXd derivative(const FotParams& fot, double t, int order);

enum class MotionClass { CV, CA };

/// Fitting order matched to the motion class: CV -> 2, CA -> 3.
int recommended_order(MotionClass motion);

/// Worst-case Lagrange remainder for an order-m fit on a window of the
/// given half width: deriv_bound * half_width^m / m!.
double truncation_bound(double deriv_bound, double half_width, int m);

/// Re-expresses the coefficients about a new origin. Exact (binomial
/// re-expansion) for monomial bases; other bases are returned unchanged
/// since their span is not closed under time shifts.
FotParams recenter(const FotParams& fot, double new_t_ref);

}  // namespace stf
