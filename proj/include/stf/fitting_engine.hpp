#pragma once

#include <Eigen/Dense>
#include <array>
#include <functional>
#include <optional>
#include <vector>

#include "stf/trajectory_model.hpp"

namespace stf {

/// Timestamped sensor datum. `value` may stack several physical sensors
/// observed at the same instant (sensor_id then names the group).
struct Observation {
  double time = 0.0;
  int sensor_id = 0;
  Eigen::VectorXd value;
  double weight = 1.0;
};

/// state (directly-observed dims) -> predicted observation for a sensor.
using ObservationModel =
    std::function<Eigen::VectorXd(const Eigen::VectorXd& state, int sensor_id)>;
/// d(prediction)/d(state), Dy x Dstate.
using ObservationJacobian =
    std::function<Eigen::MatrixXd(const Eigen::VectorXd& state, int sensor_id)>;
/// observation -> directly-observed state (used for cold-start seeding).
using StateProjection = std::function<Eigen::VectorXd(const Observation& obs)>;

/// Soft anchor: penalizes the distance between the fitted trajectory at
/// anchor_time and a known state, scaled by trade_off.
struct PenaltySpec {
  double anchor_time = 0.0;
  Eigen::VectorXd anchor_state;
  double trade_off = 0.0;
};

/// How residuals are formed from observations. The paper overloads one
/// symbol for two roles that are split here: `fading_factor` geometrically
/// down-weights older data, `penalty.trade_off` scales the anchor term.
struct ResidualSpec {
  ObservationModel model;
  ObservationJacobian jacobian;   // empty -> central finite differences
  StateProjection projection;     // empty -> no cold-start inversion
  Eigen::VectorXd noise_mean;     // v-bar compensation, empty -> zero
  double fading_factor = 1.0;     // in (0, 1]
  std::optional<PenaltySpec> penalty;
  bool identity_model = false;    // per-dimension directly-observed case
  std::vector<int> angular_dims;  // observation dims compared modulo 2*pi
};

/// Box bounds on coefficients, per dimension x per basis term.
struct CoefficientBounds {
  Eigen::MatrixXd lo;  // dims x order
  Eigen::MatrixXd hi;
};

struct FitOptions {
  int max_iterations = 100;
  double rel_objective_tol = 1e-8;
  double step_tol = 1e-10;
};

struct FitProblem {
  TimeWindow window;
  std::vector<Observation> observations;  // time-ordered
  ResidualSpec spec;
  BasisSpec basis;
  int state_dims = 1;
  std::optional<CoefficientBounds> bounds;
  std::optional<FotParams> initial_params;
  std::optional<double> t_ref_override;  // default: window midpoint
  FitOptions options;
};

struct FitResult {
  FotParams params;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  bool condition_warning = false;
};

/// Squared L2 discrepancy between an observation and the trajectory's
/// predicted observation at that time (angular dims wrapped).
double residual_l2(const FotParams& params, const Observation& obs,
                   const ResidualSpec& spec);

/// Normalized fading weights for the problem's window (sum to 1).
Eigen::VectorXd normalized_weights(const FitProblem& problem);

/// Phi_k: normalized weighted residual sum plus the optional anchor
/// penalty trade_off * ||F(t0) - x0||.
double weighted_objective(const FitProblem& problem, const FotParams& params);

/// Closed-form weighted least squares for directly-observed (identity)
/// models, solved per dimension by column-pivoted QR. condition_warning is
/// set when the collocation matrix condition estimate exceeds 1e10.
FitResult linear_ls_fit(const FitProblem& problem);

/// Damped Gauss-Newton (Levenberg-Marquardt) minimization of the weighted
/// objective. Bounds are enforced by coordinate projection after each step.
FitResult nonlinear_ls_fit(const FitProblem& problem);

/// Seed for the next window's fit: the previous coefficients re-centered to
/// the new window midpoint, or a cold-start guess built from projected
/// observations when no previous fit exists.
FotParams warm_start_seed(const std::optional<FotParams>& previous,
                          const TimeWindow& window, const FitProblem& problem);

/// Recursive least squares adaptive-filter state.
struct RlsState {
  Eigen::VectorXd coeffs;
  Eigen::MatrixXd P;
  Eigen::VectorXd gain;
};

/// One forgetting-factor RLS update (gain, estimate, P recursion); P is
/// re-symmetrized after the update.
RlsState recursive_ls_update(const RlsState& state, const Eigen::VectorXd& regressor,
                             double y, double forgetting);

/// Generic damped least-squares core shared by nonlinear_ls_fit and the
/// scenario-specific derivative-matching fits. `objective_fn` defaults to
/// the residual sum of squares; step acceptance always tests it.
struct LmCoreResult {
  Eigen::VectorXd params;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  bool condition_warning = false;
};

LmCoreResult lm_minimize(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residuals,
    const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& jacobian,
    Eigen::VectorXd initial, const FitOptions& options,
    const std::function<double(const Eigen::VectorXd&)>& objective_fn = {},
    const std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& box = {});

/// Wrap an angle difference into (-pi, pi].
double wrap_angle(double a);

}  // namespace stf
