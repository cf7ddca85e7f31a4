#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stf/baselines.hpp"
#include "stf/rng.hpp"
#include "stf/stf_inference.hpp"

namespace stf::scenarios {

// ------------------------------------------------------------ metrics ----

struct RmseResult {
  std::vector<double> per_step;
  double mean = 0.0;
};

/// RMSE_k = sqrt(mean over runs of the squared error norm at step k);
/// `mean` averages RMSE_k over steps. Run/step lengths must agree.
RmseResult rmse(const std::vector<std::vector<Eigen::VectorXd>>& estimates_by_run,
                const std::vector<std::vector<Eigen::VectorXd>>& truths_by_run);

/// Classical fourth-order Runge-Kutta update.
Eigen::VectorXd rk4_step(const Eigen::VectorXd& state,
                         const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& deriv,
                         double dt);

// ------------------------------------------------------------ configs ----

/// Linear-observation maneuvering target: WPV/WPA switching truth, position
/// observations. Schedule: WPA on steps 51-70 and 121-150, WPV elsewhere.
struct Scenario1Config {
  double dt = 0.1;
  int steps = 200;
  double q_wpv = 0.1;  // power spectral density
  double q_wpa = 1.0;
  double obs_var = 0.1;  // per-axis observation noise variance
};

bool scenario1_wpa_active(int step);

/// Bearing-only maneuvering target: deterministic truth, four bearing
/// sensors. truth_sigma_v < 0 means "same as sigma_v".
struct Scenario2Config {
  double dt = 0.1;
  int steps = 200;
  double sigma_v = 0.01;        // bearing noise variance assumed by estimators
  double truth_sigma_v = -1.0;  // actual simulation noise variance
  double q_wpv = 0.01;
  double q_turn = 0.15;         // CT model turn-rate noise covariance
  std::array<Eigen::Vector2d, 4> sensors{
      Eigen::Vector2d(-0.5, 3.5), Eigen::Vector2d(-0.5, -3.5), Eigen::Vector2d(7.0, -3.5),
      Eigen::Vector2d(7.0, 3.5)};
};

/// Vertically falling ballistic target observed in range.
struct Scenario3Config {
  double horizontal_dist = 1e5;  // M, ft
  double radar_altitude = 1e5;   // H, ft
  double gamma = 5e-5;           // ft^-1
  Eigen::Vector3d x0{3e5, 2e4, 1e-3};          // truth [h, s, c]
  Eigen::Vector3d prior_mean{3e5, 2e4, 3e-3};  // filter initialization
  Eigen::Vector3d prior_var{1e6, 4e6, 1e-4};
  double range_noise_var = 1e4;  // R
  int steps = 30;                // one observation per second
  int rk4_substeps = 64;
  int particles = 200;
  double c0 = 3e-3;  // first-round ballistic coefficient guess
};

// ------------------------------------------------------- truth/observe ----

/// Scenario 1 stochastic truth, states [px,py,vx,vy,ax,ay] for steps 0..steps.
std::vector<Eigen::VectorXd> scenario1_truth(const Scenario1Config& config, RngStream& rng);

/// Scenario 2 deterministic truth, states [px,py,vx,vy,omega]; identical
/// across runs and seeds.
std::vector<Eigen::VectorXd> scenario2_truth(const Scenario2Config& config);

/// Scenario 3 deterministic truth via RK4, states [h,s,c].
std::vector<Eigen::VectorXd> scenario3_truth(const Scenario3Config& config);

Eigen::Vector2d scenario1_observe(const Scenario1Config& config, const Eigen::VectorXd& state,
                                  RngStream& rng);

/// Noiseless bearing from a sensor to a position (two-argument arctangent).
double bearing_to(const Eigen::Vector2d& sensor, const Eigen::Vector2d& position);

/// Stacked four-sensor bearing observation, wrapped into (-pi, pi].
Eigen::VectorXd scenario2_observe(const Scenario2Config& config, const Eigen::VectorXd& state,
                                  RngStream& rng);

double scenario3_observe(const Scenario3Config& config, const Eigen::VectorXd& state,
                         RngStream& rng);

/// Ballistic state derivative of the falling-target dynamics.
Eigen::VectorXd ballistic_derivative(const Eigen::Vector3d& state, double gamma);

/// Integrates the ballistic dynamics over `seconds` using the configured
/// RK4 substep count.
Eigen::VectorXd ballistic_flow(const Scenario3Config& config, const Eigen::VectorXd& state,
                               double seconds);

// ------------------------------------------- ballistic velocity fitting ----

/// Previous-round fitted kinematics used to invert the drag equation.
struct PreviousKinematics {
  double time = 0.0;
  double altitude = 0.0;
  double speed = 0.0;
  double speed_dot = 0.0;
};

struct BallisticVelocityFit {
  FotParams velocity;
  double coeff = 0.0;  // ballistic coefficient estimate fed into the residuals
  double objective = 0.0;
};

/// Derivative-matching velocity fit: minimizes the stacked discrepancies
/// of dh/dt = -s and ds/dt = -exp(-gamma h) s^2 c over the window sample
/// times, with c inverted from the previous round (or c0 on the first).
BallisticVelocityFit ballistic_velocity_and_coeff_fit(
    const FotParams& altitude_fit, const std::vector<double>& window_times,
    const std::optional<PreviousKinematics>& previous, double gamma, double c0,
    const FitOptions& options = {});

// -------------------------------------------------------------- runner ----

/// One estimator's per-step output for one Monte-Carlo run. Entries are
/// empty where the estimator produces nothing (e.g. forecast warm-up).
struct RunSeries {
  std::vector<std::optional<Eigen::VectorXd>> estimates;
  double seconds = 0.0;
  std::string truth_key = "position";
};

struct ScenarioRun {
  std::vector<double> times;  // step times, steps 1..N at index 0..N-1
  std::map<std::string, std::vector<Eigen::VectorXd>> truth;
  std::map<std::string, RunSeries> series;
};

std::vector<std::string> scenario_registry(int scenario_id);

ScenarioRun run_scenario1(const Scenario1Config& config, const StfConfig& stf_config,
                          const std::vector<std::string>& estimators, std::uint64_t seed,
                          int run_index);
ScenarioRun run_scenario2(const Scenario2Config& config, const StfConfig& stf_config,
                          const std::vector<std::string>& estimators, std::uint64_t seed,
                          int run_index);
ScenarioRun run_scenario3(const Scenario3Config& config, const StfConfig& stf_config,
                          const std::vector<std::string>& estimators, std::uint64_t seed,
                          int run_index);

// ------------------------------------------------------- shared helpers ----

/// Per-axis white-noise velocity/acceleration blocks in
/// [positions..., velocities..., accelerations...] ordering.
baselines::LinearGaussianModel wpv_model(double dt, double q, int axes);
baselines::LinearGaussianModel wpa_model(double dt, double q, int axes);

/// Drives a tracker over a per-step observation stream and assembles the
/// four fitting-mode series. Startup steps fall back to the supplied
/// projection; trailing delayed slots are interpolated from the final fit.
struct FittingSeries {
  std::vector<std::optional<Eigen::VectorXd>> online, delayed, smoothed, forecast;
  double fit_seconds = 0.0;
  double online_seconds = 0.0;
  double delayed_seconds = 0.0;
  double forecast_seconds = 0.0;
  double smoothed_seconds = 0.0;
  double mean_fit_iterations = 0.0;
};

FittingSeries run_fitting_pipeline(
    Tracker& tracker, const std::vector<Observation>& per_step_obs,
    const std::vector<double>& times,
    const std::function<std::optional<Eigen::VectorXd>(int)>& startup_fallback);

}  // namespace stf::scenarios
