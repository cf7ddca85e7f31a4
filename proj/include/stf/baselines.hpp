#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <vector>

#include "stf/rng.hpp"

namespace stf::baselines {

/// Mean/covariance pair shared by all Gaussian estimators.
struct GaussianBelief {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

/// Symmetrize and clamp tiny negative eigenvalues (throws if an eigenvalue
/// is materially negative relative to the matrix scale).
Eigen::MatrixXd symmetrize_psd(const Eigen::MatrixXd& m);

/// Symmetric (eigen) square root of a PSD matrix.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m);

struct LinearGaussianModel {
  Eigen::MatrixXd F;   // state transition
  Eigen::MatrixXd Q;   // process noise covariance
  Eigen::MatrixXd Hm;  // observation matrix
  Eigen::MatrixXd R;   // observation noise covariance
};

/// Nonlinear model with additive Gaussian noise on both sides. Missing
/// Jacobians fall back to central finite differences.
struct NonlinearModel {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> dynamics;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> dynamics_jac;
  Eigen::MatrixXd Q;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> observe;
  std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> observe_jac;
  Eigen::MatrixXd R;
  std::vector<int> angular_obs_dims;  // innovation dims wrapped to (-pi, pi]
};

/// One predict/update cycle, keeping what the smoothers need: the belief
/// the step started from, the prior prediction, and the cross-covariance
/// Cov(x_k, x_{k+1} | y_1:k).
struct StepRecord {
  GaussianBelief input;
  GaussianBelief predicted;
  GaussianBelief updated;
  Eigen::MatrixXd cross;
  double log_likelihood = 0.0;
};

StepRecord kf_step(const GaussianBelief& belief, const LinearGaussianModel& model,
                   const Eigen::VectorXd& y);
StepRecord ekf_step(const GaussianBelief& belief, const NonlinearModel& model,
                    const Eigen::VectorXd& y);
StepRecord ukf_step(const GaussianBelief& belief, const NonlinearModel& model,
                    const Eigen::VectorXd& y);

GaussianBelief kf_predict(const GaussianBelief& belief, const LinearGaussianModel& model);
GaussianBelief ekf_predict(const GaussianBelief& belief, const NonlinearModel& model);
GaussianBelief ukf_predict(const GaussianBelief& belief, const NonlinearModel& model);

/// Backward Rauch-Tung-Striebel pass over stored forward records.
std::vector<GaussianBelief> rts_smooth(const std::vector<StepRecord>& records,
                                       bool allow_singular = false);

/// Spec-shaped convenience overload for linear models: filtered/predicted
/// belief sequences aligned per step.
std::vector<GaussianBelief> rts_smooth(const std::vector<GaussianBelief>& filtered,
                                       const std::vector<GaussianBelief>& predicted,
                                       const LinearGaussianModel& model);

// ---------------------------------------------------------------- IMM ----

enum class FilterKind { Kf, Ekf, Ukf };

struct ImmModel {
  FilterKind kind = FilterKind::Kf;
  std::optional<LinearGaussianModel> linear;
  std::optional<NonlinearModel> nonlinear;
};

/// Bank of interacting models over a common (embedded) state space.
struct ImmBank {
  std::vector<ImmModel> models;
  Eigen::MatrixXd transition;   // row-stochastic mode transition matrix
  Eigen::VectorXd mode_probs;   // current mu

  void validate() const;
};

struct ImmStepResult {
  std::vector<StepRecord> records;       // per model
  GaussianBelief combined;
  Eigen::VectorXd mode_probs;
  bool likelihood_fallback = false;      // all model likelihoods were zero
};

/// Standard IMM cycle: mix, per-model filter step, mode update, moment-
/// matched combination. Updates bank.mode_probs and the per-model beliefs.
ImmStepResult imm_step(ImmBank& bank, std::vector<GaussianBelief>& beliefs,
                       const Eigen::VectorXd& y);

/// n repeated mix+predict cycles without observation updating.
GaussianBelief imm_forecast(const ImmBank& bank, const std::vector<GaussianBelief>& beliefs,
                            int n_steps);

/// Per-model RTS passes combined with the filtered mode probabilities
/// (standard IMM smoothing approximation).
std::vector<GaussianBelief> imm_smooth(const std::vector<ImmStepResult>& forward);

// ----------------------------------------------------------------- PF ----

struct ParticleSet {
  std::vector<Eigen::VectorXd> states;
  Eigen::VectorXd weights;  // nonnegative, sums to 1
};

struct PfStepResult {
  ParticleSet particles;          // after systematic resampling
  Eigen::VectorXd weighted_mean;  // before resampling
  bool degenerate = false;        // residual-spread guard fired
};

/// SIR step with the residual-normalized heavy-tail likelihood
/// w_i ~ exp(-(y - y_i)^2 / max_j (y - y_j)^2) and per-step systematic
/// resampling. The guard yields uniform weights when all predicted
/// observations coincide with y.
PfStepResult pf_step(const ParticleSet& particles,
                     const std::function<Eigen::VectorXd(const Eigen::VectorXd&, RngStream&)>&
                         propagate,
                     const std::function<double(const Eigen::VectorXd&)>& predict_obs,
                     double y, RngStream& rng);

/// Systematic resampling indices from one uniform draw in [0,1).
std::vector<int> systematic_resample_indices(const Eigen::VectorXd& weights, double u01);

// ----------------------------------------------------------------- O2 ----

/// Sign bookkeeping for the range->altitude triangulation: starts on the
/// positive branch and flips once when the falling-altitude constraint
/// would otherwise be violated.
struct O2SignState {
  int sign = 1;
  bool flipped = false;
  std::optional<double> prev_altitude;
};

struct O2Estimate {
  double altitude = 0.0;
  bool clamped = false;  // range below the horizontal distance, clamped to it
};

O2Estimate o2_triangulate(double range, double horizontal_dist, double radar_altitude,
                          O2SignState& state);

/// Monte-Carlo debiasing of a nonlinear scalar projection: subtracts the
/// sample bias of g around the measured value, b = mean_j g(y+v_j) - g(y).
double o2_debias(const std::function<double(double)>& projection, double y,
                 double noise_var, RngStream& rng, int n_samples = 100);

}  // namespace stf::baselines
