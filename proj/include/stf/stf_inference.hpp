#pragma once

#include <optional>
#include <vector>

#include "stf/fitting_engine.hpp"

namespace stf {

/// Sliding-window configuration. delay_steps/horizon_steps are expressed in
/// nominal sampling intervals so "5-step" semantics survive missed
/// detections and irregular arrival.
struct StfConfig {
  int window_count = 10;             // sample-count cap of the sliding window
  std::optional<double> max_span;    // optional time-span cap, seconds
  int order = 2;                     // basis order m
  int delay_steps = 5;               // d: delayed query at k2 - d*interval
  int horizon_steps = 5;             // n: forecast query at k2 + n*interval
  double nominal_interval = 0.1;     // seconds
  int min_fit_count = 0;             // 0 -> fit as soon as `order` samples exist

  void validate() const;
};

enum class StfMode { Delayed, Online, Forecast, Smoothed };

struct StfOutput {
  double query_time = 0.0;
  Eigen::VectorXd estimate;
  StfMode mode = StfMode::Online;
  bool extrapolated = false;
};

/// Single-target tracker: keeps the observation buffer, refits on every
/// push (warm-started from the previous window), and answers state queries
/// from the current trajectory fit.
class Tracker {
 public:
  Tracker(StfConfig config, ResidualSpec spec, BasisSpec basis, int state_dims);

  /// Inserts in time order, evicts beyond the window bounds, refits.
  /// A duplicate (time, sensor_id) replaces the stored sample and raises
  /// the replaced flag readable via last_push_replaced().
  void push_observation(Observation obs);

  /// Pre-seeds the warm start (and an initial fit) from known anchor
  /// states, e.g. a hot start from a priori positions.
  void seed_hot_start(const std::vector<std::pair<double, Eigen::VectorXd>>& anchors);

  /// Query the fitted trajectory. Default query times: delayed k2 - d*dt,
  /// online k2, forecast k2 + n*dt; an explicit query_time overrides.
  /// Throws when no fit exists yet (fewer than m samples seen).
  StfOutput infer_at(StfMode mode, std::optional<double> query_time = std::nullopt) const;

  /// Effective fitting time window [K1, K2] = [k1 - d*dt, k2 + n*dt].
  std::array<double, 2> effective_window() const;

  bool has_fit() const { return fit_.has_value(); }
  const std::optional<FotParams>& current_fit() const { return fit_; }
  const std::vector<Observation>& buffer() const { return buffer_; }
  bool last_push_replaced() const { return last_replaced_; }
  bool has_fit_result() const { return last_result_.has_value(); }
  const FitResult& last_fit_result() const;
  const StfConfig& config() const { return config_; }

 private:
  void refit();

  StfConfig config_;
  ResidualSpec spec_;
  BasisSpec basis_;
  int state_dims_;
  std::vector<Observation> buffer_;
  std::optional<FotParams> fit_;
  std::optional<FotParams> warm_;
  std::optional<FitResult> last_result_;
  bool last_replaced_ = false;
};

/// Backward refinement pass over a completed forward series of delayed
/// estimates: each time is re-estimated from a linear fit of the delayed
/// estimates in the window centered on it (the paper's once-forward
/// once-backward default).
std::vector<StfOutput> smoothed_pass(const std::vector<StfOutput>& delayed,
                                     const StfConfig& config);

}  // namespace stf
