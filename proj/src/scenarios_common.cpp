#include <chrono>
#include <stdexcept>

#include "stf/scenarios.hpp"

namespace stf::scenarios {

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::vector<std::string> scenario_registry(int scenario_id) {
  switch (scenario_id) {
    case 1:
      return {"kf_wpv", "ks_wpv", "kf_wpa", "ks_wpa", "imm", "imm_smoother",
              "imm_forecast", "fit_online", "fit_delayed", "fit_smoothed", "fit_forecast"};
    case 2:
      return {"ekf_wpv", "eks_wpv", "ukf_wpv", "uks_wpv", "ekf_imm", "ekf_imm_smoother",
              "ekf_imm_forecast", "ukf_imm", "ukf_imm_smoother", "ukf_imm_forecast",
              "fit_online", "fit_delayed", "fit_smoothed", "fit_forecast"};
    case 3:
      return {"ekf", "ukf", "pf", "o2_biased", "o2_unbiased", "fit_online",
              "fit_velocity", "fit_coeff"};
    default:
      throw std::invalid_argument("unknown scenario id (expected 1, 2 or 3)");
  }
}

RmseResult rmse(const std::vector<std::vector<Eigen::VectorXd>>& estimates_by_run,
                const std::vector<std::vector<Eigen::VectorXd>>& truths_by_run) {
  if (estimates_by_run.size() != truths_by_run.size() || estimates_by_run.empty())
    throw std::invalid_argument("rmse: run count mismatch");
  const size_t steps = estimates_by_run.front().size();
  for (size_t r = 0; r < estimates_by_run.size(); ++r)
    if (estimates_by_run[r].size() != steps || truths_by_run[r].size() != steps)
      throw std::invalid_argument("rmse: step count mismatch");

  RmseResult out;
  out.per_step.resize(steps);
  for (size_t k = 0; k < steps; ++k) {
    double sum_sq = 0.0;
    for (size_t r = 0; r < estimates_by_run.size(); ++r)
      sum_sq += (estimates_by_run[r][k] - truths_by_run[r][k]).squaredNorm();
    out.per_step[k] = std::sqrt(sum_sq / estimates_by_run.size());
  }
  out.mean = 0.0;
  for (double v : out.per_step) out.mean += v;
  out.mean /= steps;
  return out;
}

Eigen::VectorXd rk4_step(const Eigen::VectorXd& state,
                         const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& deriv,
                         double dt) {
  if (dt <= 0.0) throw std::invalid_argument("rk4_step needs dt > 0");
  const Eigen::VectorXd k1 = deriv(state);
  const Eigen::VectorXd k2 = deriv(state + 0.5 * dt * k1);
  const Eigen::VectorXd k3 = deriv(state + 0.5 * dt * k2);
  const Eigen::VectorXd k4 = deriv(state + dt * k3);
  return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

baselines::LinearGaussianModel wpv_model(double dt, double q, int axes) {
  const int n = 2 * axes;
  baselines::LinearGaussianModel m;
  m.F = Eigen::MatrixXd::Identity(n, n);
  m.Q = Eigen::MatrixXd::Zero(n, n);
  for (int a = 0; a < axes; ++a) {
    const int p = a, v = axes + a;
    m.F(p, v) = dt;
    m.Q(p, p) = q * dt * dt * dt / 3.0;
    m.Q(p, v) = m.Q(v, p) = q * dt * dt / 2.0;
    m.Q(v, v) = q * dt;
  }
  m.Hm = Eigen::MatrixXd::Zero(axes, n);
  for (int a = 0; a < axes; ++a) m.Hm(a, a) = 1.0;
  return m;
}

baselines::LinearGaussianModel wpa_model(double dt, double q, int axes) {
  const int n = 3 * axes;
  baselines::LinearGaussianModel m;
  m.F = Eigen::MatrixXd::Identity(n, n);
  m.Q = Eigen::MatrixXd::Zero(n, n);
  const double dt2 = dt * dt, dt3 = dt2 * dt, dt4 = dt3 * dt, dt5 = dt4 * dt;
  for (int a = 0; a < axes; ++a) {
    const int p = a, v = axes + a, acc = 2 * axes + a;
    m.F(p, v) = dt;
    m.F(p, acc) = dt2 / 2.0;
    m.F(v, acc) = dt;
    m.Q(p, p) = q * dt5 / 20.0;
    m.Q(p, v) = m.Q(v, p) = q * dt4 / 8.0;
    m.Q(p, acc) = m.Q(acc, p) = q * dt3 / 6.0;
    m.Q(v, v) = q * dt3 / 3.0;
    m.Q(v, acc) = m.Q(acc, v) = q * dt2 / 2.0;
    m.Q(acc, acc) = q * dt;
  }
  m.Hm = Eigen::MatrixXd::Zero(axes, n);
  for (int a = 0; a < axes; ++a) m.Hm(a, a) = 1.0;
  return m;
}

FittingSeries run_fitting_pipeline(
    Tracker& tracker, const std::vector<Observation>& per_step_obs,
    const std::vector<double>& times,
    const std::function<std::optional<Eigen::VectorXd>(int)>& startup_fallback) {
  const int n = static_cast<int>(per_step_obs.size());
  if (static_cast<int>(times.size()) != n)
    throw std::invalid_argument("fitting pipeline: times/observations length mismatch");
  const int d = tracker.config().delay_steps;
  const int horizon = tracker.config().horizon_steps;

  FittingSeries out;
  out.online.resize(n);
  out.delayed.resize(n);
  out.smoothed.resize(n);
  out.forecast.resize(n);

  long fit_count = 0;
  long iteration_sum = 0;
  for (int i = 0; i < n; ++i) {
    auto t0 = std::chrono::steady_clock::now();
    tracker.push_observation(per_step_obs[i]);
    out.fit_seconds += seconds_since(t0);
    if (tracker.has_fit()) {
      if (tracker.has_fit_result()) {
        ++fit_count;
        iteration_sum += tracker.last_fit_result().iterations;
      }
      t0 = std::chrono::steady_clock::now();
      out.online[i] = tracker.infer_at(StfMode::Online, times[i]).estimate;
      out.online_seconds += seconds_since(t0);

      if (i - d >= 0) {
        t0 = std::chrono::steady_clock::now();
        out.delayed[i - d] = tracker.infer_at(StfMode::Delayed, times[i - d]).estimate;
        out.delayed_seconds += seconds_since(t0);
      }
      if (i + horizon < n) {
        t0 = std::chrono::steady_clock::now();
        out.forecast[i + horizon] =
            tracker.infer_at(StfMode::Forecast, times[i + horizon]).estimate;
        out.forecast_seconds += seconds_since(t0);
      }
    } else {
      out.online[i] = startup_fallback(i);
    }
  }
  out.mean_fit_iterations = fit_count > 0 ? double(iteration_sum) / fit_count : 0.0;

  // Trailing delayed slots never reach the fixed lag before the record
  // ends; they are interpolations of the final window.
  if (tracker.has_fit()) {
    auto t0 = std::chrono::steady_clock::now();
    for (int j = 0; j < n; ++j)
      if (!out.delayed[j])
        out.delayed[j] = tracker.infer_at(StfMode::Delayed, times[j]).estimate;
    out.delayed_seconds += seconds_since(t0);
  }
  for (int j = 0; j < n; ++j)
    if (!out.delayed[j]) out.delayed[j] = startup_fallback(j);

  // Backward pass over the completed delayed record.
  std::vector<StfOutput> delayed_outputs;
  delayed_outputs.reserve(n);
  for (int j = 0; j < n; ++j) {
    if (!out.delayed[j]) continue;
    StfOutput o;
    o.query_time = times[j];
    o.estimate = *out.delayed[j];
    o.mode = StfMode::Delayed;
    delayed_outputs.push_back(std::move(o));
  }
  if (static_cast<int>(delayed_outputs.size()) >= tracker.config().order) {
    auto t0 = std::chrono::steady_clock::now();
    const auto smoothed = smoothed_pass(delayed_outputs, tracker.config());
    out.smoothed_seconds = seconds_since(t0);
    size_t si = 0;
    for (int j = 0; j < n && si < smoothed.size(); ++j) {
      if (!out.delayed[j]) continue;
      out.smoothed[j] = smoothed[si++].estimate;
    }
  }
  return out;
}

}  // namespace stf::scenarios
