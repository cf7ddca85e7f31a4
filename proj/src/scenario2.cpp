#include <algorithm>
#include <chrono>
#include <stdexcept>

#include "stf/scenarios.hpp"

namespace stf::scenarios {

namespace {

using baselines::GaussianBelief;
using baselines::ImmBank;
using baselines::ImmStepResult;
using baselines::NonlinearModel;
using baselines::StepRecord;

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// coordinated-turn flow on [px,py,vx,vy,omega]
Eigen::VectorXd ct_flow(const Eigen::VectorXd& x, double dt) {
  Eigen::VectorXd out = x;
  const double w = x[4];
  if (std::abs(w) < 1e-9) {
    out[0] += x[2] * dt;
    out[1] += x[3] * dt;
    return out;
  }
  const double sw = std::sin(w * dt), cw = std::cos(w * dt);
  out[0] = x[0] + (x[2] * sw - x[3] * (1.0 - cw)) / w;
  out[1] = x[1] + (x[2] * (1.0 - cw) + x[3] * sw) / w;
  out[2] = x[2] * cw - x[3] * sw;
  out[3] = x[2] * sw + x[3] * cw;
  return out;
}

// turn rate over the step starting at t = (step-1)*dt
double scenario2_turn_rate(int step, double dt) {
  const double t = (step - 1) * dt;
  if (t >= 6.0 - 1e-9 && t < 8.0 - 1e-9) return 1.0;
  if (t >= 13.0 - 1e-9 && t < 15.0 - 1e-9) return -1.0;
  return 0.0;
}

}  // namespace

double bearing_to(const Eigen::Vector2d& sensor, const Eigen::Vector2d& position) {
  const double dx = position[0] - sensor[0];
  const double dy = position[1] - sensor[1];
  if (dx == 0.0 && dy == 0.0)
    throw std::runtime_error("bearing undefined: target coincides with sensor");
  return std::atan2(dy, dx);
}

std::vector<Eigen::VectorXd> scenario2_truth(const Scenario2Config& config) {
  std::vector<Eigen::VectorXd> truth(config.steps + 1);
  Eigen::VectorXd x(5);
  x << 0, 0, 1, 0, 0;
  truth[0] = x;
  for (int k = 1; k <= config.steps; ++k) {
    x[4] = scenario2_turn_rate(k, config.dt);
    x = ct_flow(x, config.dt);
    truth[k] = x;
  }
  return truth;
}

Eigen::VectorXd scenario2_observe(const Scenario2Config& config, const Eigen::VectorXd& state,
                                  RngStream& rng) {
  const double var = config.truth_sigma_v < 0.0 ? config.sigma_v : config.truth_sigma_v;
  const double sd = std::sqrt(var);
  Eigen::VectorXd y(4);
  for (int i = 0; i < 4; ++i)
    y[i] = wrap_angle(bearing_to(config.sensors[i], state.head<2>()) + rng.gaussian(0.0, sd));
  return y;
}

ScenarioRun run_scenario2(const Scenario2Config& config, const StfConfig& stf_config,
                          const std::vector<std::string>& estimators, std::uint64_t seed,
                          int run_index) {
  RngStream noise_rng(seed, run_index, rng_role::kNoise);

  const auto truth = scenario2_truth(config);
  const int n = config.steps;

  ScenarioRun out;
  out.times.resize(n);
  auto& truth_pos = out.truth["position"];
  truth_pos.resize(n);
  std::vector<Eigen::VectorXd> obs(n);
  for (int i = 0; i < n; ++i) {
    out.times[i] = (i + 1) * config.dt;
    truth_pos[i] = truth[i + 1].head<2>();
    obs[i] = scenario2_observe(config, truth[i + 1], noise_rng);
  }

  const auto want = [&](const std::string& name) {
    return std::find(estimators.begin(), estimators.end(), name) != estimators.end();
  };

  // bearing observation pieces shared by the filters and the fitting
  const auto observe_positions = [&](const Eigen::Vector2d& p) {
    Eigen::VectorXd y(4);
    for (int i = 0; i < 4; ++i) y[i] = bearing_to(config.sensors[i], p);
    return y;
  };
  const auto bearing_jac_wrt_position = [&](const Eigen::Vector2d& p) {
    Eigen::MatrixXd J(4, 2);
    for (int i = 0; i < 4; ++i) {
      const double dx = p[0] - config.sensors[i][0];
      const double dy = p[1] - config.sensors[i][1];
      const double d2 = dx * dx + dy * dy;
      if (d2 == 0.0) throw std::runtime_error("bearing Jacobian undefined at sensor");
      J(i, 0) = -dy / d2;
      J(i, 1) = dx / d2;
    }
    return J;
  };
  const Eigen::MatrixXd R = config.sigma_v * Eigen::MatrixXd::Identity(4, 4);
  const std::vector<int> angular{0, 1, 2, 3};

  const auto make_state_model = [&](int dim, bool with_turn) {
    NonlinearModel m;
    if (!with_turn) {
      const auto lin = wpv_model(config.dt, config.q_wpv, 2);
      Eigen::MatrixXd F = Eigen::MatrixXd::Zero(dim, dim);
      F.topLeftCorner(4, 4) = lin.F;
      Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(dim, dim);
      Q.topLeftCorner(4, 4) = lin.Q;
      m.dynamics = [F](const Eigen::VectorXd& x) { return Eigen::VectorXd(F * x); };
      m.dynamics_jac = [F](const Eigen::VectorXd&) { return F; };
      m.Q = Q;
    } else {
      const double dt = config.dt;
      m.dynamics = [dt](const Eigen::VectorXd& x) { return ct_flow(x, dt); };
      m.Q = Eigen::MatrixXd::Zero(5, 5);
      m.Q(4, 4) = config.q_turn;
    }
    m.observe = [=](const Eigen::VectorXd& x) { return observe_positions(x.head<2>()); };
    m.observe_jac = [=](const Eigen::VectorXd& x) {
      Eigen::MatrixXd J = Eigen::MatrixXd::Zero(4, x.size());
      J.leftCols(2) = bearing_jac_wrt_position(x.head<2>());
      return J;
    };
    m.R = R;
    m.angular_obs_dims = angular;
    return m;
  };

  const Eigen::VectorXd x0 = truth[0];
  Eigen::VectorXd init_var(5);
  init_var << 10.1, 10.1, 1.1, 1.1, 1.0;

  const auto position_series = [&](const std::vector<GaussianBelief>& beliefs,
                                   double seconds) {
    RunSeries s;
    s.seconds = seconds;
    s.estimates.resize(n);
    for (int i = 0; i < n; ++i) s.estimates[i] = beliefs[i].mean.head(2);
    return s;
  };

  // --- single-model EKF/UKF with RTS smoothers ---
  const auto run_single = [&](baselines::FilterKind kind, const std::string& f_name,
                              const std::string& s_name) {
    if (!want(f_name) && !want(s_name)) return;
    const NonlinearModel model = make_state_model(4, false);
    GaussianBelief belief{x0.head(4), init_var.head(4).asDiagonal()};
    std::vector<StepRecord> records(n);
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < n; ++i) {
      records[i] = kind == baselines::FilterKind::Ekf
                       ? baselines::ekf_step(belief, model, obs[i])
                       : baselines::ukf_step(belief, model, obs[i]);
      belief = records[i].updated;
    }
    const double filter_seconds = seconds_since(t0);
    if (want(f_name)) {
      std::vector<GaussianBelief> filtered(n);
      for (int i = 0; i < n; ++i) filtered[i] = records[i].updated;
      out.series[f_name] = position_series(filtered, filter_seconds);
    }
    if (want(s_name)) {
      t0 = std::chrono::steady_clock::now();
      const auto smoothed = baselines::rts_smooth(records);
      out.series[s_name] = position_series(smoothed, filter_seconds + seconds_since(t0));
    }
  };
  run_single(baselines::FilterKind::Ekf, "ekf_wpv", "eks_wpv");
  run_single(baselines::FilterKind::Ukf, "ukf_wpv", "uks_wpv");

  // --- IMM banks (WPV + CT, 5D embedded) ---
  const auto run_imm = [&](baselines::FilterKind kind, const std::string& f_name,
                           const std::string& s_name, const std::string& fc_name) {
    if (!want(f_name) && !want(s_name) && !want(fc_name)) return;
    ImmBank bank;
    bank.models.resize(2);
    bank.models[0].kind = kind;
    bank.models[0].nonlinear = make_state_model(5, false);
    bank.models[1].kind = kind;
    bank.models[1].nonlinear = make_state_model(5, true);
    bank.transition = Eigen::MatrixXd(2, 2);
    bank.transition << 0.9, 0.1, 0.1, 0.9;
    bank.mode_probs = Eigen::VectorXd(2);
    bank.mode_probs << 0.9, 0.1;

    std::vector<GaussianBelief> beliefs(2, GaussianBelief{x0, init_var.asDiagonal()});
    std::vector<ImmStepResult> history(n);
    RunSeries forecast;
    forecast.estimates.resize(n);
    double forecast_extra = 0.0;

    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < n; ++i) {
      history[i] = baselines::imm_step(bank, beliefs, obs[i]);
      if (want(fc_name) && i + stf_config.horizon_steps < n) {
        const auto tfc = std::chrono::steady_clock::now();
        const GaussianBelief fc =
            baselines::imm_forecast(bank, beliefs, stf_config.horizon_steps);
        forecast.estimates[i + stf_config.horizon_steps] = fc.mean.head(2);
        forecast_extra += seconds_since(tfc);
      }
    }
    const double filter_seconds = seconds_since(t0) - forecast_extra;

    if (want(f_name)) {
      RunSeries s;
      s.seconds = filter_seconds;
      s.estimates.resize(n);
      for (int i = 0; i < n; ++i) s.estimates[i] = history[i].combined.mean.head(2);
      out.series[f_name] = s;
    }
    if (want(s_name)) {
      t0 = std::chrono::steady_clock::now();
      const auto smoothed = baselines::imm_smooth(history);
      RunSeries s;
      s.seconds = filter_seconds + seconds_since(t0);
      s.estimates.resize(n);
      for (int i = 0; i < n; ++i) s.estimates[i] = smoothed[i].mean.head(2);
      out.series[s_name] = s;
    }
    if (want(fc_name)) {
      forecast.seconds = filter_seconds + forecast_extra;
      out.series[fc_name] = forecast;
    }
  };
  run_imm(baselines::FilterKind::Ekf, "ekf_imm", "ekf_imm_smoother", "ekf_imm_forecast");
  run_imm(baselines::FilterKind::Ukf, "ukf_imm", "ukf_imm_smoother", "ukf_imm_forecast");

  // --- joint four-sensor bearing fitting (hot start) ---
  if (want("fit_online") || want("fit_delayed") || want("fit_smoothed") ||
      want("fit_forecast")) {
    ResidualSpec spec;
    spec.model = [=](const Eigen::VectorXd& state, int) {
      return observe_positions(state.head<2>());
    };
    spec.jacobian = [=](const Eigen::VectorXd& state, int) {
      return Eigen::MatrixXd(bearing_jac_wrt_position(state.head<2>()));
    };
    spec.angular_dims = angular;

    BasisSpec basis;
    basis.kind = BasisKind::Monomial;
    basis.order = stf_config.order;
    StfConfig cfg = stf_config;
    cfg.min_fit_count = 3;  // fitting starts at the third sampling instant
    Tracker tracker(cfg, spec, basis, 2);
    tracker.seed_hot_start({{out.times[0], Eigen::Vector2d(0.0, 0.0)},
                            {out.times[1], Eigen::Vector2d(1.0, 0.0)}});

    std::vector<Observation> per_step(n);
    for (int i = 0; i < n; ++i) per_step[i] = Observation{out.times[i], -1, obs[i], 1.0};
    const auto fallback = [&](int) -> std::optional<Eigen::VectorXd> {
      return std::nullopt;  // hot start covers the early steps
    };
    const FittingSeries fits = run_fitting_pipeline(tracker, per_step, out.times, fallback);

    const auto emit = [&](const std::string& name,
                          const std::vector<std::optional<Eigen::VectorXd>>& series,
                          double seconds) {
      if (!want(name)) return;
      RunSeries s;
      s.seconds = seconds;
      s.estimates = series;
      out.series[name] = s;
    };
    emit("fit_online", fits.online, fits.fit_seconds + fits.online_seconds);
    emit("fit_delayed", fits.delayed, fits.fit_seconds + fits.delayed_seconds);
    emit("fit_smoothed", fits.smoothed,
         fits.fit_seconds + fits.delayed_seconds + fits.smoothed_seconds);
    emit("fit_forecast", fits.forecast, fits.fit_seconds + fits.forecast_seconds);
  }

  return out;
}

}  // namespace stf::scenarios
