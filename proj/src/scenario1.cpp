#include <algorithm>
#include <chrono>
#include <stdexcept>

#include "stf/scenarios.hpp"

namespace stf::scenarios {

namespace {

using baselines::GaussianBelief;
using baselines::ImmBank;
using baselines::ImmModel;
using baselines::ImmStepResult;
using baselines::LinearGaussianModel;
using baselines::StepRecord;

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// WPV embedded in the 6D [px,py,vx,vy,ax,ay] space: acceleration rows are
// hard zero so the model behaves exactly like the 4D WPV filter.
LinearGaussianModel wpv_embedded6(double dt, double q) {
  const LinearGaussianModel base = wpv_model(dt, q, 2);
  LinearGaussianModel m;
  m.F = Eigen::MatrixXd::Zero(6, 6);
  m.F.topLeftCorner(4, 4) = base.F;
  m.Q = Eigen::MatrixXd::Zero(6, 6);
  m.Q.topLeftCorner(4, 4) = base.Q;
  m.Hm = Eigen::MatrixXd::Zero(2, 6);
  m.Hm(0, 0) = m.Hm(1, 1) = 1.0;
  return m;
}

Eigen::VectorXd sample_gaussian(const Eigen::MatrixXd& cov, RngStream& rng) {
  const Eigen::MatrixXd s = baselines::psd_sqrt(cov);
  Eigen::VectorXd z(cov.rows());
  for (int i = 0; i < z.size(); ++i) z[i] = rng.gaussian();
  return s * z;
}

}  // namespace

bool scenario1_wpa_active(int step) {
  return (step >= 51 && step <= 70) || (step >= 121 && step <= 150);
}

std::vector<Eigen::VectorXd> scenario1_truth(const Scenario1Config& config, RngStream& rng) {
  const LinearGaussianModel wpv = wpv_embedded6(config.dt, config.q_wpv);
  const LinearGaussianModel wpa = wpa_model(config.dt, config.q_wpa, 2);
  std::vector<Eigen::VectorXd> truth(config.steps + 1);
  Eigen::VectorXd x(6);
  x << 0, 0, 0, -1, 0, 0;
  truth[0] = x;
  for (int k = 1; k <= config.steps; ++k) {
    const LinearGaussianModel& m = scenario1_wpa_active(k) ? wpa : wpv;
    x = m.F * x + sample_gaussian(m.Q, rng);
    truth[k] = x;
  }
  return truth;
}

Eigen::Vector2d scenario1_observe(const Scenario1Config& config, const Eigen::VectorXd& state,
                                  RngStream& rng) {
  const double sd = std::sqrt(config.obs_var);
  return state.head<2>() + Eigen::Vector2d(rng.gaussian(0.0, sd), rng.gaussian(0.0, sd));
}

ScenarioRun run_scenario1(const Scenario1Config& config, const StfConfig& stf_config,
                          const std::vector<std::string>& estimators, std::uint64_t seed,
                          int run_index) {
  RngStream truth_rng(seed, run_index, rng_role::kTruth);
  RngStream noise_rng(seed, run_index, rng_role::kNoise);

  const auto truth = scenario1_truth(config, truth_rng);
  const int n = config.steps;

  ScenarioRun out;
  out.times.resize(n);
  auto& truth_pos = out.truth["position"];
  truth_pos.resize(n);
  std::vector<Eigen::VectorXd> obs(n);
  for (int i = 0; i < n; ++i) {
    out.times[i] = (i + 1) * config.dt;
    truth_pos[i] = truth[i + 1].head<2>();
    obs[i] = scenario1_observe(config, truth[i + 1], noise_rng);
  }

  const auto want = [&](const std::string& name) {
    return std::find(estimators.begin(), estimators.end(), name) != estimators.end();
  };
  const auto position_series = [&](const std::vector<GaussianBelief>& beliefs,
                                   double seconds) {
    RunSeries s;
    s.seconds = seconds;
    s.estimates.resize(n);
    for (int i = 0; i < n; ++i) s.estimates[i] = beliefs[i].mean.head(2);
    return s;
  };

  const Eigen::VectorXd x0 = truth[0];
  Eigen::VectorXd init_var(6);
  init_var << 0.1, 0.1, 0.1, 0.1, 0.5, 0.5;
  const Eigen::MatrixXd obs_cov = config.obs_var * Eigen::MatrixXd::Identity(2, 2);
  const auto with_r = [&](LinearGaussianModel m) {
    m.R = obs_cov;
    return m;
  };

  // --- single-model KF/KS pairs ---
  const auto run_kf_pair = [&](const LinearGaussianModel& model, const Eigen::VectorXd& mean0,
                               const Eigen::VectorXd& var0, const std::string& kf_name,
                               const std::string& ks_name) {
    if (!want(kf_name) && !want(ks_name)) return;
    std::vector<StepRecord> records(n);
    GaussianBelief belief{mean0, var0.asDiagonal()};
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < n; ++i) {
      records[i] = baselines::kf_step(belief, model, obs[i]);
      belief = records[i].updated;
    }
    const double filter_seconds = seconds_since(t0);
    if (want(kf_name)) {
      std::vector<GaussianBelief> filtered(n);
      for (int i = 0; i < n; ++i) filtered[i] = records[i].updated;
      out.series[kf_name] = position_series(filtered, filter_seconds);
    }
    if (want(ks_name)) {
      t0 = std::chrono::steady_clock::now();
      const auto smoothed = baselines::rts_smooth(records);
      out.series[ks_name] = position_series(smoothed, filter_seconds + seconds_since(t0));
    }
  };

  run_kf_pair(with_r(wpv_model(config.dt, config.q_wpv, 2)), x0.head(4),
              init_var.head(4), "kf_wpv", "ks_wpv");
  run_kf_pair(with_r(wpa_model(config.dt, config.q_wpa, 2)), x0, init_var, "kf_wpa",
              "ks_wpa");

  // --- IMM family ---
  if (want("imm") || want("imm_smoother") || want("imm_forecast")) {
    ImmBank bank;
    bank.models.resize(2);
    bank.models[0].kind = baselines::FilterKind::Kf;
    bank.models[0].linear = with_r(wpv_embedded6(config.dt, config.q_wpv));
    bank.models[1].kind = baselines::FilterKind::Kf;
    bank.models[1].linear = with_r(wpa_model(config.dt, config.q_wpa, 2));
    bank.transition = Eigen::MatrixXd(2, 2);
    bank.transition << 0.98, 0.02, 0.02, 0.98;
    bank.mode_probs = Eigen::VectorXd(2);
    bank.mode_probs << 0.9, 0.1;

    std::vector<GaussianBelief> beliefs(2, GaussianBelief{x0, init_var.asDiagonal()});
    std::vector<ImmStepResult> history(n);
    std::vector<std::optional<Eigen::VectorXd>> forecasts(n);

    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < n; ++i) history[i] = baselines::imm_step(bank, beliefs, obs[i]);
    const double filter_seconds = seconds_since(t0);

    if (want("imm")) {
      RunSeries s;
      s.seconds = filter_seconds;
      s.estimates.resize(n);
      for (int i = 0; i < n; ++i) s.estimates[i] = history[i].combined.mean.head(2);
      out.series["imm"] = s;
    }
    if (want("imm_smoother")) {
      t0 = std::chrono::steady_clock::now();
      const auto smoothed = baselines::imm_smooth(history);
      RunSeries s;
      s.seconds = filter_seconds + seconds_since(t0);
      s.estimates.resize(n);
      for (int i = 0; i < n; ++i) s.estimates[i] = smoothed[i].mean.head(2);
      out.series["imm_smoother"] = s;
    }
    if (want("imm_forecast")) {
      // replay the forward pass, forecasting n steps ahead after each update
      ImmBank fbank = bank;
      fbank.mode_probs = Eigen::VectorXd(2);
      fbank.mode_probs << 0.9, 0.1;
      std::vector<GaussianBelief> fbeliefs(2, GaussianBelief{x0, init_var.asDiagonal()});
      RunSeries s;
      s.estimates.resize(n);
      t0 = std::chrono::steady_clock::now();
      for (int i = 0; i < n; ++i) {
        baselines::imm_step(fbank, fbeliefs, obs[i]);
        if (i + stf_config.horizon_steps < n) {
          const GaussianBelief fc =
              baselines::imm_forecast(fbank, fbeliefs, stf_config.horizon_steps);
          s.estimates[i + stf_config.horizon_steps] = fc.mean.head(2);
        }
      }
      s.seconds = seconds_since(t0);
      out.series["imm_forecast"] = s;
    }
  }

  // --- trajectory fitting family ---
  if (want("fit_online") || want("fit_delayed") || want("fit_smoothed") ||
      want("fit_forecast")) {
    ResidualSpec spec;
    spec.identity_model = true;
    BasisSpec basis;
    basis.kind = BasisKind::Monomial;
    basis.order = stf_config.order;
    Tracker tracker(stf_config, spec, basis, 2);

    std::vector<Observation> per_step(n);
    for (int i = 0; i < n; ++i) per_step[i] = Observation{out.times[i], 0, obs[i], 1.0};
    const auto fallback = [&](int i) -> std::optional<Eigen::VectorXd> {
      return obs[i];  // raw projection during startup
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
