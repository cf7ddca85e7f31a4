#include <algorithm>
#include <chrono>
#include <stdexcept>

#include "stf/scenarios.hpp"

namespace stf::scenarios {

namespace {

using baselines::GaussianBelief;
using baselines::NonlinearModel;
using baselines::StepRecord;

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double range_of_altitude(const Scenario3Config& config, double h) {
  const double dh = h - config.radar_altitude;
  return std::sqrt(config.horizontal_dist * config.horizontal_dist + dh * dh);
}

}  // namespace

Eigen::VectorXd ballistic_derivative(const Eigen::Vector3d& state, double gamma) {
  Eigen::VectorXd d(3);
  d[0] = -state[1];
  d[1] = -std::exp(-gamma * state[0]) * state[1] * state[1] * state[2];
  d[2] = 0.0;
  return d;
}

Eigen::VectorXd ballistic_flow(const Scenario3Config& config, const Eigen::VectorXd& state,
                               double seconds) {
  const double gamma = config.gamma;
  const auto deriv = [gamma](const Eigen::VectorXd& x) {
    return ballistic_derivative(x, gamma);
  };
  const int substeps = std::max(1, static_cast<int>(config.rk4_substeps * seconds + 0.5));
  const double dt = seconds / substeps;
  Eigen::VectorXd x = state;
  for (int i = 0; i < substeps; ++i) x = rk4_step(x, deriv, dt);
  return x;
}

std::vector<Eigen::VectorXd> scenario3_truth(const Scenario3Config& config) {
  std::vector<Eigen::VectorXd> truth(config.steps + 1);
  truth[0] = config.x0;
  for (int k = 1; k <= config.steps; ++k)
    truth[k] = ballistic_flow(config, truth[k - 1], 1.0);
  return truth;
}

double scenario3_observe(const Scenario3Config& config, const Eigen::VectorXd& state,
                         RngStream& rng) {
  return range_of_altitude(config, state[0]) +
         rng.gaussian(0.0, std::sqrt(config.range_noise_var));
}

BallisticVelocityFit ballistic_velocity_and_coeff_fit(
    const FotParams& altitude_fit, const std::vector<double>& window_times,
    const std::optional<PreviousKinematics>& previous, double gamma, double c0,
    const FitOptions& options) {
  if (window_times.empty())
    throw std::invalid_argument("velocity fit needs window sample times");

  double c_hat = c0;
  if (previous) {
    if (previous->speed == 0.0)
      throw std::runtime_error("coefficient inversion undefined: previous speed is zero");
    c_hat = -previous->speed_dot /
            (std::exp(-gamma * previous->altitude) * previous->speed * previous->speed);
  }

  const int m = 3;
  BasisSpec basis;
  basis.kind = BasisKind::Monomial;
  basis.order = m;
  const double t_ref = altitude_fit.t_ref;
  const int nt = static_cast<int>(window_times.size());

  // residuals stack [dh/dt + s; ds/dt + exp(-gamma h) s^2 c] per sample time
  const auto residual_fn = [&](const Eigen::VectorXd& b) {
    Eigen::VectorXd r(2 * nt);
    for (int i = 0; i < nt; ++i) {
      const double t = window_times[i];
      const Eigen::VectorXd phi = basis_vector(basis, t, t_ref);
      const Eigen::VectorXd dphi = basis_derivative_vector(basis, t, t_ref, 1);
      const double h = evaluate(altitude_fit, t).value[0];
      const double h_dot = derivative(altitude_fit, t, 1)[0];
      const double s = b.dot(phi);
      const double s_dot = b.dot(dphi);
      r[2 * i] = h_dot + s;
      r[2 * i + 1] = s_dot + std::exp(-gamma * h) * s * s * c_hat;
    }
    return r;
  };
  const auto jacobian_fn = [&](const Eigen::VectorXd& b) {
    Eigen::MatrixXd J(2 * nt, m);
    for (int i = 0; i < nt; ++i) {
      const double t = window_times[i];
      const Eigen::VectorXd phi = basis_vector(basis, t, t_ref);
      const Eigen::VectorXd dphi = basis_derivative_vector(basis, t, t_ref, 1);
      const double h = evaluate(altitude_fit, t).value[0];
      const double s = b.dot(phi);
      J.row(2 * i) = phi.transpose();
      J.row(2 * i + 1) =
          dphi.transpose() + 2.0 * std::exp(-gamma * h) * s * c_hat * phi.transpose();
    }
    return J;
  };

  // seed from the altitude fit: s ~ -dh/dt, exactly representable in the basis
  Eigen::VectorXd b0 = Eigen::VectorXd::Zero(m);
  if (altitude_fit.basis.kind == BasisKind::Monomial && altitude_fit.basis.order >= 2) {
    b0[0] = -altitude_fit.coeffs[0][1];
    if (altitude_fit.basis.order >= 3) b0[1] = -2.0 * altitude_fit.coeffs[0][2];
  }

  const LmCoreResult core = lm_minimize(residual_fn, jacobian_fn, b0, options);

  BallisticVelocityFit out;
  out.velocity.basis = basis;
  out.velocity.t_ref = t_ref;
  out.velocity.coeffs = {core.params};
  out.velocity.window_k1 = altitude_fit.window_k1;
  out.velocity.window_k2 = altitude_fit.window_k2;
  out.coeff = c_hat;
  out.objective = core.objective;
  return out;
}

ScenarioRun run_scenario3(const Scenario3Config& config, const StfConfig& stf_config,
                          const std::vector<std::string>& estimators, std::uint64_t seed,
                          int run_index) {
  RngStream noise_rng(seed, run_index, rng_role::kNoise);

  const auto truth = scenario3_truth(config);
  const int n = config.steps;

  ScenarioRun out;
  out.times.resize(n);
  auto& truth_alt = out.truth["altitude"];
  auto& truth_vel = out.truth["velocity"];
  auto& truth_coeff = out.truth["coeff"];
  truth_alt.resize(n);
  truth_vel.resize(n);
  truth_coeff.resize(n);
  std::vector<double> obs(n);
  for (int i = 0; i < n; ++i) {
    out.times[i] = i + 1.0;
    truth_alt[i] = truth[i + 1].head(1);
    truth_vel[i] = truth[i + 1].segment(1, 1);
    truth_coeff[i] = truth[i + 1].tail(1);
    obs[i] = scenario3_observe(config, truth[i + 1], noise_rng);
  }

  const auto want = [&](const std::string& name) {
    return std::find(estimators.begin(), estimators.end(), name) != estimators.end();
  };

  const auto make_model = [&]() {
    NonlinearModel m;
    m.dynamics = [&config](const Eigen::VectorXd& x) {
      return ballistic_flow(config, x, 1.0);
    };
    m.Q = Eigen::MatrixXd::Zero(3, 3);
    m.observe = [&config](const Eigen::VectorXd& x) {
      Eigen::VectorXd y(1);
      y[0] = range_of_altitude(config, x[0]);
      return y;
    };
    m.observe_jac = [&config](const Eigen::VectorXd& x) {
      Eigen::MatrixXd J = Eigen::MatrixXd::Zero(1, 3);
      J(0, 0) = (x[0] - config.radar_altitude) / range_of_altitude(config, x[0]);
      return J;
    };
    m.R = config.range_noise_var * Eigen::MatrixXd::Identity(1, 1);
    return m;
  };

  const auto altitude_series = [&](const std::vector<GaussianBelief>& beliefs,
                                   double seconds) {
    RunSeries s;
    s.truth_key = "altitude";
    s.seconds = seconds;
    s.estimates.resize(n);
    for (int i = 0; i < n; ++i) s.estimates[i] = beliefs[i].mean.head(1);
    return s;
  };

  // --- EKF / UKF ---
  const auto run_filter = [&](baselines::FilterKind kind, const std::string& name) {
    if (!want(name)) return;
    const NonlinearModel model = make_model();
    GaussianBelief belief{config.prior_mean, config.prior_var.asDiagonal()};
    std::vector<GaussianBelief> filtered(n);
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd y(1);
      y[0] = obs[i];
      const StepRecord rec = kind == baselines::FilterKind::Ekf
                                 ? baselines::ekf_step(belief, model, y)
                                 : baselines::ukf_step(belief, model, y);
      belief = rec.updated;
      filtered[i] = belief;
    }
    out.series[name] = altitude_series(filtered, seconds_since(t0));
  };
  run_filter(baselines::FilterKind::Ekf, "ekf");
  run_filter(baselines::FilterKind::Ukf, "ukf");

  // --- particle filter with the heavy-tail likelihood ---
  if (want("pf")) {
    RngStream pf_rng(seed, run_index, name_role("pf"));
    baselines::ParticleSet particles;
    particles.states.resize(config.particles);
    for (int i = 0; i < config.particles; ++i) {
      Eigen::VectorXd x(3);
      for (int d = 0; d < 3; ++d)
        x[d] = config.prior_mean[d] + std::sqrt(config.prior_var[d]) * pf_rng.gaussian();
      particles.states[i] = x;
    }
    particles.weights =
        Eigen::VectorXd::Constant(config.particles, 1.0 / config.particles);

    const auto propagate = [&](const Eigen::VectorXd& x, RngStream&) {
      return ballistic_flow(config, x, 1.0);
    };
    const auto predict_obs = [&](const Eigen::VectorXd& x) {
      return range_of_altitude(config, x[0]);
    };

    RunSeries s;
    s.truth_key = "altitude";
    s.estimates.resize(n);
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < n; ++i) {
      const auto step = baselines::pf_step(particles, propagate, predict_obs, obs[i], pf_rng);
      particles = step.particles;
      s.estimates[i] = step.weighted_mean.head(1);
    }
    s.seconds = seconds_since(t0);
    out.series["pf"] = s;
  }

  // --- observation-only inference ---
  if (want("o2_biased")) {
    baselines::O2SignState sign;
    RunSeries s;
    s.truth_key = "altitude";
    s.estimates.resize(n);
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < n; ++i) {
      const auto est = baselines::o2_triangulate(obs[i], config.horizontal_dist,
                                                 config.radar_altitude, sign);
      s.estimates[i] = Eigen::VectorXd::Constant(1, est.altitude);
    }
    s.seconds = seconds_since(t0);
    out.series["o2_biased"] = s;
  }
  if (want("o2_unbiased")) {
    RngStream debias_rng(seed, run_index, name_role("o2_unbiased"));
    baselines::O2SignState sign;
    RunSeries s;
    s.truth_key = "altitude";
    s.estimates.resize(n);
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < n; ++i) {
      // advance the sign logic on the raw projection, then debias with the
      // branch that is active at this step
      baselines::o2_triangulate(obs[i], config.horizontal_dist, config.radar_altitude, sign);
      const int branch = sign.sign;
      const auto projection = [&](double y) {
        const double yc = std::max(y, config.horizontal_dist);
        const double leg =
            std::sqrt(std::max(yc * yc - config.horizontal_dist * config.horizontal_dist, 0.0));
        return branch * leg + config.radar_altitude;
      };
      const double debiased = baselines::o2_debias(projection, obs[i],
                                                   config.range_noise_var, debias_rng);
      s.estimates[i] = Eigen::VectorXd::Constant(1, debiased);
      sign.prev_altitude = debiased;
    }
    s.seconds = seconds_since(t0);
    out.series["o2_unbiased"] = s;
  }

  // --- altitude fitting + derivative-matching velocity/coefficient fit ---
  if (want("fit_online") || want("fit_velocity") || want("fit_coeff")) {
    ResidualSpec spec;
    spec.model = [&config](const Eigen::VectorXd& state, int) {
      Eigen::VectorXd y(1);
      y[0] = range_of_altitude(config, state[0]);
      return y;
    };
    spec.jacobian = [&config](const Eigen::VectorXd& state, int) {
      Eigen::MatrixXd J(1, 1);
      J(0, 0) = (state[0] - config.radar_altitude) / range_of_altitude(config, state[0]);
      return J;
    };
    // positive-branch projection for the cold start (the target starts far
    // above the radar)
    spec.projection = [&config](const Observation& o) {
      const double y = std::max(o.value[0], config.horizontal_dist);
      const double leg =
          std::sqrt(std::max(y * y - config.horizontal_dist * config.horizontal_dist, 0.0));
      return Eigen::VectorXd::Constant(1, leg + config.radar_altitude);
    };

    BasisSpec basis;
    basis.kind = BasisKind::Monomial;
    basis.order = stf_config.order;
    Tracker tracker(stf_config, spec, basis, 1);

    baselines::O2SignState fallback_sign;
    RunSeries alt, vel, coeff;
    alt.truth_key = "altitude";
    vel.truth_key = "velocity";
    coeff.truth_key = "coeff";
    alt.estimates.resize(n);
    vel.estimates.resize(n);
    coeff.estimates.resize(n);

    std::optional<PreviousKinematics> previous;
    double fit_seconds = 0.0, vel_seconds = 0.0;
    for (int i = 0; i < n; ++i) {
      auto t0 = std::chrono::steady_clock::now();
      tracker.push_observation(
          Observation{out.times[i], 0, Eigen::VectorXd::Constant(1, obs[i]), 1.0});
      fit_seconds += seconds_since(t0);
      if (!tracker.has_fit()) {
        const auto raw = baselines::o2_triangulate(obs[i], config.horizontal_dist,
                                                   config.radar_altitude, fallback_sign);
        alt.estimates[i] = Eigen::VectorXd::Constant(1, raw.altitude);
        continue;
      }
      t0 = std::chrono::steady_clock::now();
      const FotParams& altitude_fit = *tracker.current_fit();
      alt.estimates[i] =
          Eigen::VectorXd::Constant(1, evaluate(altitude_fit, out.times[i]).value[0]);
      fit_seconds += seconds_since(t0);

      t0 = std::chrono::steady_clock::now();
      std::vector<double> window_times;
      for (const auto& o : tracker.buffer()) window_times.push_back(o.time);
      const BallisticVelocityFit vfit = ballistic_velocity_and_coeff_fit(
          altitude_fit, window_times, previous, config.gamma, config.c0);
      vel.estimates[i] =
          Eigen::VectorXd::Constant(1, evaluate(vfit.velocity, out.times[i]).value[0]);
      coeff.estimates[i] = Eigen::VectorXd::Constant(1, vfit.coeff);
      previous = PreviousKinematics{
          out.times[i], evaluate(altitude_fit, out.times[i]).value[0],
          evaluate(vfit.velocity, out.times[i]).value[0],
          derivative(vfit.velocity, out.times[i], 1)[0]};
      vel_seconds += seconds_since(t0);
    }
    alt.seconds = fit_seconds;
    vel.seconds = fit_seconds + vel_seconds;
    coeff.seconds = fit_seconds + vel_seconds;
    if (want("fit_online")) out.series["fit_online"] = alt;
    if (want("fit_velocity")) out.series["fit_velocity"] = vel;
    if (want("fit_coeff")) out.series["fit_coeff"] = coeff;
  }

  return out;
}

}  // namespace stf::scenarios
