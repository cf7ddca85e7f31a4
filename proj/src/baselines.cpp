#include "stf/baselines.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "stf/fitting_engine.hpp"  // wrap_angle

namespace stf::baselines {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

Eigen::MatrixXd fd_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x) {
  const Eigen::VectorXd base = f(x);
  Eigen::MatrixXd J(base.size(), x.size());
  for (int i = 0; i < x.size(); ++i) {
    const double h = std::max(1e-6, 1e-6 * std::abs(x[i]));
    Eigen::VectorXd xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    J.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return J;
}

Eigen::VectorXd wrap_dims(Eigen::VectorXd v, const std::vector<int>& dims) {
  for (int d : dims)
    if (d >= 0 && d < v.size()) v[d] = wrap_angle(v[d]);
  return v;
}

double gaussian_log_likelihood(const Eigen::VectorXd& innovation, const Eigen::MatrixXd& S) {
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("singular innovation covariance");
  const Eigen::VectorXd alpha = llt.solve(innovation);
  double logdet = 0.0;
  for (int i = 0; i < S.rows(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
  return -0.5 * (innovation.dot(alpha) + logdet + S.rows() * kLog2Pi);
}

struct MeasurementUpdate {
  GaussianBelief posterior;
  double log_likelihood;
};

MeasurementUpdate linear_update(const GaussianBelief& predicted, const Eigen::MatrixXd& H,
                                const Eigen::MatrixXd& R, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& y_hat,
                                const std::vector<int>& angular) {
  const Eigen::MatrixXd S = symmetrize_psd(H * predicted.cov * H.transpose() + R);
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("singular innovation covariance");
  const Eigen::MatrixXd K = llt.solve(H * predicted.cov).transpose();
  const Eigen::VectorXd innovation = wrap_dims(y - y_hat, angular);

  MeasurementUpdate out;
  out.posterior.mean = predicted.mean + K * innovation;
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(predicted.cov.rows(),
                                                      predicted.cov.cols());
  const Eigen::MatrixXd A = I - K * H;  // Joseph form
  out.posterior.cov =
      symmetrize_psd(A * predicted.cov * A.transpose() + K * R * K.transpose());
  out.log_likelihood = gaussian_log_likelihood(innovation, S);
  return out;
}

StepRecord filter_step(const ImmModel& model, const GaussianBelief& belief,
                       const Eigen::VectorXd& y) {
  switch (model.kind) {
    case FilterKind::Kf: return kf_step(belief, *model.linear, y);
    case FilterKind::Ekf: return ekf_step(belief, *model.nonlinear, y);
    case FilterKind::Ukf: return ukf_step(belief, *model.nonlinear, y);
  }
  throw std::logic_error("unknown filter kind");
}

GaussianBelief model_predict(const ImmModel& model, const GaussianBelief& belief) {
  switch (model.kind) {
    case FilterKind::Kf: return kf_predict(belief, *model.linear);
    case FilterKind::Ekf: return ekf_predict(belief, *model.nonlinear);
    case FilterKind::Ukf: return ukf_predict(belief, *model.nonlinear);
  }
  throw std::logic_error("unknown filter kind");
}

GaussianBelief moment_match(const std::vector<GaussianBelief>& beliefs,
                            const Eigen::VectorXd& probs) {
  GaussianBelief out;
  out.mean = Eigen::VectorXd::Zero(beliefs.front().mean.size());
  for (size_t i = 0; i < beliefs.size(); ++i) out.mean += probs[i] * beliefs[i].mean;
  out.cov = Eigen::MatrixXd::Zero(out.mean.size(), out.mean.size());
  for (size_t i = 0; i < beliefs.size(); ++i) {
    const Eigen::VectorXd d = beliefs[i].mean - out.mean;
    out.cov += probs[i] * (beliefs[i].cov + d * d.transpose());
  }
  out.cov = symmetrize_psd(out.cov);
  return out;
}

struct UkfWeights {
  double gamma;
  Eigen::VectorXd wm, wc;
};

// alpha = 1, beta = 2, kappa = 3 - n
UkfWeights ukf_weights(int n) {
  const double lambda = 3.0 - n;
  UkfWeights w;
  w.gamma = std::sqrt(n + lambda);
  w.wm.resize(2 * n + 1);
  w.wc.resize(2 * n + 1);
  w.wm[0] = lambda / (n + lambda);
  w.wc[0] = w.wm[0] + 2.0;
  for (int i = 1; i <= 2 * n; ++i) w.wm[i] = w.wc[i] = 0.5 / (n + lambda);
  return w;
}

Eigen::MatrixXd sigma_points(const GaussianBelief& belief, double gamma) {
  const int n = static_cast<int>(belief.mean.size());
  const Eigen::MatrixXd S = psd_sqrt(belief.cov);
  Eigen::MatrixXd chi(n, 2 * n + 1);
  chi.col(0) = belief.mean;
  for (int i = 0; i < n; ++i) {
    chi.col(1 + i) = belief.mean + gamma * S.col(i);
    chi.col(1 + n + i) = belief.mean - gamma * S.col(i);
  }
  return chi;
}

}  // namespace

Eigen::MatrixXd symmetrize_psd(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw std::runtime_error("eigen factorization failed");
  const double min_eig = eig.eigenvalues().minCoeff();
  if (min_eig >= 0.0) return sym;
  const double max_eig = eig.eigenvalues().cwiseAbs().maxCoeff();
  if (min_eig < -1e-3 * std::max(1.0, max_eig)) {
    std::ostringstream msg;
    msg << "covariance is materially indefinite (min eigenvalue " << min_eig << "):\n"
        << sym;
    throw std::runtime_error(msg.str());
  }
  // small negatives from approximate smoothing/mixing are clamped
  const Eigen::VectorXd clamped = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * clamped.asDiagonal() * eig.eigenvectors().transpose();
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (m + m.transpose()));
  if (eig.info() != Eigen::Success) throw std::runtime_error("eigen factorization failed");
  const Eigen::VectorXd clamped = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * clamped.cwiseSqrt().asDiagonal() *
         eig.eigenvectors().transpose();
}

GaussianBelief kf_predict(const GaussianBelief& belief, const LinearGaussianModel& model) {
  GaussianBelief out;
  out.mean = model.F * belief.mean;
  out.cov = symmetrize_psd(model.F * belief.cov * model.F.transpose() + model.Q);
  return out;
}

StepRecord kf_step(const GaussianBelief& belief, const LinearGaussianModel& model,
                   const Eigen::VectorXd& y) {
  if (model.Hm.cols() != belief.mean.size() || model.Hm.rows() != y.size())
    throw std::invalid_argument("kf_step: dimension mismatch");
  StepRecord rec;
  rec.input = belief;
  rec.predicted = kf_predict(belief, model);
  rec.cross = belief.cov * model.F.transpose();
  const MeasurementUpdate up = linear_update(rec.predicted, model.Hm, model.R, y,
                                             model.Hm * rec.predicted.mean, {});
  rec.updated = up.posterior;
  rec.log_likelihood = up.log_likelihood;
  return rec;
}

GaussianBelief ekf_predict(const GaussianBelief& belief, const NonlinearModel& model) {
  const Eigen::MatrixXd F = model.dynamics_jac ? model.dynamics_jac(belief.mean)
                                               : fd_jacobian(model.dynamics, belief.mean);
  GaussianBelief out;
  out.mean = model.dynamics(belief.mean);
  out.cov = symmetrize_psd(F * belief.cov * F.transpose() + model.Q);
  return out;
}

StepRecord ekf_step(const GaussianBelief& belief, const NonlinearModel& model,
                    const Eigen::VectorXd& y) {
  const Eigen::MatrixXd F = model.dynamics_jac ? model.dynamics_jac(belief.mean)
                                               : fd_jacobian(model.dynamics, belief.mean);
  StepRecord rec;
  rec.input = belief;
  rec.predicted.mean = model.dynamics(belief.mean);
  rec.predicted.cov = symmetrize_psd(F * belief.cov * F.transpose() + model.Q);
  rec.cross = belief.cov * F.transpose();

  const Eigen::MatrixXd H = model.observe_jac ? model.observe_jac(rec.predicted.mean)
                                              : fd_jacobian(model.observe, rec.predicted.mean);
  const MeasurementUpdate up = linear_update(rec.predicted, H, model.R, y,
                                             model.observe(rec.predicted.mean),
                                             model.angular_obs_dims);
  rec.updated = up.posterior;
  rec.log_likelihood = up.log_likelihood;
  return rec;
}

GaussianBelief ukf_predict(const GaussianBelief& belief, const NonlinearModel& model) {
  const int n = static_cast<int>(belief.mean.size());
  const UkfWeights w = ukf_weights(n);
  const Eigen::MatrixXd chi = sigma_points(belief, w.gamma);
  Eigen::MatrixXd prop(n, chi.cols());
  for (int i = 0; i < chi.cols(); ++i) prop.col(i) = model.dynamics(chi.col(i));
  GaussianBelief out;
  out.mean = prop * w.wm;
  Eigen::MatrixXd P = model.Q;
  for (int i = 0; i < chi.cols(); ++i) {
    const Eigen::VectorXd d = prop.col(i) - out.mean;
    P += w.wc[i] * d * d.transpose();
  }
  out.cov = symmetrize_psd(P);
  return out;
}

StepRecord ukf_step(const GaussianBelief& belief, const NonlinearModel& model,
                    const Eigen::VectorXd& y) {
  const int n = static_cast<int>(belief.mean.size());
  const UkfWeights w = ukf_weights(n);

  // predict
  const Eigen::MatrixXd chi = sigma_points(belief, w.gamma);
  Eigen::MatrixXd prop(n, chi.cols());
  for (int i = 0; i < chi.cols(); ++i) prop.col(i) = model.dynamics(chi.col(i));
  StepRecord rec;
  rec.input = belief;
  rec.predicted.mean = prop * w.wm;
  Eigen::MatrixXd P = model.Q;
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < chi.cols(); ++i) {
    const Eigen::VectorXd d = prop.col(i) - rec.predicted.mean;
    P += w.wc[i] * d * d.transpose();
    cross += w.wc[i] * (chi.col(i) - belief.mean) * d.transpose();
  }
  rec.predicted.cov = symmetrize_psd(P);
  rec.cross = cross;

  // update with a fresh sigma set from the prediction
  const Eigen::MatrixXd chi2 = sigma_points(rec.predicted, w.gamma);
  const int ny = static_cast<int>(y.size());
  Eigen::MatrixXd ys(ny, chi2.cols());
  for (int i = 0; i < chi2.cols(); ++i) ys.col(i) = model.observe(chi2.col(i));

  Eigen::VectorXd y_hat = ys * w.wm;
  for (int d : model.angular_obs_dims) {
    double s = 0.0, c = 0.0;
    for (int i = 0; i < ys.cols(); ++i) {
      s += w.wm[i] * std::sin(ys(d, i));
      c += w.wm[i] * std::cos(ys(d, i));
    }
    y_hat[d] = std::atan2(s, c);
  }

  Eigen::MatrixXd S = model.R;
  Eigen::MatrixXd Pxy = Eigen::MatrixXd::Zero(n, ny);
  for (int i = 0; i < chi2.cols(); ++i) {
    const Eigen::VectorXd dy = wrap_dims(ys.col(i) - y_hat, model.angular_obs_dims);
    const Eigen::VectorXd dx = chi2.col(i) - rec.predicted.mean;
    S += w.wc[i] * dy * dy.transpose();
    Pxy += w.wc[i] * dx * dy.transpose();
  }
  S = symmetrize_psd(S);
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("singular innovation covariance");
  const Eigen::MatrixXd K = llt.solve(Pxy.transpose()).transpose();
  const Eigen::VectorXd innovation = wrap_dims(y - y_hat, model.angular_obs_dims);
  rec.updated.mean = rec.predicted.mean + K * innovation;
  rec.updated.cov = symmetrize_psd(rec.predicted.cov - K * S * K.transpose());
  rec.log_likelihood = gaussian_log_likelihood(innovation, S);
  return rec;
}

std::vector<GaussianBelief> rts_smooth(const std::vector<StepRecord>& records,
                                       bool allow_singular) {
  if (records.empty()) return {};
  const int n = static_cast<int>(records.size());
  std::vector<GaussianBelief> smoothed(n);
  smoothed[n - 1] = records[n - 1].updated;  // boundary: last smoothed = last filtered
  for (int k = n - 2; k >= 0; --k) {
    const GaussianBelief& pred_next = records[k + 1].predicted;
    Eigen::MatrixXd G;
    if (allow_singular) {
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(pred_next.cov);
      G = records[k + 1].cross * cod.pseudoInverse();
    } else {
      Eigen::LLT<Eigen::MatrixXd> llt(pred_next.cov);
      if (llt.info() != Eigen::Success)
        throw std::runtime_error("singular predicted covariance in RTS pass");
      G = llt.solve(records[k + 1].cross.transpose()).transpose();
    }
    smoothed[k].mean =
        records[k].updated.mean + G * (smoothed[k + 1].mean - pred_next.mean);
    smoothed[k].cov = symmetrize_psd(
        records[k].updated.cov +
        G * (smoothed[k + 1].cov - pred_next.cov) * G.transpose());
  }
  return smoothed;
}

std::vector<GaussianBelief> rts_smooth(const std::vector<GaussianBelief>& filtered,
                                       const std::vector<GaussianBelief>& predicted,
                                       const LinearGaussianModel& model) {
  if (filtered.size() != predicted.size())
    throw std::invalid_argument("rts_smooth: filtered/predicted length mismatch");
  std::vector<StepRecord> records(filtered.size());
  for (size_t k = 0; k < filtered.size(); ++k) {
    records[k].predicted = predicted[k];
    records[k].updated = filtered[k];
    records[k].cross =
        k == 0 ? Eigen::MatrixXd(Eigen::MatrixXd::Zero(model.F.rows(), model.F.cols()))
               : Eigen::MatrixXd(filtered[k - 1].cov * model.F.transpose());
  }
  return rts_smooth(records, false);
}

void ImmBank::validate() const {
  const int n = static_cast<int>(models.size());
  if (n == 0) throw std::invalid_argument("empty IMM bank");
  if (transition.rows() != n || transition.cols() != n)
    throw std::invalid_argument("IMM transition matrix shape mismatch");
  for (int i = 0; i < n; ++i)
    if (std::abs(transition.row(i).sum() - 1.0) > 1e-9)
      throw std::invalid_argument("IMM transition rows must sum to 1");
  if (mode_probs.size() != n || std::abs(mode_probs.sum() - 1.0) > 1e-9 ||
      mode_probs.minCoeff() < 0.0)
    throw std::invalid_argument("IMM mode probabilities must form a simplex point");
}

ImmStepResult imm_step(ImmBank& bank, std::vector<GaussianBelief>& beliefs,
                       const Eigen::VectorXd& y) {
  bank.validate();
  const int n = static_cast<int>(bank.models.size());
  if (static_cast<int>(beliefs.size()) != n)
    throw std::invalid_argument("imm_step: belief count mismatch");

  // mixing
  const Eigen::VectorXd c = bank.transition.transpose() * bank.mode_probs;
  std::vector<GaussianBelief> mixed(n);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd mix_w(n);
    for (int i = 0; i < n; ++i) mix_w[i] = bank.transition(i, j) * bank.mode_probs[i];
    mix_w /= std::max(c[j], 1e-300);
    mixed[j] = moment_match(beliefs, mix_w);
  }

  ImmStepResult out;
  out.records.resize(n);
  Eigen::VectorXd log_post(n);
  for (int j = 0; j < n; ++j) {
    out.records[j] = filter_step(bank.models[j], mixed[j], y);
    log_post[j] = std::log(std::max(c[j], 1e-300)) + out.records[j].log_likelihood;
  }

  const double shift = log_post.maxCoeff();
  Eigen::VectorXd mu(n);
  if (!std::isfinite(shift)) {
    mu.setConstant(1.0 / n);  // all likelihoods vanished
    out.likelihood_fallback = true;
  } else {
    for (int j = 0; j < n; ++j) mu[j] = std::exp(log_post[j] - shift);
    mu /= mu.sum();
  }

  bank.mode_probs = mu;
  for (int j = 0; j < n; ++j) beliefs[j] = out.records[j].updated;

  std::vector<GaussianBelief> updated(n);
  for (int j = 0; j < n; ++j) updated[j] = out.records[j].updated;
  out.combined = moment_match(updated, mu);
  out.mode_probs = mu;
  return out;
}

GaussianBelief imm_forecast(const ImmBank& bank, const std::vector<GaussianBelief>& beliefs,
                            int n_steps) {
  if (n_steps < 1) throw std::invalid_argument("imm_forecast needs n_steps >= 1");
  bank.validate();
  const int n = static_cast<int>(bank.models.size());
  Eigen::VectorXd mu = bank.mode_probs;
  std::vector<GaussianBelief> current = beliefs;
  for (int step = 0; step < n_steps; ++step) {
    const Eigen::VectorXd c = bank.transition.transpose() * mu;
    std::vector<GaussianBelief> mixed(n);
    for (int j = 0; j < n; ++j) {
      Eigen::VectorXd mix_w(n);
      for (int i = 0; i < n; ++i) mix_w[i] = bank.transition(i, j) * mu[i];
      mix_w /= std::max(c[j], 1e-300);
      mixed[j] = moment_match(current, mix_w);
    }
    for (int j = 0; j < n; ++j) current[j] = model_predict(bank.models[j], mixed[j]);
    mu = c;
  }
  return moment_match(current, mu);
}

std::vector<GaussianBelief> imm_smooth(const std::vector<ImmStepResult>& forward) {
  if (forward.empty()) return {};
  const int n_models = static_cast<int>(forward.front().records.size());
  const int n_steps = static_cast<int>(forward.size());

  // Per-model backward pass anchored on the mixed input beliefs: inside
  // one IMM cycle the chain (mixed state at k, predicted/updated at k+1)
  // is a consistent Gaussian two-slice model, so smoothing against the
  // mixed belief keeps the recursion well posed.
  std::vector<std::vector<GaussianBelief>> per_model(n_models);
  for (int j = 0; j < n_models; ++j) {
    std::vector<GaussianBelief> smoothed(n_steps);
    smoothed[n_steps - 1] = forward[n_steps - 1].records[j].updated;
    for (int k = n_steps - 2; k >= 0; --k) {
      const StepRecord& next = forward[k + 1].records[j];
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(next.predicted.cov);
      const Eigen::MatrixXd G = next.cross * cod.pseudoInverse();
      smoothed[k].mean =
          next.input.mean + G * (smoothed[k + 1].mean - next.predicted.mean);
      smoothed[k].cov = symmetrize_psd(
          next.input.cov +
          G * (smoothed[k + 1].cov - next.predicted.cov) * G.transpose());
    }
    per_model[j] = std::move(smoothed);
  }

  std::vector<GaussianBelief> combined(n_steps);
  for (int k = 0; k < n_steps; ++k) {
    std::vector<GaussianBelief> at_k(n_models);
    for (int j = 0; j < n_models; ++j) at_k[j] = per_model[j][k];
    combined[k] = moment_match(at_k, forward[k].mode_probs);
  }
  return combined;
}

std::vector<int> systematic_resample_indices(const Eigen::VectorXd& weights, double u01) {
  const int n = static_cast<int>(weights.size());
  std::vector<int> indices(n);
  double cumulative = weights[0];
  int j = 0;
  for (int i = 0; i < n; ++i) {
    const double target = (u01 + i) / n;
    while (target > cumulative && j < n - 1) cumulative += weights[++j];
    indices[i] = j;
  }
  return indices;
}

PfStepResult pf_step(const ParticleSet& particles,
                     const std::function<Eigen::VectorXd(const Eigen::VectorXd&, RngStream&)>&
                         propagate,
                     const std::function<double(const Eigen::VectorXd&)>& predict_obs,
                     double y, RngStream& rng) {
  const int n = static_cast<int>(particles.states.size());
  if (n < 2) throw std::invalid_argument("pf_step needs at least two particles");

  ParticleSet prop;
  prop.states.resize(n);
  Eigen::VectorXd sq(n);
  for (int i = 0; i < n; ++i) {
    prop.states[i] = propagate(particles.states[i], rng);
    const double d = y - predict_obs(prop.states[i]);
    sq[i] = d * d;
  }

  PfStepResult out;
  const double max_sq = sq.maxCoeff();
  Eigen::VectorXd w(n);
  if (max_sq < 1e-12) {
    w.setConstant(1.0 / n);  // degenerate denominator guard
    out.degenerate = true;
  } else {
    for (int i = 0; i < n; ++i) w[i] = particles.weights[i] * std::exp(-sq[i] / max_sq);
    w /= w.sum();
  }

  out.weighted_mean = Eigen::VectorXd::Zero(prop.states.front().size());
  for (int i = 0; i < n; ++i) out.weighted_mean += w[i] * prop.states[i];

  const auto indices = systematic_resample_indices(w, rng.uniform());
  out.particles.states.resize(n);
  for (int i = 0; i < n; ++i) out.particles.states[i] = prop.states[indices[i]];
  out.particles.weights = Eigen::VectorXd::Constant(n, 1.0 / n);
  return out;
}

O2Estimate o2_triangulate(double range, double horizontal_dist, double radar_altitude,
                          O2SignState& state) {
  O2Estimate out;
  double y = range;
  if (y < horizontal_dist) {
    y = horizontal_dist;
    out.clamped = true;
  }
  const double leg = std::sqrt(std::max(y * y - horizontal_dist * horizontal_dist, 0.0));
  double altitude = state.sign * leg + radar_altitude;
  if (!state.flipped && state.prev_altitude && !(altitude < *state.prev_altitude)) {
    // falling-altitude constraint violated on the positive branch: flip once
    state.sign = -1;
    state.flipped = true;
    altitude = -leg + radar_altitude;
  }
  state.prev_altitude = altitude;
  out.altitude = altitude;
  return out;
}

double o2_debias(const std::function<double(double)>& projection, double y,
                 double noise_var, RngStream& rng, int n_samples) {
  if (n_samples < 1) throw std::invalid_argument("o2_debias needs n_samples >= 1");
  const double g0 = projection(y);
  const double sd = std::sqrt(noise_var);
  double bias = 0.0;
  for (int j = 0; j < n_samples; ++j) bias += projection(y + rng.gaussian(0.0, sd)) - g0;
  bias /= n_samples;
  return g0 - bias;
}

}  // namespace stf::baselines
