#include "stf/fitting_engine.hpp"

#include <cmath>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

namespace stf {

namespace {

constexpr double kPenaltyEps = 1e-12;

Eigen::VectorXd predict_observation(const ResidualSpec& spec, const Eigen::VectorXd& state,
                                    const Observation& obs) {
  Eigen::VectorXd pred;
  if (spec.model) {
    try {
      pred = spec.model(state, obs.sensor_id);
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << "observation model evaluation failed at t=" << obs.time << ": " << e.what();
      throw std::runtime_error(msg.str());
    }
  } else if (spec.identity_model) {
    pred = state;
  } else {
    throw std::invalid_argument("ResidualSpec has no observation model");
  }
  if (spec.noise_mean.size() > 0) {
    if (spec.noise_mean.size() != pred.size())
      throw std::invalid_argument("noise_mean size mismatch");
    pred += spec.noise_mean;
  }
  return pred;
}

Eigen::VectorXd observation_diff(const ResidualSpec& spec, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& pred) {
  if (y.size() != pred.size())
    throw std::invalid_argument("observation/prediction size mismatch");
  Eigen::VectorXd diff = y - pred;
  for (int d : spec.angular_dims)
    if (d >= 0 && d < diff.size()) diff[d] = wrap_angle(diff[d]);
  return diff;
}

Eigen::MatrixXd observation_jacobian(const ResidualSpec& spec, const Eigen::VectorXd& state,
                                     const Observation& obs) {
  if (spec.jacobian) return spec.jacobian(state, obs.sensor_id);
  if (spec.identity_model && !spec.model)
    return Eigen::MatrixXd::Identity(state.size(), state.size());
  // central differences, step per coefficient magnitude
  const Eigen::VectorXd base = predict_observation(spec, state, obs);
  Eigen::MatrixXd H(base.size(), state.size());
  for (int i = 0; i < state.size(); ++i) {
    const double h = std::max(1e-6, 1e-6 * std::abs(state[i]));
    Eigen::VectorXd sp = state, sm = state;
    sp[i] += h;
    sm[i] -= h;
    H.col(i) = (predict_observation(spec, sp, obs) - predict_observation(spec, sm, obs)) /
               (2.0 * h);
  }
  return H;
}

int distinct_time_count(const std::vector<Observation>& obs) {
  std::set<double> times;
  for (const auto& o : obs) times.insert(o.time);
  return static_cast<int>(times.size());
}

FotParams make_params(const FitProblem& problem, double t_ref) {
  FotParams p;
  p.basis = problem.basis;
  p.t_ref = t_ref;
  p.window_k1 = problem.window.k1;
  p.window_k2 = problem.window.k2;
  p.coeffs.assign(problem.state_dims, Eigen::VectorXd::Zero(problem.basis.order));
  return p;
}

Eigen::VectorXd flatten(const FotParams& p) {
  const int m = p.basis.order;
  Eigen::VectorXd theta(p.dims() * m);
  for (int d = 0; d < p.dims(); ++d) theta.segment(d * m, m) = p.coeffs[d];
  return theta;
}

void unflatten(const Eigen::VectorXd& theta, FotParams& p) {
  const int m = p.basis.order;
  for (int d = 0; d < p.dims(); ++d) p.coeffs[d] = theta.segment(d * m, m);
}

}  // namespace

double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a <= 0.0) a += 2.0 * M_PI;
  return a - M_PI;
}

double residual_l2(const FotParams& params, const Observation& obs,
                   const ResidualSpec& spec) {
  if (!std::isfinite(obs.time)) throw std::invalid_argument("observation time not finite");
  const Eigen::VectorXd state = evaluate(params, obs.time).value;
  const Eigen::VectorXd pred = predict_observation(spec, state, obs);
  return observation_diff(spec, obs.value, pred).squaredNorm();
}

Eigen::VectorXd normalized_weights(const FitProblem& problem) {
  const auto& obs = problem.observations;
  if (obs.empty()) throw std::invalid_argument("empty observation window");
  const double lambda = problem.spec.fading_factor;
  if (lambda <= 0.0 || lambda > 1.0)
    throw std::invalid_argument("fading factor must lie in (0,1]");
  Eigen::VectorXd w(obs.size());
  for (size_t i = 0; i < obs.size(); ++i) {
    if (obs[i].weight < 0.0) throw std::invalid_argument("negative observation weight");
    w[i] = obs[i].weight * std::pow(lambda, problem.window.k2 - obs[i].time);
  }
  const double total = w.sum();
  if (total <= 0.0) throw std::invalid_argument("all observation weights are zero");
  return w / total;
}

double weighted_objective(const FitProblem& problem, const FotParams& params) {
  const Eigen::VectorXd w = normalized_weights(problem);
  double phi = 0.0;
  for (size_t i = 0; i < problem.observations.size(); ++i)
    phi += w[i] * residual_l2(params, problem.observations[i], problem.spec);
  if (problem.spec.penalty && problem.spec.penalty->trade_off > 0.0) {
    const auto& pen = *problem.spec.penalty;
    const Eigen::VectorXd at = evaluate(params, pen.anchor_time).value;
    phi += pen.trade_off * (at - pen.anchor_state).norm();
  }
  return phi;
}

FitResult linear_ls_fit(const FitProblem& problem) {
  problem.basis.validate();
  if (!problem.spec.identity_model)
    throw std::invalid_argument("linear_ls_fit requires a directly-observed identity model");
  if (problem.spec.penalty && problem.spec.penalty->trade_off > 0.0)
    throw std::invalid_argument("anchor penalty needs the nonlinear path");
  const int m = problem.basis.order;
  if (distinct_time_count(problem.observations) < m)
    throw std::runtime_error("rank deficiency: fewer distinct sample times than basis order");

  const Eigen::VectorXd w = normalized_weights(problem);
  const double t_ref = problem.t_ref_override.value_or(problem.window.midpoint());
  const int n = static_cast<int>(problem.observations.size());

  Eigen::MatrixXd design(n, m);
  for (int i = 0; i < n; ++i)
    design.row(i) =
        std::sqrt(w[i]) * basis_vector(problem.basis, problem.observations[i].time, t_ref)
                              .transpose();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  const double min_pivot = std::abs(qr.matrixR()(m - 1, m - 1));
  if (!(min_pivot > 0.0) || !std::isfinite(min_pivot))
    throw std::runtime_error("rank deficiency: collocation matrix is singular");
  const double cond = std::abs(qr.maxPivot()) / min_pivot;

  FitResult result;
  result.params = make_params(problem, t_ref);
  for (int d = 0; d < problem.state_dims; ++d) {
    Eigen::VectorXd rhs(n);
    for (int i = 0; i < n; ++i) {
      const auto& obs = problem.observations[i];
      if (obs.value.size() != problem.state_dims)
        throw std::invalid_argument("identity model expects value size == state_dims");
      double y = obs.value[d];
      if (problem.spec.noise_mean.size() > 0) y -= problem.spec.noise_mean[d];
      rhs[i] = std::sqrt(w[i]) * y;
    }
    result.params.coeffs[d] = qr.solve(rhs);
  }
  result.objective = weighted_objective(problem, result.params);
  result.iterations = 0;
  result.converged = true;
  result.condition_warning = cond > 1e10;
  return result;
}

LmCoreResult lm_minimize(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& residuals,
    const std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>& jacobian,
    Eigen::VectorXd theta, const FitOptions& options,
    const std::function<double(const Eigen::VectorXd&)>& objective_fn,
    const std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& box) {
  const auto clamp = [&](Eigen::VectorXd v) {
    if (box) v = v.cwiseMax(box->first).cwiseMin(box->second);
    return v;
  };
  const auto objective = [&](const Eigen::VectorXd& th) {
    return objective_fn ? objective_fn(th) : residuals(th).squaredNorm();
  };

  theta = clamp(theta);
  Eigen::VectorXd r = residuals(theta);
  double obj = objective(theta);
  Eigen::MatrixXd J = jacobian(theta);
  Eigen::MatrixXd A = J.transpose() * J;
  Eigen::VectorXd g = J.transpose() * r;
  double mu = 1e-3 * A.diagonal().maxCoeff();
  if (!(mu > 0.0)) mu = 1e-3;

  LmCoreResult out;
  out.converged = false;
  const int dim = static_cast<int>(theta.size());
  int it = 0;
  while (it < options.max_iterations) {
    ++it;
    Eigen::MatrixXd damped = A;
    damped.diagonal().array() += mu;
    const Eigen::VectorXd delta = damped.ldlt().solve(-g);
    const Eigen::VectorXd trial = clamp(theta + delta);
    const Eigen::VectorXd effective = trial - theta;
    if (effective.lpNorm<Eigen::Infinity>() < options.step_tol) {
      out.converged = true;
      break;
    }
    const double trial_obj = objective(trial);
    if (trial_obj < obj) {
      const double rel_decrease = (obj - trial_obj) / std::max(obj, 1e-300);
      theta = trial;
      obj = trial_obj;
      mu = std::max(mu * 0.1, 1e-18);
      r = residuals(theta);
      J = jacobian(theta);
      A = J.transpose() * J;
      g = J.transpose() * r;
      if (rel_decrease < options.rel_objective_tol) {
        out.converged = true;
        break;
      }
    } else {
      mu *= 10.0;
      if (mu > 1e32) break;  // stalled
    }
  }
  out.params = theta;
  out.objective = obj;
  out.iterations = it;
  if (dim > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(J);
    const double lo = std::abs(qr.matrixR()(std::min<int>(dim, J.rows()) - 1,
                                            std::min<int>(dim, J.rows()) - 1));
    out.condition_warning =
        qr.rank() < dim ||
        std::abs(qr.maxPivot()) / std::max(lo, std::numeric_limits<double>::min()) > 1e10;
  }
  return out;
}

FitResult nonlinear_ls_fit(const FitProblem& problem) {
  problem.basis.validate();
  if (problem.observations.empty())
    throw std::invalid_argument("nonlinear_ls_fit needs at least one observation");
  const Eigen::VectorXd w = normalized_weights(problem);

  FotParams seed;
  if (problem.initial_params && !problem.initial_params->empty())
    seed = *problem.initial_params;
  else
    seed = warm_start_seed(std::nullopt, problem.window, problem);
  double t_ref = problem.t_ref_override.value_or(problem.window.midpoint());
  if (problem.basis.kind == BasisKind::Monomial)
    seed = recenter(seed, t_ref);
  else
    t_ref = seed.t_ref;  // non-monomial coefficients cannot be shifted
  seed.window_k1 = problem.window.k1;
  seed.window_k2 = problem.window.k2;

  const int m = problem.basis.order;
  const int dims = problem.state_dims;
  int total_obs_dims = 0;
  for (const auto& o : problem.observations) total_obs_dims += static_cast<int>(o.value.size());
  const bool has_penalty = problem.spec.penalty && problem.spec.penalty->trade_off > 0.0;
  const int res_dim = total_obs_dims + (has_penalty ? dims : 0);

  FotParams shape = seed;
  const auto to_params = [&](const Eigen::VectorXd& theta) {
    FotParams p = shape;
    unflatten(theta, p);
    return p;
  };

  const auto residual_fn = [&](const Eigen::VectorXd& theta) {
    const FotParams p = to_params(theta);
    Eigen::VectorXd r(res_dim);
    int row = 0;
    for (size_t i = 0; i < problem.observations.size(); ++i) {
      const auto& obs = problem.observations[i];
      const Eigen::VectorXd state = evaluate(p, obs.time).value;
      const Eigen::VectorXd pred = predict_observation(problem.spec, state, obs);
      const Eigen::VectorXd diff = observation_diff(problem.spec, obs.value, pred);
      r.segment(row, diff.size()) = std::sqrt(w[i]) * diff;
      row += static_cast<int>(diff.size());
    }
    if (has_penalty) {
      const auto& pen = *problem.spec.penalty;
      const Eigen::VectorXd e0 = evaluate(p, pen.anchor_time).value - pen.anchor_state;
      const double scale =
          std::sqrt(pen.trade_off / std::max(e0.norm(), kPenaltyEps));
      r.segment(row, dims) = scale * e0;
    }
    return r;
  };

  const auto jacobian_fn = [&](const Eigen::VectorXd& theta) {
    const FotParams p = to_params(theta);
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(res_dim, dims * m);
    int row = 0;
    for (size_t i = 0; i < problem.observations.size(); ++i) {
      const auto& obs = problem.observations[i];
      const Eigen::VectorXd phi = basis_vector(problem.basis, obs.time, p.t_ref);
      const Eigen::VectorXd state = evaluate(p, obs.time).value;
      const Eigen::MatrixXd H = observation_jacobian(problem.spec, state, obs);
      const double sw = std::sqrt(w[i]);
      for (int d = 0; d < dims; ++d)
        J.block(row, d * m, H.rows(), m) -= sw * H.col(d) * phi.transpose();
      row += static_cast<int>(H.rows());
    }
    if (has_penalty) {
      const auto& pen = *problem.spec.penalty;
      const Eigen::VectorXd phi = basis_vector(problem.basis, pen.anchor_time, p.t_ref);
      const Eigen::VectorXd e0 = evaluate(p, pen.anchor_time).value - pen.anchor_state;
      const double scale =
          std::sqrt(pen.trade_off / std::max(e0.norm(), kPenaltyEps));
      for (int d = 0; d < dims; ++d) J.block(row + d, d * m, 1, m) = scale * phi.transpose();
    }
    return J;
  };

  const auto objective = [&](const Eigen::VectorXd& theta) {
    return weighted_objective(problem, to_params(theta));
  };

  std::optional<std::pair<Eigen::VectorXd, Eigen::VectorXd>> box;
  if (problem.bounds) {
    Eigen::VectorXd lo(dims * m), hi(dims * m);
    for (int d = 0; d < dims; ++d) {
      lo.segment(d * m, m) = problem.bounds->lo.row(d).transpose();
      hi.segment(d * m, m) = problem.bounds->hi.row(d).transpose();
    }
    box = std::make_pair(lo, hi);
  }

  const LmCoreResult core =
      lm_minimize(residual_fn, jacobian_fn, flatten(seed), problem.options, objective, box);

  FitResult result;
  result.params = to_params(core.params);
  result.objective = core.objective;
  result.iterations = core.iterations;
  result.converged = core.converged;
  result.condition_warning = core.condition_warning;
  return result;
}

FotParams warm_start_seed(const std::optional<FotParams>& previous, const TimeWindow& window,
                          const FitProblem& problem) {
  const double t_mid = problem.t_ref_override.value_or(0.5 * (window.k1 + window.k2));
  if (previous && !previous->empty()) {
    FotParams out = recenter(*previous, t_mid);
    out.window_k1 = window.k1;
    out.window_k2 = window.k2;
    return out;
  }

  FitProblem shaped = problem;
  shaped.window = window;
  FotParams out = make_params(shaped, t_mid);
  out.window_k1 = window.k1;
  out.window_k2 = window.k2;
  if (problem.observations.empty()) return out;

  const bool invertible = static_cast<bool>(problem.spec.projection) ||
                          problem.spec.identity_model;
  if (invertible) {
    // linear cold start on the projected observations
    std::vector<Observation> projected;
    projected.reserve(problem.observations.size());
    for (const auto& o : problem.observations) {
      Observation p = o;
      p.value = problem.spec.projection ? problem.spec.projection(o) : o.value;
      p.sensor_id = 0;
      projected.push_back(std::move(p));
    }
    const int distinct = distinct_time_count(projected);
    FitProblem cold;
    cold.window = window;
    cold.observations = std::move(projected);
    cold.spec.identity_model = true;
    cold.spec.fading_factor = problem.spec.fading_factor;
    cold.basis = problem.basis;
    cold.basis.order = std::min(problem.basis.order, std::max(1, distinct));
    cold.state_dims = problem.state_dims;
    cold.t_ref_override = t_mid;
    const FitResult fit = linear_ls_fit(cold);
    for (int d = 0; d < problem.state_dims; ++d)
      out.coeffs[d].head(cold.basis.order) = fit.params.coeffs[d];
    return out;
  }

  // No inversion available: zero coefficients, constant term from the first
  // observation when it lives in state space already.
  const auto& first = problem.observations.front();
  if (first.value.size() == problem.state_dims && problem.spec.identity_model)
    for (int d = 0; d < problem.state_dims; ++d) out.coeffs[d][0] = first.value[d];
  return out;
}

RlsState recursive_ls_update(const RlsState& state, const Eigen::VectorXd& regressor,
                             double y, double forgetting) {
  if (forgetting <= 0.0 || forgetting > 1.0)
    throw std::invalid_argument("forgetting factor must lie in (0,1]");
  if (!state.coeffs.allFinite() || !state.P.allFinite() || !regressor.allFinite() ||
      !std::isfinite(y))
    throw std::invalid_argument("recursive_ls_update: non-finite input");

  const Eigen::VectorXd Px = state.P * regressor;
  const double denom = forgetting + regressor.dot(Px);
  RlsState out;
  out.gain = Px / denom;
  out.coeffs = state.coeffs + out.gain * (y - regressor.dot(state.coeffs));
  Eigen::MatrixXd P = (state.P - (Px * Px.transpose()) / denom) / forgetting;
  out.P = 0.5 * (P + P.transpose());
  return out;
}

}  // namespace stf
