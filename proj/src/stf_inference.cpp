#include "stf/stf_inference.hpp"

#include <algorithm>
#include <stdexcept>

namespace stf {

void StfConfig::validate() const {
  if (window_count < 1) throw std::invalid_argument("window_count must be >= 1");
  if (window_count < order)
    throw std::invalid_argument("window_count must be >= basis order");
  if (delay_steps < 0) throw std::invalid_argument("delay_steps must be >= 0");
  if (horizon_steps < 1) throw std::invalid_argument("horizon_steps must be >= 1");
  if (nominal_interval <= 0.0)
    throw std::invalid_argument("nominal_interval must be positive");
}

Tracker::Tracker(StfConfig config, ResidualSpec spec, BasisSpec basis, int state_dims)
    : config_(config), spec_(std::move(spec)), basis_(basis), state_dims_(state_dims) {
  config_.validate();
  basis_.validate();
}

void Tracker::push_observation(Observation obs) {
  last_replaced_ = false;
  auto dup = std::find_if(buffer_.begin(), buffer_.end(), [&](const Observation& o) {
    return o.time == obs.time && o.sensor_id == obs.sensor_id;
  });
  if (dup != buffer_.end()) {
    *dup = std::move(obs);
    last_replaced_ = true;
  } else {
    auto pos = std::upper_bound(buffer_.begin(), buffer_.end(), obs.time,
                                [](double t, const Observation& o) { return t < o.time; });
    buffer_.insert(pos, std::move(obs));
  }
  while (static_cast<int>(buffer_.size()) > config_.window_count)
    buffer_.erase(buffer_.begin());
  if (config_.max_span)
    while (buffer_.size() > 1 &&
           buffer_.back().time - buffer_.front().time > *config_.max_span)
      buffer_.erase(buffer_.begin());
  refit();
}

void Tracker::refit() {
  const int needed = std::max(config_.order, config_.min_fit_count);
  if (static_cast<int>(buffer_.size()) < needed) return;

  FitProblem problem;
  problem.window = TimeWindow{buffer_.front().time, buffer_.back().time,
                              config_.window_count};
  problem.observations = buffer_;
  problem.spec = spec_;
  problem.basis = basis_;
  problem.state_dims = state_dims_;
  problem.initial_params = warm_start_seed(warm_, problem.window, problem);

  FitResult result = spec_.identity_model ? linear_ls_fit(problem)
                                          : nonlinear_ls_fit(problem);
  fit_ = result.params;
  warm_ = result.params;
  last_result_ = std::move(result);
}

void Tracker::seed_hot_start(
    const std::vector<std::pair<double, Eigen::VectorXd>>& anchors) {
  if (anchors.empty()) throw std::invalid_argument("hot start needs anchors");
  FitProblem anchor_fit;
  anchor_fit.window = TimeWindow{anchors.front().first, anchors.back().first,
                                 config_.window_count};
  for (const auto& [t, x] : anchors)
    anchor_fit.observations.push_back(Observation{t, 0, x, 1.0});
  anchor_fit.spec.identity_model = true;
  anchor_fit.basis = basis_;
  anchor_fit.basis.order = std::min<int>(basis_.order, anchors.size());
  anchor_fit.state_dims = state_dims_;
  const FitResult fit = linear_ls_fit(anchor_fit);
  FotParams params = fit.params;
  if (anchor_fit.basis.order < basis_.order) {
    // zero-pad to the configured order
    FotParams full = params;
    full.basis = basis_;
    for (auto& c : full.coeffs) {
      Eigen::VectorXd padded = Eigen::VectorXd::Zero(basis_.order);
      padded.head(c.size()) = c;
      c = padded;
    }
    params = full;
  }
  warm_ = params;
  fit_ = params;
}

const FitResult& Tracker::last_fit_result() const {
  if (!last_result_) throw std::runtime_error("no fit has been computed yet");
  return *last_result_;
}

StfOutput Tracker::infer_at(StfMode mode, std::optional<double> query_time) const {
  if (!fit_)
    throw std::runtime_error("tracker has no trajectory fit yet (startup)");
  if (mode == StfMode::Smoothed && !query_time)
    throw std::invalid_argument("smoothed estimates come from smoothed_pass");
  const double k2 = buffer_.empty() ? fit_->window_k2 : buffer_.back().time;
  double t = 0.0;
  if (query_time) {
    t = *query_time;
  } else {
    switch (mode) {
      case StfMode::Delayed:
        t = k2 - config_.delay_steps * config_.nominal_interval;
        break;
      case StfMode::Online:
        t = k2;
        break;
      case StfMode::Forecast:
        t = k2 + config_.horizon_steps * config_.nominal_interval;
        break;
      case StfMode::Smoothed:
        break;  // unreachable
    }
  }
  const Evaluation eval = evaluate(*fit_, t);
  StfOutput out;
  out.query_time = t;
  out.estimate = eval.value;
  out.mode = mode;
  const double k1 = buffer_.empty() ? fit_->window_k1 : buffer_.front().time;
  out.extrapolated = (t < k1 || t > k2);
  return out;
}

std::array<double, 2> Tracker::effective_window() const {
  if (!fit_) throw std::runtime_error("tracker has no trajectory fit yet");
  const double k1 = buffer_.empty() ? fit_->window_k1 : buffer_.front().time;
  const double k2 = buffer_.empty() ? fit_->window_k2 : buffer_.back().time;
  return {k1 - config_.delay_steps * config_.nominal_interval,
          k2 + config_.horizon_steps * config_.nominal_interval};
}

std::vector<StfOutput> smoothed_pass(const std::vector<StfOutput>& delayed,
                                     const StfConfig& config) {
  config.validate();
  const int n = static_cast<int>(delayed.size());
  if (n < config.order)
    throw std::invalid_argument("record shorter than the basis order");

  std::vector<StfOutput> sorted = delayed;
  std::sort(sorted.begin(), sorted.end(),
            [](const StfOutput& a, const StfOutput& b) { return a.query_time < b.query_time; });

  const int dims = static_cast<int>(sorted.front().estimate.size());
  const int half = config.window_count / 2;
  BasisSpec basis;
  basis.kind = BasisKind::Monomial;
  basis.order = config.order;

  std::vector<StfOutput> smoothed(n);
  for (int i = 0; i < n; ++i) {
    int lo = std::max(0, i - half);
    int hi = std::min(n - 1, i + half);
    while (hi - lo + 1 < config.order) {  // clipped edge window, grow inward
      if (lo > 0) --lo;
      if (hi < n - 1) ++hi;
    }
    FitProblem problem;
    problem.window = TimeWindow{sorted[lo].query_time, sorted[hi].query_time,
                                config.window_count};
    for (int j = lo; j <= hi; ++j)
      problem.observations.push_back(
          Observation{sorted[j].query_time, 0, sorted[j].estimate, 1.0});
    problem.spec.identity_model = true;
    problem.basis = basis;
    problem.state_dims = dims;
    const FitResult fit = linear_ls_fit(problem);
    StfOutput out;
    out.query_time = sorted[i].query_time;
    out.estimate = evaluate(fit.params, out.query_time).value;
    out.mode = StfMode::Smoothed;
    out.extrapolated = false;
    smoothed[i] = std::move(out);
  }
  return smoothed;
}

}  // namespace stf
