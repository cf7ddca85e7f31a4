#include <random>

#include "doctest.h"
#include "stf/stf_inference.hpp"

using namespace stf;

namespace {

Tracker line_tracker(int window_count = 10, int order = 2, double dt = 0.1) {
  StfConfig cfg;
  cfg.window_count = window_count;
  cfg.order = order;
  cfg.nominal_interval = dt;
  ResidualSpec spec;
  spec.identity_model = true;
  BasisSpec basis;
  basis.order = order;
  return Tracker(cfg, spec, basis, 1);
}

Observation scalar_obs(double t, double v, int sensor = 0) {
  Observation o;
  o.time = t;
  o.sensor_id = sensor;
  o.value = Eigen::VectorXd::Constant(1, v);
  return o;
}

}  // namespace

TEST_CASE("window keeps the newest window_count samples") {
  Tracker tracker = line_tracker(10);
  for (int k = 1; k <= 11; ++k) tracker.push_observation(scalar_obs(0.1 * k, k));
  CHECK(tracker.buffer().size() == 10);
  CHECK(tracker.buffer().front().time == doctest::Approx(0.2));
  CHECK(tracker.buffer().back().time == doctest::Approx(1.1));
}

TEST_CASE("missed detections need no imputation") {
  Tracker tracker = line_tracker(10);
  for (int k = 1; k <= 10; ++k) {
    if (k == 5) continue;  // missed detection
    tracker.push_observation(scalar_obs(0.1 * k, 1.0 + 2.0 * 0.1 * k));
  }
  CHECK(tracker.buffer().size() == 9);
  CHECK(tracker.has_fit());
  CHECK(tracker.infer_at(StfMode::Online).estimate[0] == doctest::Approx(3.0));
}

TEST_CASE("out-of-order arrival matches the chronological feed") {
  std::vector<double> times{0.1, 0.2, 0.3, 0.5, 0.4, 0.7, 0.6};
  std::mt19937 rng(9);
  std::normal_distribution<double> noise(0.0, 0.3);
  std::vector<double> values;
  for (double t : times) values.push_back(1.0 + 2.0 * t + noise(rng));

  Tracker shuffled = line_tracker();
  for (size_t i = 0; i < times.size(); ++i)
    shuffled.push_observation(scalar_obs(times[i], values[i]));

  std::vector<std::pair<double, double>> sorted_pairs;
  for (size_t i = 0; i < times.size(); ++i) sorted_pairs.push_back({times[i], values[i]});
  std::sort(sorted_pairs.begin(), sorted_pairs.end());
  Tracker ordered = line_tracker();
  for (const auto& [t, v] : sorted_pairs) ordered.push_observation(scalar_obs(t, v));

  const auto& a = shuffled.current_fit()->coeffs[0];
  const auto& b = ordered.current_fit()->coeffs[0];
  CHECK(a[0] == b[0]);  // bit-identical
  CHECK(a[1] == b[1]);
}

TEST_CASE("duplicate (time, sensor) replaces with a warning flag") {
  Tracker tracker = line_tracker();
  tracker.push_observation(scalar_obs(0.1, 1.0));
  tracker.push_observation(scalar_obs(0.2, 2.0));
  CHECK_FALSE(tracker.last_push_replaced());
  tracker.push_observation(scalar_obs(0.2, 5.0));
  CHECK(tracker.last_push_replaced());
  CHECK(tracker.buffer().size() == 2);
  CHECK(tracker.buffer().back().value[0] == doctest::Approx(5.0));
}

TEST_CASE("max_span evicts stale samples") {
  StfConfig cfg;
  cfg.window_count = 100;
  cfg.order = 2;
  cfg.max_span = 0.5;
  ResidualSpec spec;
  spec.identity_model = true;
  BasisSpec basis;
  basis.order = 2;
  Tracker tracker(cfg, spec, basis, 1);
  for (int k = 1; k <= 10; ++k) tracker.push_observation(scalar_obs(0.1 * k, k));
  CHECK(tracker.buffer().front().time >= doctest::Approx(0.5));
}

TEST_CASE("infer_at default query times") {
  Tracker tracker = line_tracker(10, 2, 0.1);
  // truth x(t) = 1 + 2t, noiseless, k2 = 3.0
  for (int k = 21; k <= 30; ++k) {
    const double t = 0.1 * k;
    tracker.push_observation(scalar_obs(t, 1.0 + 2.0 * t));
  }
  SUBCASE("forecast five steps ahead is exact for in-class truth") {
    const StfOutput out = tracker.infer_at(StfMode::Forecast);
    CHECK(out.query_time == doctest::Approx(3.5));
    CHECK(out.estimate[0] == doctest::Approx(8.0));
    CHECK(out.extrapolated);
  }
  SUBCASE("online equals evaluation at the newest sample time") {
    const StfOutput out = tracker.infer_at(StfMode::Online);
    CHECK(out.query_time == doctest::Approx(3.0));
    CHECK(out.estimate[0] ==
          doctest::Approx(evaluate(*tracker.current_fit(), 3.0).value[0]));
    CHECK_FALSE(out.extrapolated);
  }
  SUBCASE("delayed query sits d steps behind") {
    const StfOutput out = tracker.infer_at(StfMode::Delayed);
    CHECK(out.query_time == doctest::Approx(2.5));
    CHECK_FALSE(out.extrapolated);
  }
}

TEST_CASE("delayed default query matches the paper's half-second lag") {
  Tracker tracker = line_tracker(10, 2, 0.1);
  for (int k = 191; k <= 200; ++k) {
    const double t = 0.1 * k;
    tracker.push_observation(scalar_obs(t, 3.0 - t));
  }
  CHECK(tracker.buffer().back().time == doctest::Approx(20.0));
  CHECK(tracker.infer_at(StfMode::Delayed).query_time == doctest::Approx(19.5));
}

TEST_CASE("infer_at before any fit is an error") {
  Tracker tracker = line_tracker();
  CHECK_THROWS_AS(tracker.infer_at(StfMode::Online), std::runtime_error);
  tracker.push_observation(scalar_obs(0.1, 1.0));
  CHECK_THROWS_AS(tracker.infer_at(StfMode::Online), std::runtime_error);
  tracker.push_observation(scalar_obs(0.2, 2.0));
  CHECK_NOTHROW(tracker.infer_at(StfMode::Online));
}

TEST_CASE("startup fit interpolates exactly with m samples") {
  Tracker tracker = line_tracker(10, 3);
  tracker.push_observation(scalar_obs(0.1, 4.0));
  tracker.push_observation(scalar_obs(0.2, -1.0));
  tracker.push_observation(scalar_obs(0.3, 2.5));
  REQUIRE(tracker.has_fit());
  CHECK(evaluate(*tracker.current_fit(), 0.1).value[0] == doctest::Approx(4.0));
  CHECK(evaluate(*tracker.current_fit(), 0.2).value[0] == doctest::Approx(-1.0));
  CHECK(evaluate(*tracker.current_fit(), 0.3).value[0] == doctest::Approx(2.5));
}

TEST_CASE("effective window extends the sampling window") {
  Tracker tracker = line_tracker(10, 2, 0.1);
  for (int k = 10; k <= 20; ++k) tracker.push_observation(scalar_obs(0.1 * k, 0.1 * k));
  const auto [K1, K2] = tracker.effective_window();
  const double k1 = tracker.buffer().front().time;
  const double k2 = tracker.buffer().back().time;
  CHECK(K1 == doctest::Approx(k1 - 0.5));
  CHECK(K2 == doctest::Approx(k2 + 0.5));
  CHECK(K1 <= k1);
  CHECK(k2 <= K2);
}

TEST_CASE("all four modes are exact for noiseless in-class truth") {
  StfConfig cfg;
  cfg.window_count = 10;
  cfg.order = 3;
  cfg.nominal_interval = 0.1;
  ResidualSpec spec;
  spec.identity_model = true;
  BasisSpec basis;
  basis.order = 3;
  Tracker tracker(cfg, spec, basis, 1);

  const auto truth = [](double t) { return 2.0 - 1.5 * t + 0.75 * t * t; };
  std::vector<StfOutput> delayed;
  for (int k = 1; k <= 40; ++k) {
    const double t = 0.1 * k;
    tracker.push_observation(scalar_obs(t, truth(t)));
    if (!tracker.has_fit()) continue;
    CHECK(tracker.infer_at(StfMode::Online).estimate[0] ==
          doctest::Approx(truth(t)).epsilon(1e-8));
    const StfOutput fc = tracker.infer_at(StfMode::Forecast);
    CHECK(fc.estimate[0] == doctest::Approx(truth(fc.query_time)).epsilon(1e-8));
    const StfOutput dl = tracker.infer_at(StfMode::Delayed);
    CHECK(dl.estimate[0] == doctest::Approx(truth(dl.query_time)).epsilon(1e-8));
    delayed.push_back(dl);
  }
  const auto smoothed = smoothed_pass(delayed, cfg);
  for (const auto& s : smoothed)
    CHECK(s.estimate[0] == doctest::Approx(truth(s.query_time)).epsilon(1e-8));
}

TEST_CASE("smoothed_pass") {
  StfConfig cfg;
  cfg.window_count = 10;
  cfg.order = 2;
  cfg.nominal_interval = 0.1;

  SUBCASE("is idempotent on exact polynomials") {
    std::vector<StfOutput> delayed;
    for (int k = 0; k < 30; ++k) {
      StfOutput o;
      o.query_time = 0.1 * k;
      o.estimate = Eigen::VectorXd::Constant(1, 1.0 + 2.0 * o.query_time);
      o.mode = StfMode::Delayed;
      delayed.push_back(o);
    }
    const auto smoothed = smoothed_pass(delayed, cfg);
    for (size_t i = 0; i < delayed.size(); ++i)
      CHECK(smoothed[i].estimate[0] == doctest::Approx(delayed[i].estimate[0]));
  }

  SUBCASE("is symmetric under time reversal") {
    std::mt19937 rng(31);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<StfOutput> record;
    for (int k = 0; k < 25; ++k) {
      StfOutput o;
      o.query_time = 0.1 * k;
      o.estimate = Eigen::VectorXd::Constant(1, noise(rng));
      record.push_back(o);
    }
    std::vector<StfOutput> reversed = record;
    for (auto& o : reversed) o.query_time = -o.query_time;

    const auto smoothed = smoothed_pass(record, cfg);
    const auto smoothed_rev = smoothed_pass(reversed, cfg);
    // smoothed_rev is ordered along the negated axis: entry i matches
    // record entry n-1-i
    const size_t n = record.size();
    for (size_t i = 0; i < n; ++i)
      CHECK(smoothed[i].estimate[0] ==
            doctest::Approx(smoothed_rev[n - 1 - i].estimate[0]).epsilon(1e-9));
  }

  SUBCASE("rejects records shorter than the order") {
    std::vector<StfOutput> record(1);
    record[0].query_time = 0.0;
    record[0].estimate = Eigen::VectorXd::Constant(1, 1.0);
    CHECK_THROWS_AS(smoothed_pass(record, cfg), std::invalid_argument);
  }
}

TEST_CASE("hot start seeds an anchor-line fit") {
  StfConfig cfg;
  cfg.window_count = 10;
  cfg.order = 2;
  cfg.nominal_interval = 0.1;
  cfg.min_fit_count = 3;
  ResidualSpec spec;
  spec.identity_model = true;
  BasisSpec basis;
  basis.order = 2;
  Tracker tracker(cfg, spec, basis, 2);
  tracker.seed_hot_start(
      {{0.1, Eigen::Vector2d(0.0, 0.0)}, {0.2, Eigen::Vector2d(1.0, 0.0)}});
  REQUIRE(tracker.has_fit());
  CHECK(tracker.infer_at(StfMode::Online, 0.1).estimate[0] == doctest::Approx(0.0));
  CHECK(tracker.infer_at(StfMode::Online, 0.2).estimate[0] == doctest::Approx(1.0));
  CHECK(tracker.infer_at(StfMode::Online, 0.2).estimate[1] == doctest::Approx(0.0));
}

TEST_CASE("config validation") {
  StfConfig cfg;
  cfg.window_count = 1;
  cfg.order = 2;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.window_count = 10;
  cfg.horizon_steps = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
