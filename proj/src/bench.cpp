#include "stf/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

namespace stf::bench {

namespace {

using nlohmann::json;

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void reject_unknown_keys(const json& obj, const std::vector<std::string>& known,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw std::invalid_argument("unknown config key '" + where + key + "'");
  }
}

std::string steps_companion_path(const std::string& path) {
  const auto dot = path.rfind('.');
  if (dot == std::string::npos) return path + "_steps.csv";
  return path.substr(0, dot) + "_steps" + path.substr(dot);
}

scenarios::ScenarioRun dispatch_run(const CampaignConfig& config, int run_index) {
  switch (config.scenario) {
    case 1: {
      scenarios::Scenario1Config c;
      if (config.overrides.steps) c.steps = *config.overrides.steps;
      return scenarios::run_scenario1(c, config.stf_config, config.estimators, config.seed,
                                      run_index);
    }
    case 2: {
      scenarios::Scenario2Config c;
      if (config.overrides.steps) c.steps = *config.overrides.steps;
      if (config.overrides.sigma_v) c.sigma_v = *config.overrides.sigma_v;
      if (config.overrides.truth_sigma_v) c.truth_sigma_v = *config.overrides.truth_sigma_v;
      return scenarios::run_scenario2(c, config.stf_config, config.estimators, config.seed,
                                      run_index);
    }
    case 3: {
      scenarios::Scenario3Config c;
      if (config.overrides.steps) c.steps = *config.overrides.steps;
      if (config.overrides.range_noise_var)
        c.range_noise_var = *config.overrides.range_noise_var;
      return scenarios::run_scenario3(c, config.stf_config, config.estimators, config.seed,
                                      run_index);
    }
    default:
      throw std::invalid_argument("unknown scenario id (expected 1, 2 or 3)");
  }
}

}  // namespace

void CampaignConfig::validate() const {
  if (runs < 1) throw std::invalid_argument("runs must be >= 1");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
  if (estimators.empty()) throw std::invalid_argument("estimator list must be nonempty");
  const auto registry = scenarios::scenario_registry(scenario);
  for (const auto& name : estimators) {
    if (std::find(registry.begin(), registry.end(), name) == registry.end()) {
      std::ostringstream msg;
      msg << "unknown estimator '" << name << "' for scenario " << scenario
          << "; registry:";
      for (const auto& r : registry) msg << " " << r;
      throw std::invalid_argument(msg.str());
    }
  }
  stf_config.validate();
}

StfConfig default_stf_config(int scenario_id) {
  StfConfig cfg;
  switch (scenario_id) {
    case 1:
    case 2:
      cfg.window_count = 10;
      cfg.order = 2;
      cfg.delay_steps = 5;
      cfg.horizon_steps = 5;
      cfg.nominal_interval = 0.1;
      break;
    case 3:
      cfg.window_count = 5;
      cfg.order = 3;
      cfg.delay_steps = 0;
      cfg.horizon_steps = 1;
      cfg.nominal_interval = 1.0;
      break;
    default:
      throw std::invalid_argument("unknown scenario id (expected 1, 2 or 3)");
  }
  return cfg;
}

CampaignConfig parse_config(const std::string& json_text) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown_keys(root,
                      {"scenario", "runs", "seed", "estimators", "stf", "scenario_params",
                       "threads", "timing", "output"},
                      "");

  CampaignConfig cfg;
  if (!root.contains("scenario"))
    throw std::invalid_argument("config is missing required key 'scenario'");
  cfg.scenario = root["scenario"].get<int>();
  cfg.stf_config = default_stf_config(cfg.scenario);
  if (root.contains("runs")) cfg.runs = root["runs"].get<int>();
  if (root.contains("seed")) cfg.seed = root["seed"].get<std::uint64_t>();
  if (root.contains("threads")) cfg.threads = root["threads"].get<int>();
  if (root.contains("timing")) cfg.timing = root["timing"].get<bool>();
  if (root.contains("estimators"))
    cfg.estimators = root["estimators"].get<std::vector<std::string>>();
  if (cfg.estimators.empty()) cfg.estimators = scenarios::scenario_registry(cfg.scenario);

  if (root.contains("stf")) {
    const json& stf = root["stf"];
    reject_unknown_keys(stf,
                        {"window_count", "max_span", "order", "delay_steps",
                         "horizon_steps", "nominal_interval"},
                        "stf.");
    if (stf.contains("window_count")) cfg.stf_config.window_count = stf["window_count"];
    if (stf.contains("max_span") && !stf["max_span"].is_null())
      cfg.stf_config.max_span = stf["max_span"].get<double>();
    if (stf.contains("order")) cfg.stf_config.order = stf["order"];
    if (stf.contains("delay_steps")) cfg.stf_config.delay_steps = stf["delay_steps"];
    if (stf.contains("horizon_steps")) cfg.stf_config.horizon_steps = stf["horizon_steps"];
    if (stf.contains("nominal_interval"))
      cfg.stf_config.nominal_interval = stf["nominal_interval"];
  }
  if (root.contains("scenario_params")) {
    const json& sp = root["scenario_params"];
    reject_unknown_keys(sp, {"steps", "sigma_v", "truth_sigma_v", "R"}, "scenario_params.");
    if (sp.contains("steps")) cfg.overrides.steps = sp["steps"].get<int>();
    if (sp.contains("sigma_v")) cfg.overrides.sigma_v = sp["sigma_v"].get<double>();
    if (sp.contains("truth_sigma_v"))
      cfg.overrides.truth_sigma_v = sp["truth_sigma_v"].get<double>();
    if (sp.contains("R")) cfg.overrides.range_noise_var = sp["R"].get<double>();
  }
  if (root.contains("output")) {
    const json& o = root["output"];
    reject_unknown_keys(o, {"prefix"}, "output.");
    if (o.contains("prefix")) cfg.out_prefix = o["prefix"].get<std::string>();
  }
  cfg.validate();
  return cfg;
}

CampaignConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

CampaignReport run_campaign(const CampaignConfig& config) {
  config.validate();

  std::vector<scenarios::ScenarioRun> runs(config.runs);
  const int threads = std::min(config.threads, config.runs);
  if (threads <= 1) {
    for (int r = 0; r < config.runs; ++r) runs[r] = dispatch_run(config, r);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (int r = next.fetch_add(1); r < config.runs; r = next.fetch_add(1))
          runs[r] = dispatch_run(config, r);
      });
    for (auto& th : pool) th.join();
  }

  // ordered reduction over run index
  CampaignReport report;
  for (const auto& name : config.estimators) {
    const auto& first = runs.front().series.at(name);
    const int n_steps = static_cast<int>(first.estimates.size());

    EstimatorReport row;
    row.name = name;
    std::vector<double> sum_sq(n_steps, 0.0);
    std::vector<int> count(n_steps, 0);
    double time_sum = 0.0;
    for (const auto& run : runs) {
      const auto& series = run.series.at(name);
      const auto& truth = run.truth.at(series.truth_key);
      for (int k = 0; k < n_steps; ++k) {
        if (!series.estimates[k]) continue;
        sum_sq[k] += (*series.estimates[k] - truth[k]).squaredNorm();
        count[k] += 1;
      }
      time_sum += series.seconds;
    }
    for (int k = 0; k < n_steps; ++k) {
      if (count[k] == 0) continue;
      if (count[k] != config.runs)
        throw std::logic_error("estimator coverage differs across runs: " + name);
      row.steps.push_back(k + 1);
      row.per_step_rmse.push_back(std::sqrt(sum_sq[k] / config.runs));
    }
    if (row.per_step_rmse.empty())
      throw std::runtime_error("estimator produced no estimates: " + name);
    row.mean_rmse = 0.0;
    for (double v : row.per_step_rmse) row.mean_rmse += v;
    row.mean_rmse /= row.per_step_rmse.size();
    row.mean_time_s = config.timing ? time_sum / config.runs : 0.0;
    report.rows.push_back(std::move(row));
  }
  return report;
}

void emit_report(const CampaignReport& report, ReportFormat format,
                 const std::string& path) {
  if (format == ReportFormat::Csv) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write report file: " + path);
    out << "estimator,mean_rmse,mean_time_s\n";
    for (const auto& row : report.rows)
      out << row.name << "," << fmt17(row.mean_rmse) << "," << fmt17(row.mean_time_s)
          << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);

    const std::string steps_path = steps_companion_path(path);
    std::ofstream steps(steps_path);
    if (!steps) throw std::runtime_error("cannot write report file: " + steps_path);
    steps << "step,estimator,rmse\n";
    for (const auto& row : report.rows)
      for (size_t i = 0; i < row.steps.size(); ++i)
        steps << row.steps[i] << "," << row.name << "," << fmt17(row.per_step_rmse[i])
              << "\n";
    if (!steps) throw std::runtime_error("write failed: " + steps_path);
    return;
  }

  json root;
  root["rows"] = json::array();
  for (const auto& row : report.rows) {
    json r;
    r["estimator"] = row.name;
    r["mean_rmse"] = row.mean_rmse;
    r["mean_time_s"] = row.mean_time_s;
    r["steps"] = row.steps;
    r["rmse"] = row.per_step_rmse;
    root["rows"].push_back(std::move(r));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report file: " + path);
  out << root.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

CampaignReport parse_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open report file: " + path);
  json root = json::parse(in);
  CampaignReport report;
  for (const auto& r : root.at("rows")) {
    EstimatorReport row;
    row.name = r.at("estimator").get<std::string>();
    row.mean_rmse = r.at("mean_rmse").get<double>();
    row.mean_time_s = r.at("mean_time_s").get<double>();
    row.steps = r.at("steps").get<std::vector<int>>();
    row.per_step_rmse = r.at("rmse").get<std::vector<double>>();
    report.rows.push_back(std::move(row));
  }
  return report;
}

void export_scenario(const CampaignConfig& config, int run_index,
                     const std::string& prefix) {
  RngStream truth_rng(config.seed, run_index, rng_role::kTruth);
  RngStream noise_rng(config.seed, run_index, rng_role::kNoise);

  std::vector<Eigen::VectorXd> truth;
  std::vector<std::vector<std::pair<int, Eigen::VectorXd>>> obs_rows;  // per step
  std::vector<double> times;

  switch (config.scenario) {
    case 1: {
      scenarios::Scenario1Config c;
      if (config.overrides.steps) c.steps = *config.overrides.steps;
      truth = scenarios::scenario1_truth(c, truth_rng);
      for (int k = 1; k <= c.steps; ++k) {
        times.push_back(k * c.dt);
        const Eigen::Vector2d y = scenarios::scenario1_observe(c, truth[k], noise_rng);
        obs_rows.push_back({{0, y}});
      }
      break;
    }
    case 2: {
      scenarios::Scenario2Config c;
      if (config.overrides.steps) c.steps = *config.overrides.steps;
      if (config.overrides.sigma_v) c.sigma_v = *config.overrides.sigma_v;
      if (config.overrides.truth_sigma_v) c.truth_sigma_v = *config.overrides.truth_sigma_v;
      truth = scenarios::scenario2_truth(c);
      for (int k = 1; k <= c.steps; ++k) {
        times.push_back(k * c.dt);
        const Eigen::VectorXd y = scenarios::scenario2_observe(c, truth[k], noise_rng);
        std::vector<std::pair<int, Eigen::VectorXd>> rows;
        for (int s = 0; s < 4; ++s)
          rows.push_back({s + 1, Eigen::VectorXd::Constant(1, y[s])});
        obs_rows.push_back(std::move(rows));
      }
      break;
    }
    case 3: {
      scenarios::Scenario3Config c;
      if (config.overrides.steps) c.steps = *config.overrides.steps;
      if (config.overrides.range_noise_var)
        c.range_noise_var = *config.overrides.range_noise_var;
      truth = scenarios::scenario3_truth(c);
      for (int k = 1; k <= c.steps; ++k) {
        times.push_back(static_cast<double>(k));
        const double y = scenarios::scenario3_observe(c, truth[k], noise_rng);
        obs_rows.push_back({{0, Eigen::VectorXd::Constant(1, y)}});
      }
      break;
    }
    default:
      throw std::invalid_argument("unknown scenario id (expected 1, 2 or 3)");
  }

  const int state_dim = static_cast<int>(truth.front().size());
  std::ofstream tf(prefix + "_truth.csv");
  if (!tf) throw std::runtime_error("cannot write " + prefix + "_truth.csv");
  tf << "step,time,sensor_id";
  for (int d = 0; d < state_dim; ++d) tf << ",dim" << d;
  tf << "\n";
  for (size_t k = 0; k < times.size(); ++k) {
    tf << (k + 1) << "," << fmt17(times[k]) << ",-1";
    for (int d = 0; d < state_dim; ++d) tf << "," << fmt17(truth[k + 1][d]);
    tf << "\n";
  }

  int obs_dim = 0;
  for (const auto& rows : obs_rows)
    for (const auto& [sid, y] : rows) obs_dim = std::max<int>(obs_dim, y.size());
  std::ofstream of(prefix + "_observations.csv");
  if (!of) throw std::runtime_error("cannot write " + prefix + "_observations.csv");
  of << "step,time,sensor_id";
  for (int d = 0; d < obs_dim; ++d) of << ",dim" << d;
  of << "\n";
  for (size_t k = 0; k < times.size(); ++k)
    for (const auto& [sid, y] : obs_rows[k]) {
      of << (k + 1) << "," << fmt17(times[k]) << "," << sid;
      for (int d = 0; d < obs_dim; ++d) of << "," << (d < y.size() ? fmt17(y[d]) : "");
      of << "\n";
    }
}

}  // namespace stf::bench
