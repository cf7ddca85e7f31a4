#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "stf/bench.hpp"

namespace {

struct FitArgs {
  std::string obs_path;
  std::string out_path;
  int window = 10;
  int order = 2;
  std::string mode = "online";
  int horizon = 5;
  int delay = 5;
  double interval = 0.0;  // 0 -> inferred from the median sample spacing
};

std::vector<stf::Observation> load_observations(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open observation file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty observation file");

  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  int time_col = -1, sensor_col = -1, first_dim = -1;
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "time") time_col = static_cast<int>(i);
    if (header[i] == "sensor_id") sensor_col = static_cast<int>(i);
    if (header[i].rfind("dim", 0) == 0 && first_dim < 0) first_dim = static_cast<int>(i);
  }
  if (time_col < 0 || first_dim < 0)
    throw std::runtime_error("observation CSV needs `time` and `dim0..` columns");

  std::vector<stf::Observation> obs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    stf::Observation o;
    o.time = std::stod(cells.at(time_col));
    if (sensor_col >= 0) o.sensor_id = std::stoi(cells.at(sensor_col));
    std::vector<double> dims;
    for (size_t i = first_dim; i < cells.size(); ++i)
      if (!cells[i].empty()) dims.push_back(std::stod(cells[i]));
    o.value = Eigen::Map<Eigen::VectorXd>(dims.data(), dims.size());
    obs.push_back(std::move(o));
  }
  if (obs.empty()) throw std::runtime_error("observation file has no data rows");
  return obs;
}

double infer_interval(const std::vector<stf::Observation>& obs) {
  std::vector<double> gaps;
  for (size_t i = 1; i < obs.size(); ++i) {
    const double g = obs[i].time - obs[i - 1].time;
    if (g > 0) gaps.push_back(g);
  }
  if (gaps.empty()) throw std::runtime_error("cannot infer sampling interval");
  std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
  return gaps[gaps.size() / 2];
}

int run_fit(const FitArgs& args) {
  auto obs = load_observations(args.obs_path);
  std::sort(obs.begin(), obs.end(),
            [](const auto& a, const auto& b) { return a.time < b.time; });

  stf::StfConfig cfg;
  cfg.window_count = args.window;
  cfg.order = args.order;
  cfg.delay_steps = args.delay;
  cfg.horizon_steps = args.horizon;
  cfg.nominal_interval = args.interval > 0 ? args.interval : infer_interval(obs);

  stf::ResidualSpec spec;
  spec.identity_model = true;
  stf::BasisSpec basis;
  basis.kind = stf::BasisKind::Monomial;
  basis.order = args.order;
  const int dims = static_cast<int>(obs.front().value.size());
  stf::Tracker tracker(cfg, spec, basis, dims);

  std::vector<stf::StfOutput> outputs;
  std::vector<stf::StfOutput> delayed;
  for (const auto& o : obs) {
    tracker.push_observation(o);
    if (!tracker.has_fit()) continue;
    if (args.mode == "online") {
      outputs.push_back(tracker.infer_at(stf::StfMode::Online));
    } else if (args.mode == "forecast") {
      outputs.push_back(tracker.infer_at(stf::StfMode::Forecast));
    } else {  // delayed / smoothed share the forward delayed pass
      delayed.push_back(tracker.infer_at(stf::StfMode::Delayed));
    }
  }
  if (args.mode == "delayed") {
    outputs = delayed;
  } else if (args.mode == "smoothed") {
    outputs = stf::smoothed_pass(delayed, cfg);
  }

  std::ofstream out(args.out_path);
  if (!out) throw std::runtime_error("cannot write " + args.out_path);
  out << "time";
  for (int d = 0; d < dims; ++d) out << ",dim" << d;
  out << "\n";
  char buf[64];
  for (const auto& o : outputs) {
    std::snprintf(buf, sizeof(buf), "%.17g", o.query_time);
    out << buf;
    for (int d = 0; d < dims; ++d) {
      std::snprintf(buf, sizeof(buf), "%.17g", o.estimate[d]);
      out << "," << buf;
    }
    out << "\n";
  }
  std::cout << "wrote " << outputs.size() << " estimates to " << args.out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continuous-time trajectory fitting for joint smoothing, tracking and "
               "forecasting, with classical Bayesian baselines"};
  app.require_subcommand(1);

  // --- run ---
  auto* run_cmd = app.add_subcommand("run", "Run a Monte-Carlo benchmark campaign");
  std::string config_path;
  std::string out_prefix_flag;
  int threads_flag = 0;
  run_cmd->add_option("--config", config_path, "Campaign config JSON")->required();
  run_cmd->add_option("--out", out_prefix_flag, "Output prefix (overrides config)");
  run_cmd->add_option("--threads", threads_flag, "Worker threads (overrides config)");

  // --- fit ---
  auto* fit_cmd = app.add_subcommand("fit", "Fit a trajectory to an observation CSV");
  FitArgs fit_args;
  fit_cmd->add_option("--obs", fit_args.obs_path, "Input CSV: time,sensor_id,dim0..")
      ->required();
  fit_cmd->add_option("--window", fit_args.window, "Sliding window sample count");
  fit_cmd->add_option("--order", fit_args.order, "Basis order (terms)");
  fit_cmd->add_option("--mode", fit_args.mode, "online|delayed|smoothed|forecast")
      ->check(CLI::IsMember({"online", "delayed", "smoothed", "forecast"}));
  fit_cmd->add_option("--horizon", fit_args.horizon, "Forecast horizon, steps");
  fit_cmd->add_option("--delay", fit_args.delay, "Delayed-estimate lag, steps");
  fit_cmd->add_option("--interval", fit_args.interval,
                      "Nominal sampling interval (default: inferred)");
  fit_cmd->add_option("--out", fit_args.out_path, "Output estimate CSV")->required();

  // --- scenarios export ---
  auto* scen_cmd = app.add_subcommand("scenarios", "Scenario utilities");
  auto* export_cmd =
      scen_cmd->add_subcommand("export", "Export truth and observation CSV for one run");
  int scenario_id = 1;
  std::uint64_t seed = 0;
  int run_index = 0;
  std::string export_prefix = "scenario";
  export_cmd->add_option("--id", scenario_id, "Scenario id (1, 2, 3)")->required();
  export_cmd->add_option("--seed", seed, "Campaign seed");
  export_cmd->add_option("--run", run_index, "Run index within the campaign");
  export_cmd->add_option("--out-prefix", export_prefix, "Output file prefix");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) {
      stf::bench::CampaignConfig cfg = stf::bench::load_config(config_path);
      if (!out_prefix_flag.empty()) cfg.out_prefix = out_prefix_flag;
      if (threads_flag > 0) cfg.threads = threads_flag;
      if (cfg.out_prefix.empty()) cfg.out_prefix = "campaign";
      const auto report = stf::bench::run_campaign(cfg);
      stf::bench::emit_report(report, stf::bench::ReportFormat::Csv,
                              cfg.out_prefix + ".csv");
      stf::bench::emit_report(report, stf::bench::ReportFormat::Json,
                              cfg.out_prefix + ".json");
      for (const auto& row : report.rows)
        std::cout << row.name << ": mean RMSE " << row.mean_rmse << ", mean time "
                  << row.mean_time_s << " s\n";
      std::cout << "wrote " << cfg.out_prefix << ".csv, " << cfg.out_prefix
                << "_steps.csv, " << cfg.out_prefix << ".json\n";
      return 0;
    }
    if (*fit_cmd) return run_fit(fit_args);
    if (*export_cmd) {
      stf::bench::CampaignConfig cfg;
      cfg.scenario = scenario_id;
      cfg.seed = seed;
      cfg.estimators = stf::scenarios::scenario_registry(scenario_id);
      cfg.stf_config = stf::bench::default_stf_config(scenario_id);
      stf::bench::export_scenario(cfg, run_index, export_prefix);
      std::cout << "wrote " << export_prefix << "_truth.csv and " << export_prefix
                << "_observations.csv\n";
      return 0;
    }
    std::cerr << "no subcommand selected\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
