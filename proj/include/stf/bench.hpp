#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stf/scenarios.hpp"

namespace stf::bench {

/// Scenario parameter overrides accepted in the config file; anything left
/// unset keeps the scenario's published defaults.
struct ScenarioOverrides {
  std::optional<int> steps;
  std::optional<double> sigma_v;
  std::optional<double> truth_sigma_v;
  std::optional<double> range_noise_var;
};

struct CampaignConfig {
  int scenario = 1;
  int runs = 100;
  std::uint64_t seed = 0;
  std::vector<std::string> estimators;  // filled from the registry when empty
  StfConfig stf_config;
  ScenarioOverrides overrides;
  int threads = 1;
  bool timing = true;  // false zeroes the wall-time fields (byte-reproducible)
  std::string out_prefix;

  void validate() const;
};

/// Per-scenario defaults for the sliding-window configuration.
StfConfig default_stf_config(int scenario_id);

/// Strict JSON config parsing: unknown keys are rejected by name.
CampaignConfig load_config(const std::string& path);
CampaignConfig parse_config(const std::string& json_text);

struct EstimatorReport {
  std::string name;
  double mean_rmse = 0.0;
  double mean_time_s = 0.0;
  std::vector<int> steps;            // steps with estimates in every run
  std::vector<double> per_step_rmse;
};

struct CampaignReport {
  std::vector<EstimatorReport> rows;
};

/// Monte-Carlo campaign: independent per-run RNG streams derived from
/// (seed, run, role); the report is identical for a fixed seed at any
/// parallelism degree.
CampaignReport run_campaign(const CampaignConfig& config);

enum class ReportFormat { Csv, Json };

/// CSV: `estimator,mean_rmse,mean_time_s` plus a `<stem>_steps.csv`
/// companion with `step,estimator,rmse`. JSON mirrors both. Numbers are
/// written with 17 significant digits.
void emit_report(const CampaignReport& report, ReportFormat format,
                 const std::string& path);

CampaignReport parse_report_json(const std::string& path);

/// Truth/observation CSV export for one run of a scenario.
void export_scenario(const CampaignConfig& config, int run_index,
                     const std::string& prefix);

}  // namespace stf::bench
