#ifndef CMPMORT_COMMANDS_HPP
#define CMPMORT_COMMANDS_HPP

#include <string>
#include <vector>

#include "cmpmort/config.hpp"

namespace cmpmort {

inline constexpr const char* kToolVersion = "0.1.0";

// Each command writes its outputs under the run directory and throws one of
// the error types on failure; the CLI maps those to exit codes.

// Runs the chains, writes chain_<i>.csv, acceptance.csv, convergence.csv and
// manifest.json under cfg.output_dir.
void cmd_fit(const RunConfig& cfg);

// Re-reads a fit directory, writes residuals.csv / residuals.svg / verdict.txt
// and returns the verdict line (also printed by the CLI).
std::string cmd_diagnose(const std::string& run_dir);

// Fitted + projected quantiles (forecast.csv), per-age fan charts and, when
// the dataset has a holdout, coverage.csv.
void cmd_forecast(const std::string& run_dir, int horizon, std::vector<int> fan_ages);

// Predictive scores over the holdout grid: scores.csv plus per-cell grids.
void cmd_score(const std::string& run_dir);

// One fit per prior in the grid ("flat" or "gamma:a,b"), stacked kernel
// density of the nu posterior written to sensitivity.csv.
void cmd_sensitivity(const RunConfig& cfg, const std::vector<std::string>& prior_grid);

// Writes the synthetic dataset this config describes (deaths/exposures CSVs).
void cmd_simulate(const RunConfig& cfg);

// Reload helpers shared by the post-fit commands and the tests.
struct LoadedRun {
  RunConfig config;
  MortalityDataset dataset;
  PosteriorSamples samples;
};
LoadedRun load_run(const std::string& run_dir);

std::vector<std::string> default_sensitivity_grid();

}  // namespace cmpmort

#endif
