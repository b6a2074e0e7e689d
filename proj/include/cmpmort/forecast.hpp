#ifndef CMPMORT_FORECAST_HPP
#define CMPMORT_FORECAST_HPP

#include <vector>

#include "cmpmort/mcmc.hpp"
#include "cmpmort/model.hpp"

namespace cmpmort {

// Predictive death-count samples by age and year, with crude-rate quantiles.
// counts[x][y] holds one draw per posterior draw; rates are counts divided by
// the matching exposure, so every rate sample times exposure is an integer.
struct ForecastResult {
  std::vector<int> year_labels;
  Eigen::MatrixXd exposures;  // A x n_years
  std::vector<std::vector<std::vector<long>>> counts;
  Eigen::MatrixXd rate_q025, rate_q50, rate_q975;

  int n_ages() const { return static_cast<int>(counts.size()); }
  int n_years() const { return static_cast<int>(year_labels.size()); }
};

// Posterior-predictive fitted counts over the training grid: one draw of
// D ~ likelihood(e_xt mu_xt) per stored posterior draw per cell.
ForecastResult fitted_rates(const MortalityDataset& ds,
                            const std::vector<const ModelParams*>& posterior,
                            Likelihood lik, std::uint64_t seed);

// Recursive h-year-ahead projection: per posterior draw, kappa is propagated
// through its AR(1)-with-drift recursion (time index continuing T+1, T+2, ...),
// cohort effects through their ARIMA(1,1,0) recursion, and a count is drawn
// from the likelihood at the implied rate.  Holdout exposures must cover
// T+1..T+h unless locf_exposure permits carrying the last observed column
// forward.
ForecastResult project(const MortalityDataset& ds,
                       const std::vector<const ModelParams*>& posterior, Likelihood lik,
                       int horizon, const Eigen::MatrixXd* holdout_exposures,
                       bool locf_exposure, std::uint64_t seed);

struct CoverageTable {
  std::vector<double> per_age_coverage;
  double overall_coverage = 0.0;
  double mean_log_width = 0.0;  // mean log(q975 - q025) over non-degenerate cells
  int degenerate_cells = 0;
  int cells = 0;
};

// Fraction of holdout crude rates inside the 95% band, per age and overall.
CoverageTable coverage_table(const ForecastResult& result, const MortalityDataset& holdout);

}  // namespace cmpmort

#endif
