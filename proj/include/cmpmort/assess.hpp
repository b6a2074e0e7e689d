#ifndef CMPMORT_ASSESS_HPP
#define CMPMORT_ASSESS_HPP

#include <string>
#include <vector>

#include "cmpmort/forecast.hpp"
#include "cmpmort/model.hpp"

namespace cmpmort {

struct ResidualSurface {
  Eigen::MatrixXd r2;  // squared Pearson residuals
  double total = 0.0;
  int df = 0;  // (A-1)(T-2)
  double poor_fit_fraction = 0.0;  // share of cells with r2 > 3.84
};

// Residual denominator: the fitted model's own variance, or the Poisson
// variance e*mu for replicating published deviance tables.
enum class ResidualVariance { ModelSpecific, Poisson };

// mu_hat is the posterior mean of mu_xt; dispersion enters via its posterior
// mean when the denominator is model-specific.
ResidualSurface pearson_surface(const MortalityDataset& ds,
                                const std::vector<const ModelParams*>& posterior,
                                Likelihood lik,
                                ResidualVariance mode = ResidualVariance::ModelSpecific);

struct ChiSquareVerdict {
  double total = 0.0;
  int df = 0;
  double critical = 0.0;  // 95th percentile of chi^2_df
  bool pass = false;
  double poor_fit_fraction = 0.0;
  std::string line;
};

ChiSquareVerdict chi_square_verdict(const ResidualSurface& surface);

struct ScoreReport {
  double logs = 0.0;
  double crps = 0.0;
  double dss = 0.0;
  Eigen::MatrixXd logs_cells, crps_cells, dss_cells;
  int degenerate_cells = 0;  // DSS sentinel cells excluded from the mean
};

// Proper scoring of predictive count samples against the holdout grid.
// CRPS = mean|X - y| - 0.5 mean|X - X'| with X' an independent permutation;
// DSS = (y - m)^2/s^2 + 2 log s; LOGS = -log of the smoothed empirical PMF
// (add 1/K to every integer bin of the observed support window).
ScoreReport predictive_scores(const MortalityDataset& holdout, const ForecastResult& pred,
                              std::uint64_t permutation_seed = 0x5eed);

}  // namespace cmpmort

#endif
