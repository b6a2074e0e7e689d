#include "cmpmort/forecast.hpp"

#include <algorithm>
#include <cmath>

#include "cmpmort/errors.hpp"
#include "cmpmort/math_utils.hpp"

namespace cmpmort {

namespace {

void finalize_quantiles(ForecastResult& r) {
  const int A = r.n_ages();
  const int Y = r.n_years();
  r.rate_q025.resize(A, Y);
  r.rate_q50.resize(A, Y);
  r.rate_q975.resize(A, Y);
  std::vector<double> rates;
  for (int x = 0; x < A; ++x) {
    for (int y = 0; y < Y; ++y) {
      const auto& cs = r.counts[x][y];
      rates.resize(cs.size());
      for (std::size_t k = 0; k < cs.size(); ++k) {
        rates[k] = static_cast<double>(cs[k]) / r.exposures(x, y);
      }
      std::sort(rates.begin(), rates.end());
      r.rate_q025(x, y) = quantile_sorted(rates, 0.025);
      r.rate_q50(x, y) = quantile_sorted(rates, 0.5);
      r.rate_q975(x, y) = quantile_sorted(rates, 0.975);
    }
  }
}

}  // namespace

ForecastResult fitted_rates(const MortalityDataset& ds,
                            const std::vector<const ModelParams*>& posterior,
                            Likelihood lik, std::uint64_t seed) {
  if (posterior.empty()) throw DataError("fitted_rates: empty posterior");
  const int A = ds.n_ages();
  const int T = ds.n_years();

  ForecastResult r;
  r.year_labels = ds.years;
  r.exposures = ds.exposures;
  r.counts.assign(A, std::vector<std::vector<long>>(T));
  for (int x = 0; x < A; ++x) {
    for (int t = 0; t < T; ++t) r.counts[x][t].resize(posterior.size());
  }

  for (std::size_t s = 0; s < posterior.size(); ++s) {
    RngStream rng = RngStream::derive(seed, s);
    const ModelParams& p = *posterior[s];
    for (int x = 0; x < A; ++x) {
      for (int t = 0; t < T; ++t) {
        const double mu = std::exp(log_mu(p, x, t));
        r.counts[x][t][s] = sample_count(ds.exposures(x, t), mu, lik, p.dispersion, rng);
      }
    }
  }
  finalize_quantiles(r);
  return r;
}

ForecastResult project(const MortalityDataset& ds,
                       const std::vector<const ModelParams*>& posterior, Likelihood lik,
                       int horizon, const Eigen::MatrixXd* holdout_exposures,
                       bool locf_exposure, std::uint64_t seed) {
  if (posterior.empty()) throw DataError("project: empty posterior");
  if (horizon < 1) throw DataError("project: horizon must be >= 1");
  const int A = ds.n_ages();
  const int T = ds.n_years();

  ForecastResult r;
  for (int s = 1; s <= horizon; ++s) r.year_labels.push_back(ds.years.back() + s);
  r.exposures.resize(A, horizon);
  if (holdout_exposures) {
    if (holdout_exposures->rows() != A || holdout_exposures->cols() < horizon) {
      throw DataError("project: holdout exposures do not cover the horizon");
    }
    r.exposures = holdout_exposures->leftCols(horizon);
  } else if (locf_exposure) {
    for (int s = 0; s < horizon; ++s) r.exposures.col(s) = ds.exposures.col(T - 1);
  } else {
    throw DataError("project: holdout exposures missing and carry-forward disabled");
  }

  r.counts.assign(A, std::vector<std::vector<long>>(horizon));
  for (int x = 0; x < A; ++x) {
    for (int s = 0; s < horizon; ++s) r.counts[x][s].resize(posterior.size());
  }

  for (std::size_t si = 0; si < posterior.size(); ++si) {
    RngStream rng = RngStream::derive(seed, si);
    const ModelParams& p = *posterior[si];
    const double sd_k = std::sqrt(p.sigma2_kappa);

    // kappa path under the drift recursion, time index continuing past T
    double kappa_prev = p.kappa.back();
    std::vector<double> kappa_path(horizon);
    for (int s = 1; s <= horizon; ++s) {
      const double eta_prev = p.psi1 + p.psi2 * (T + s - 1);
      const double eta = p.psi1 + p.psi2 * (T + s);
      const double k = eta + p.rho * (kappa_prev - eta_prev) + sd_k * rng.normal();
      kappa_path[s - 1] = k;
      kappa_prev = k;
    }

    // cohort path: one new component per step (the age-0 diagonal)
    std::vector<double> gamma_ext;
    if (p.has_cohorts()) {
      gamma_ext.resize(horizon);
      const int C = p.n_cohorts();
      double g_prev = p.gamma[C - 1];
      double diff_prev = p.gamma[C - 1] - p.gamma[C - 2];
      for (int s = 0; s < horizon; ++s) {
        const double diff = p.rho_gamma * diff_prev + p.sigma_gamma * rng.normal();
        gamma_ext[s] = g_prev + diff;
        g_prev = gamma_ext[s];
        diff_prev = diff;
      }
    }

    for (int s = 1; s <= horizon; ++s) {
      for (int x = 0; x < A; ++x) {
        double lm = p.alpha[x] + p.beta[x] * kappa_path[s - 1];
        if (p.has_cohorts()) {
          const int c = (T + s - 1) - x + (A - 1);  // 0-based extended cohort index
          lm += c < p.n_cohorts() ? p.gamma[c] : gamma_ext[c - p.n_cohorts()];
        }
        const double mu = std::exp(lm);
        r.counts[x][s - 1][si] =
            sample_count(r.exposures(x, s - 1), mu, lik, p.dispersion, rng);
      }
    }
  }
  finalize_quantiles(r);
  return r;
}

CoverageTable coverage_table(const ForecastResult& result, const MortalityDataset& holdout) {
  const int A = result.n_ages();
  const int Y = result.n_years();
  if (holdout.n_ages() != A) throw DataError("coverage_table: age axes differ");
  if (holdout.years.empty() || holdout.years.front() != result.year_labels.front()) {
    throw DataError("coverage_table: holdout years not aligned with projection");
  }
  const int Yc = std::min(Y, holdout.n_years());

  CoverageTable table;
  table.per_age_coverage.assign(A, 0.0);
  double log_width_sum = 0.0;
  int covered_total = 0;
  for (int x = 0; x < A; ++x) {
    int covered = 0;
    for (int y = 0; y < Yc; ++y) {
      const double rate = static_cast<double>(holdout.deaths(x, y)) / holdout.exposures(x, y);
      if (rate >= result.rate_q025(x, y) && rate <= result.rate_q975(x, y)) ++covered;
      const double width = result.rate_q975(x, y) - result.rate_q025(x, y);
      if (width > 0.0) {
        log_width_sum += std::log(width);
      } else {
        ++table.degenerate_cells;
      }
    }
    table.per_age_coverage[x] = static_cast<double>(covered) / Yc;
    covered_total += covered;
  }
  table.cells = A * Yc;
  table.overall_coverage = static_cast<double>(covered_total) / table.cells;
  const int nondegen = table.cells - table.degenerate_cells;
  table.mean_log_width = nondegen > 0 ? log_width_sum / nondegen : 0.0;
  return table;
}

}  // namespace cmpmort
