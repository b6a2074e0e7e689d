#include "cmpmort/assess.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "cmpmort/errors.hpp"
#include "cmpmort/math_utils.hpp"

namespace cmpmort {

namespace {

constexpr double kPoorFitCut = 3.84;  // 95th percentile of chi^2_1

}  // namespace

ResidualSurface pearson_surface(const MortalityDataset& ds,
                                const std::vector<const ModelParams*>& posterior,
                                Likelihood lik, ResidualVariance mode) {
  if (posterior.empty()) throw DataError("pearson_surface: empty posterior");
  const int A = ds.n_ages();
  const int T = ds.n_years();

  // posterior means of mu_xt and of the dispersion parameter
  Eigen::MatrixXd mu_hat = Eigen::MatrixXd::Zero(A, T);
  double disp_hat = 0.0;
  for (const ModelParams* p : posterior) {
    for (int x = 0; x < A; ++x) {
      for (int t = 0; t < T; ++t) mu_hat(x, t) += std::exp(log_mu(*p, x, t));
    }
    disp_hat += p->dispersion.value;
  }
  mu_hat /= static_cast<double>(posterior.size());
  disp_hat /= static_cast<double>(posterior.size());

  const Dispersion disp{posterior.front()->dispersion.kind, disp_hat};

  ResidualSurface s;
  s.r2.resize(A, T);
  s.df = (A - 1) * (T - 2);
  int poor = 0;
  for (int x = 0; x < A; ++x) {
    for (int t = 0; t < T; ++t) {
      const double em = ds.exposures(x, t) * mu_hat(x, t);
      const double var = mode == ResidualVariance::Poisson
                             ? em
                             : count_variance(ds.exposures(x, t), mu_hat(x, t), lik, disp);
      if (!(var > 0.0)) throw NumericError("pearson_surface: non-positive variance");
      const double d = static_cast<double>(ds.deaths(x, t)) - em;
      s.r2(x, t) = d * d / var;
      s.total += s.r2(x, t);
      if (s.r2(x, t) > kPoorFitCut) ++poor;
    }
  }
  s.poor_fit_fraction = static_cast<double>(poor) / (A * T);
  return s;
}

ChiSquareVerdict chi_square_verdict(const ResidualSurface& surface) {
  ChiSquareVerdict v;
  v.total = surface.total;
  v.df = surface.df;
  v.critical = chi_squared_quantile(0.95, surface.df);
  v.pass = surface.total <= v.critical;
  v.poor_fit_fraction = surface.poor_fit_fraction;
  std::ostringstream line;
  line.precision(2);
  line << std::fixed;
  line << "chi-squared goodness of fit: deviance " << v.total << " vs critical "
       << v.critical << " (df " << v.df << ") -> " << (v.pass ? "PASS" : "FAIL")
       << "; poor-fit cells " << 100.0 * v.poor_fit_fraction << "% (yardstick 5%)";
  v.line = line.str();
  return v;
}

ScoreReport predictive_scores(const MortalityDataset& holdout, const ForecastResult& pred,
                              std::uint64_t permutation_seed) {
  const int A = holdout.n_ages();
  const int Y = std::min(holdout.n_years(), pred.n_years());
  if (pred.n_ages() != A) throw DataError("predictive_scores: age axes differ");
  if (Y < 1 || holdout.years.front() != pred.year_labels.front()) {
    throw DataError("predictive_scores: holdout years not aligned with predictions");
  }

  ScoreReport rep;
  rep.logs_cells.resize(A, Y);
  rep.crps_cells.resize(A, Y);
  rep.dss_cells.resize(A, Y);

  double logs_sum = 0.0, crps_sum = 0.0, dss_sum = 0.0;
  int dss_cells_counted = 0;
  for (int x = 0; x < A; ++x) {
    for (int y = 0; y < Y; ++y) {
      const auto& draws = pred.counts[x][y];
      const std::size_t K = draws.size();
      if (K < 1000) throw DataError("predictive_scores: needs >= 1000 draws per cell");
      const double obs = static_cast<double>(holdout.deaths(x, y));

      // CRPS from the sample and an independently permuted copy
      double e1 = 0.0;
      for (long v : draws) e1 += std::fabs(static_cast<double>(v) - obs);
      e1 /= static_cast<double>(K);
      std::vector<long> perm(draws);
      RngStream rng = RngStream::derive(permutation_seed, static_cast<std::uint64_t>(x) * 131071 + y);
      for (std::size_t i = K - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform() * (i + 1));
        std::swap(perm[i], perm[std::min(j, i)]);
      }
      double e2 = 0.0;
      for (std::size_t i = 0; i < K; ++i) {
        e2 += std::fabs(static_cast<double>(draws[i]) - static_cast<double>(perm[i]));
      }
      e2 /= static_cast<double>(K);
      const double crps = e1 - 0.5 * e2;

      // DSS from the first two moments
      double m = 0.0;
      for (long v : draws) m += static_cast<double>(v);
      m /= static_cast<double>(K);
      double s2 = 0.0;
      for (long v : draws) s2 += (v - m) * (v - m);
      s2 /= static_cast<double>(K - 1);
      double dss;
      if (s2 > 0.0) {
        dss = (obs - m) * (obs - m) / s2 + std::log(s2);
        dss_sum += dss;
        ++dss_cells_counted;
      } else {
        dss = std::numeric_limits<double>::infinity();
        ++rep.degenerate_cells;
      }

      // LOGS from the smoothed empirical PMF on the support window
      long lo = draws[0], hi = draws[0];
      std::map<long, long> freq;
      for (long v : draws) {
        ++freq[v];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      const long obs_count = static_cast<long>(obs);
      lo = std::min(lo, obs_count);
      hi = std::max(hi, obs_count);
      const double window = static_cast<double>(hi - lo + 1);
      const double kd = static_cast<double>(K);
      const auto it = freq.find(obs_count);
      const double count = it == freq.end() ? 0.0 : static_cast<double>(it->second);
      const double phat = (count + 1.0 / kd) / (kd + window / kd);
      const double logs = -std::log(phat);

      rep.crps_cells(x, y) = crps;
      rep.dss_cells(x, y) = dss;
      rep.logs_cells(x, y) = logs;
      crps_sum += crps;
      logs_sum += logs;
    }
  }
  const double cells = static_cast<double>(A * Y);
  rep.crps = crps_sum / cells;
  rep.logs = logs_sum / cells;
  rep.dss = dss_cells_counted > 0 ? dss_sum / dss_cells_counted
                                  : std::numeric_limits<double>::infinity();
  return rep;
}

}  // namespace cmpmort
