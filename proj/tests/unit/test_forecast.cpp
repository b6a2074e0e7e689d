#include <doctest.h>

#include <cmath>

#include "cmpmort/cmp.hpp"
#include "cmpmort/errors.hpp"
#include "cmpmort/forecast.hpp"
#include "cmpmort/math_utils.hpp"
#include "cmpmort/synthetic.hpp"

using namespace cmpmort;

namespace {

MortalityDataset lc_dataset(int A, int T, std::uint64_t seed, double exposure = 1e5) {
  SyntheticSpec spec;
  spec.true_params = make_default_true_params(A, T, Structure::LC, Likelihood::CMP, 0.5);
  spec.likelihood = Likelihood::CMP;
  spec.exposure = exposure;
  spec.seed = seed;
  return simulate(spec, A, T);
}

}  // namespace

TEST_SUITE("forecast") {

TEST_CASE("fitted rates from a degenerate Poisson posterior") {
  MortalityDataset ds;
  ds.ages = {0};
  ds.years = {1};
  ds.deaths = Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>::Constant(1, 1, 6000);
  ds.exposures = Eigen::MatrixXd::Constant(1, 1, 1e6);

  ModelParams p;
  p.alpha = {-5.0};
  p.beta = {1.0};
  p.kappa = {0.0};
  std::vector<ModelParams> draws(4000, p);
  std::vector<const ModelParams*> pool;
  for (const auto& d : draws) pool.push_back(&d);

  const ForecastResult r = fitted_rates(ds, pool, Likelihood::Poisson, 1);
  double sum = 0.0;
  for (long c : r.counts[0][0]) sum += static_cast<double>(c) / 1e6;
  const double mean = sum / 4000.0;
  CHECK(std::fabs(mean - std::exp(-5.0)) / std::exp(-5.0) < 0.01);
}

TEST_CASE("CMP at nu = 1 spreads like Poisson") {
  const auto ds = lc_dataset(3, 5, 88);
  ModelParams p = make_default_true_params(3, 5, Structure::LC, Likelihood::CMP, 1.0);
  std::vector<ModelParams> store(3000, p);
  std::vector<const ModelParams*> pool_cmp;
  for (const auto& d : store) pool_cmp.push_back(&d);
  const ForecastResult rc = fitted_rates(ds, pool_cmp, Likelihood::CMP, 5);

  ModelParams q = p;
  q.dispersion = Dispersion::none();
  std::vector<ModelParams> store_p(3000, q);
  std::vector<const ModelParams*> pool_p;
  for (const auto& d : store_p) pool_p.push_back(&d);
  const ForecastResult rp = fitted_rates(ds, pool_p, Likelihood::Poisson, 5);

  const auto var_of_cell = [](const ForecastResult& r, int x, int t) {
    std::vector<double> v;
    for (long c : r.counts[x][t]) v.push_back(static_cast<double>(c));
    return variance_of(v);
  };
  const double ratio = var_of_cell(rc, 1, 2) / var_of_cell(rp, 1, 2);
  CHECK(ratio > 0.85);
  CHECK(ratio < 1.18);
}

TEST_CASE("quantiles are monotone for every cell") {
  const auto ds = lc_dataset(5, 8, 13);
  ModelParams p = make_default_true_params(5, 8, Structure::LC, Likelihood::CMP, 0.5);
  std::vector<ModelParams> store(1200, p);
  std::vector<const ModelParams*> pool;
  for (const auto& d : store) pool.push_back(&d);
  const ForecastResult r = fitted_rates(ds, pool, Likelihood::CMP, 3);
  for (int x = 0; x < 5; ++x) {
    for (int t = 0; t < 8; ++t) {
      CHECK(r.rate_q025(x, t) <= r.rate_q50(x, t));
      CHECK(r.rate_q50(x, t) <= r.rate_q975(x, t));
    }
  }
}

TEST_CASE("degenerate rho = 1, sigma = 0 draw continues the drift exactly") {
  const int A = 3, T = 10;
  const auto ds = lc_dataset(A, T, 19, 1e7);
  ModelParams p = make_default_true_params(A, T, Structure::LC, Likelihood::CMP, 1.0);
  p.rho = 1.0;
  p.sigma2_kappa = 0.0;
  p.psi1 = 0.0;
  p.psi2 = -0.3;  // matches the built-in kappa slope
  std::vector<ModelParams> store(2500, p);
  std::vector<const ModelParams*> pool;
  for (const auto& d : store) pool.push_back(&d);

  const ForecastResult r = project(ds, pool, Likelihood::CMP, 4, nullptr, true, 77);
  for (int s = 1; s <= 4; ++s) {
    // with zero innovation the kappa path is the exact linear continuation
    const double kappa = p.kappa[T - 1] + p.psi2 * s;
    const double want = std::exp(p.alpha[1] + p.beta[1] * kappa);
    CHECK(r.rate_q50(1, s - 1) == doctest::Approx(want).epsilon(0.02));
  }
}

TEST_CASE("composition matches direct simulation at a degenerate posterior") {
  const int A = 1, T = 6;
  MortalityDataset ds;
  ds.ages = {0};
  for (int t = 0; t < T; ++t) ds.years.push_back(t + 1);
  ds.deaths.setConstant(1, T, 100);
  ds.exposures.setConstant(1, T, 1e4);

  ModelParams p;
  p.alpha = {-4.0};
  p.beta = {1.0};
  p.kappa = {0.25, 0.15, 0.05, -0.05, -0.15, -0.25};
  p.rho = 0.7;
  p.sigma2_kappa = 0.004;
  p.psi1 = 0.3;
  p.psi2 = -0.1;
  p.dispersion = Dispersion::nu(0.5);

  const int n = 100000;
  std::vector<ModelParams> store(n, p);
  std::vector<const ModelParams*> pool;
  for (const auto& d : store) pool.push_back(&d);
  const ForecastResult r = project(ds, pool, Likelihood::CMP, 1, nullptr, true, 31);

  // direct generative draw, written out independently of project()
  RngStream rng(97531);
  std::vector<double> direct(n);
  for (int i = 0; i < n; ++i) {
    const double eta_T = p.psi1 + p.psi2 * T;
    const double eta_next = p.psi1 + p.psi2 * (T + 1);
    const double kappa =
        eta_next + p.rho * (p.kappa[T - 1] - eta_T) + std::sqrt(p.sigma2_kappa) * rng.normal();
    const double em = 1e4 * std::exp(p.alpha[0] + p.beta[0] * kappa);
    direct[i] = static_cast<double>(
        cmp::sample({cmp::mean_matched_lambda(em, 0.5), 0.5}, rng));
  }

  std::vector<double> projected;
  for (long c : r.counts[0][0]) projected.push_back(static_cast<double>(c));

  // KS distance between the two integer samples
  std::sort(direct.begin(), direct.end());
  const long lo = static_cast<long>(direct.front());
  const long hi = static_cast<long>(direct.back());
  std::vector<double> grid, cdf;
  for (long v = lo; v <= hi; v += std::max<long>(1, (hi - lo) / 400)) {
    grid.push_back(static_cast<double>(v));
    const auto it = std::upper_bound(direct.begin(), direct.end(), static_cast<double>(v));
    cdf.push_back(static_cast<double>(it - direct.begin()) / n);
  }
  CHECK(ks_distance(projected, grid, cdf) < 0.02);
}

TEST_CASE("rate times exposure reproduces the integer count") {
  const auto ds = lc_dataset(3, 5, 41, 12345.0);
  ModelParams p = make_default_true_params(3, 5, Structure::LC, Likelihood::CMP, 0.5);
  std::vector<ModelParams> store(1100, p);
  std::vector<const ModelParams*> pool;
  for (const auto& d : store) pool.push_back(&d);
  const ForecastResult r = fitted_rates(ds, pool, Likelihood::CMP, 3);
  for (int x = 0; x < 3; ++x) {
    for (int t = 0; t < 5; ++t) {
      for (long c : r.counts[x][t]) {
        const double rate = static_cast<double>(c) / r.exposures(x, t);
        CHECK(rate * r.exposures(x, t) == doctest::Approx(static_cast<double>(c)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("interval widths grow with horizon when innovations accumulate") {
  // large exposure so the kappa innovation term dominates the count noise
  SyntheticSpec spec;
  spec.true_params = make_default_true_params(10, 15, Structure::LC, Likelihood::Poisson, 0);
  spec.likelihood = Likelihood::Poisson;
  spec.exposure = 1e7;
  spec.seed = 73;
  const MortalityDataset ds = simulate(spec, 10, 15);

  ModelParams p = spec.true_params;
  p.rho = 0.9;
  p.sigma2_kappa = 0.04;
  p.psi2 = -0.3;
  std::vector<ModelParams> store(4000, p);
  std::vector<const ModelParams*> pool;
  for (const auto& d : store) pool.push_back(&d);
  const ForecastResult r = project(ds, pool, Likelihood::Poisson, 8, nullptr, true, 7);

  int growing_ages = 0;
  for (int x = 0; x < 10; ++x) {
    const double w_first = r.rate_q975(x, 0) - r.rate_q025(x, 0);
    const double w_last = r.rate_q975(x, 7) - r.rate_q025(x, 7);
    if (w_last >= w_first) ++growing_ages;
  }
  CHECK(growing_ages >= 10);  // >= 95% of the 10 ages
}

TEST_CASE("coverage table endpoints") {
  const auto ds = lc_dataset(4, 6, 61);
  ModelParams p = make_default_true_params(4, 6, Structure::LC, Likelihood::CMP, 0.5);
  std::vector<ModelParams> store(1500, p);
  std::vector<const ModelParams*> pool;
  for (const auto& d : store) pool.push_back(&d);
  ForecastResult r = project(ds, pool, Likelihood::CMP, 2, nullptr, true, 3);

  MortalityDataset hold;
  hold.ages = ds.ages;
  hold.years = {ds.years.back() + 1, ds.years.back() + 2};
  hold.exposures = r.exposures;
  hold.deaths.resize(4, 2);
  for (int x = 0; x < 4; ++x) {
    for (int y = 0; y < 2; ++y) {
      hold.deaths(x, y) =
          static_cast<long>(std::lround(r.rate_q50(x, y) * r.exposures(x, y)));
    }
  }
  const CoverageTable at_median = coverage_table(r, hold);
  CHECK(at_median.overall_coverage == doctest::Approx(1.0));

  for (int x = 0; x < 4; ++x) {
    for (int y = 0; y < 2; ++y) hold.deaths(x, y) = 10 * ds.deaths(x, 0) + 100000;
  }
  const CoverageTable far_out = coverage_table(r, hold);
  CHECK(far_out.overall_coverage == doctest::Approx(0.0));
}

TEST_CASE("missing exposures are an error unless carry-forward is enabled") {
  const auto ds = lc_dataset(3, 5, 21);
  ModelParams p = make_default_true_params(3, 5, Structure::LC, Likelihood::CMP, 0.5);
  std::vector<ModelParams> store(1000, p);
  std::vector<const ModelParams*> pool;
  for (const auto& d : store) pool.push_back(&d);
  CHECK_THROWS_AS(project(ds, pool, Likelihood::CMP, 2, nullptr, false, 1), DataError);
  CHECK_NOTHROW(project(ds, pool, Likelihood::CMP, 2, nullptr, true, 1));
}

}  // TEST_SUITE
