#include <doctest.h>

#include <cmath>

#include "cmpmort/assess.hpp"
#include "cmpmort/cmp.hpp"
#include "cmpmort/errors.hpp"
#include "cmpmort/math_utils.hpp"
#include "cmpmort/synthetic.hpp"
#include "oracles.hpp"

using namespace cmpmort;

namespace {

// forecast-shaped container holding externally supplied draws for one cell
ForecastResult single_cell_prediction(std::vector<long> draws, int year, double exposure) {
  ForecastResult r;
  r.year_labels = {year};
  r.exposures = Eigen::MatrixXd::Constant(1, 1, exposure);
  r.counts = {{std::move(draws)}};
  r.rate_q025 = r.rate_q50 = r.rate_q975 = Eigen::MatrixXd::Zero(1, 1);
  return r;
}

MortalityDataset single_cell_holdout(long death, int year, double exposure) {
  MortalityDataset ds;
  ds.ages = {0};
  ds.years = {year};
  ds.deaths = Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic>::Constant(1, 1, death);
  ds.exposures = Eigen::MatrixXd::Constant(1, 1, exposure);
  return ds;
}

}  // namespace

TEST_SUITE("assess") {

TEST_CASE("pearson surface is zero at a perfect fit") {
  const int A = 4, T = 6;
  ModelParams truth = make_default_true_params(A, T, Structure::LC, Likelihood::Poisson, 0);
  MortalityDataset ds;
  ds.deaths.resize(A, T);
  ds.exposures.resize(A, T);
  for (int x = 0; x < A; ++x) {
    ds.ages.push_back(x);
    for (int t = 0; t < T; ++t) {
      // exposures tuned cell-wise so e mu is an integer death count
      const double mu = std::exp(log_mu(truth, x, t));
      ds.exposures(x, t) = 500.0 / mu;
      ds.deaths(x, t) = 500;
    }
  }
  for (int t = 0; t < T; ++t) ds.years.push_back(t + 1);

  const std::vector<const ModelParams*> posterior{&truth};
  const ResidualSurface s = pearson_surface(ds, posterior, Likelihood::Poisson);
  CHECK(s.total == doctest::Approx(0.0));
  CHECK(s.poor_fit_fraction == 0.0);
  CHECK(s.df == (A - 1) * (T - 2));
}

TEST_CASE("the published degrees of freedom and critical value") {
  // A=100, T=42 gives df 3960 and a 95th percentile of 4107.51
  CHECK((100 - 1) * (42 - 2) == 3960);
  CHECK(chi_squared_quantile(0.95, 3960) == doctest::Approx(4107.51).epsilon(2e-4));
}

TEST_CASE("chi-square verdict lines") {
  ResidualSurface s;
  s.df = 3960;
  s.total = 16709.85;
  s.poor_fit_fraction = 0.2686;
  auto v = chi_square_verdict(s);
  CHECK_FALSE(v.pass);

  s.total = 3850.75;
  s.poor_fit_fraction = 0.0433;
  v = chi_square_verdict(s);
  CHECK(v.pass);
  CHECK(v.line.find("4.33%") != std::string::npos);

  s.total = 0.0;
  s.poor_fit_fraction = 0.0;
  CHECK(chi_square_verdict(s).pass);
}

TEST_CASE("Poisson data at true parameters has deviance near df") {
  // grid sized so A*T/df is close to 1, as in the published setting
  int ok = 0;
  for (int rep = 0; rep < 20; ++rep) {
    SyntheticSpec spec;
    spec.true_params =
        make_default_true_params(100, 42, Structure::LC, Likelihood::Poisson, 0);
    spec.likelihood = Likelihood::Poisson;
    spec.seed = 900 + rep;
    const MortalityDataset ds = simulate(spec, 100, 42);
    const std::vector<const ModelParams*> posterior{&spec.true_params};
    const ResidualSurface s = pearson_surface(ds, posterior, Likelihood::Poisson);
    const double ratio = s.total / s.df;
    if (ratio > 0.9 && ratio < 1.1) ++ok;
  }
  CHECK(ok >= 15);
}

TEST_CASE("CRPS basics") {
  SUBCASE("all draws equal to the observation") {
    const auto pred = single_cell_prediction(std::vector<long>(2000, 7), 1, 1.0);
    const auto rep = predictive_scores(single_cell_holdout(7, 1, 1.0), pred);
    CHECK(rep.crps == doctest::Approx(0.0));
    CHECK(rep.degenerate_cells == 1);  // zero predictive sd flags the DSS cell
  }

  SUBCASE("empirical CRPS matches the discrete-sum oracle for Poisson draws") {
    RngStream rng(4242);
    const int K = 400000;
    std::vector<long> draws(K);
    for (int i = 0; i < K; ++i) draws[i] = cmp::sample({4.0, 1.0}, rng);
    const auto pred = single_cell_prediction(std::move(draws), 1, 1.0);
    const auto rep = predictive_scores(single_cell_holdout(4, 1, 1.0), pred);

    std::vector<double> pmf(60);
    for (int j = 0; j < 60; ++j) {
      pmf[j] = std::exp(j * std::log(4.0) - 4.0 - std::lgamma(j + 1.0));
    }
    const double exact = oracles::crps_exact(pmf, 4);
    CHECK(rep.crps == doctest::Approx(exact).epsilon(0.02));
  }

  SUBCASE("CRPS is nonnegative and positive off the observation") {
    std::vector<long> draws;
    for (int i = 0; i < 600; ++i) {
      draws.push_back(3);
      draws.push_back(5);
    }
    const auto pred = single_cell_prediction(std::move(draws), 1, 1.0);
    const auto rep = predictive_scores(single_cell_holdout(4, 1, 1.0), pred);
    CHECK(rep.crps > 0.0);
  }
}

TEST_CASE("DSS reduces to 2 log s when the mean hits the observation") {
  std::vector<long> draws;
  for (int i = 0; i < 800; ++i) {
    draws.push_back(3);
    draws.push_back(5);
  }
  const auto pred = single_cell_prediction(std::move(draws), 1, 1.0);
  const auto rep = predictive_scores(single_cell_holdout(4, 1, 1.0), pred);
  const double s2 = 1600.0 / 1599.0;  // sample variance of the +-1 draws
  CHECK(rep.dss == doctest::Approx(std::log(s2)).epsilon(1e-10));
}

TEST_CASE("LOGS stays finite on unseen observations") {
  std::vector<long> draws(2000, 10);
  const auto pred = single_cell_prediction(std::move(draws), 1, 1.0);
  const auto rep = predictive_scores(single_cell_holdout(25, 1, 1.0), pred);
  CHECK(std::isfinite(rep.logs));
  CHECK(rep.logs > 5.0);  // deeply surprised, but not infinitely
}

TEST_CASE("scores are proper: the true predictive has lower mean CRPS") {
  RngStream rng(678);
  const int cells = 40;
  int true_wins = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const double lam = 30.0;
    ForecastResult good, shifted;
    good.year_labels = shifted.year_labels = {1};
    good.exposures = shifted.exposures = Eigen::MatrixXd::Constant(cells, 1, 1.0);
    good.counts.resize(cells);
    shifted.counts.resize(cells);
    MortalityDataset hold;
    hold.years = {1};
    hold.deaths.resize(cells, 1);
    hold.exposures = Eigen::MatrixXd::Constant(cells, 1, 1.0);
    for (int x = 0; x < cells; ++x) {
      hold.ages.push_back(x);
      hold.deaths(x, 0) = rng.poisson(lam);
      good.counts[x].resize(1);
      shifted.counts[x].resize(1);
      good.counts[x][0].resize(1500);
      shifted.counts[x][0].resize(1500);
      for (int k = 0; k < 1500; ++k) {
        good.counts[x][0][k] = rng.poisson(lam);
        shifted.counts[x][0][k] = rng.poisson(lam + 6.0);
      }
    }
    good.rate_q025 = good.rate_q50 = good.rate_q975 = Eigen::MatrixXd::Zero(cells, 1);
    shifted.rate_q025 = shifted.rate_q50 = shifted.rate_q975 =
        Eigen::MatrixXd::Zero(cells, 1);
    if (predictive_scores(hold, good).crps < predictive_scores(hold, shifted).crps) {
      ++true_wins;
    }
  }
  CHECK(true_wins >= 18);
}

TEST_CASE("residual surface is insensitive to the thinning factor") {
  SyntheticSpec spec;
  spec.true_params = make_default_true_params(6, 10, Structure::LC, Likelihood::CMP, 0.5);
  spec.likelihood = Likelihood::CMP;
  spec.seed = 5150;
  const MortalityDataset ds = simulate(spec, 6, 10);

  McmcConfig coarse;
  coarse.n_keep = 150;
  coarse.thin = 4;
  coarse.burn_in = 300;
  coarse.n_chains = 1;
  McmcConfig fine = coarse;
  fine.thin = 1;
  fine.n_keep = 600;

  const ChainOutput a = run_chain(ds, Structure::LC, Likelihood::CMP, PriorConfig{}, coarse, 3);
  const ChainOutput b = run_chain(ds, Structure::LC, Likelihood::CMP, PriorConfig{}, fine, 3);
  const auto pool = [](const ChainOutput& ch) {
    std::vector<const ModelParams*> v;
    for (const auto& d : ch.draws) v.push_back(&d);
    return v;
  };
  const double ta = pearson_surface(ds, pool(a), Likelihood::CMP).total;
  const double tb = pearson_surface(ds, pool(b), Likelihood::CMP).total;
  CHECK(std::fabs(ta - tb) / tb < 0.02);
}

TEST_CASE("Poisson-denominator mode reproduces the deviance-table convention") {
  SyntheticSpec spec;
  spec.true_params = make_default_true_params(5, 8, Structure::LC, Likelihood::NegBin, 50.0);
  spec.likelihood = Likelihood::NegBin;
  spec.seed = 606;
  const MortalityDataset ds = simulate(spec, 5, 8);
  const std::vector<const ModelParams*> posterior{&spec.true_params};

  const ResidualSurface own = pearson_surface(ds, posterior, Likelihood::NegBin,
                                              ResidualVariance::ModelSpecific);
  const ResidualSurface pois = pearson_surface(ds, posterior, Likelihood::NegBin,
                                               ResidualVariance::Poisson);
  // NB variance exceeds the Poisson variance, so the Poisson-denominator
  // residuals are uniformly larger
  for (int x = 0; x < 5; ++x) {
    for (int t = 0; t < 8; ++t) CHECK(pois.r2(x, t) >= own.r2(x, t));
  }
  const double em = ds.exposures(2, 3) * std::exp(log_mu(spec.true_params, 2, 3));
  CHECK(pois.r2(2, 3) * em / (em * (1.0 + em / 50.0)) == doctest::Approx(own.r2(2, 3)));
}

TEST_CASE("predictive_scores demands enough draws") {
  const auto pred = single_cell_prediction(std::vector<long>(100, 3), 1, 1.0);
  CHECK_THROWS_AS(predictive_scores(single_cell_holdout(3, 1, 1.0), pred), DataError);
}

}  // TEST_SUITE
