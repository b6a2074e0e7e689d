#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cmpmort/config.hpp"
#include "cmpmort/errors.hpp"

using namespace cmpmort;
namespace fs = std::filesystem;

TEST_SUITE("config") {

TEST_CASE("defaults resolve to the documented values") {
  const RunConfig cfg = make_run_config({});
  CHECK(cfg.mcmc.n_keep == 10000);
  CHECK(cfg.mcmc.burn_in == 1000);
  CHECK(cfg.mcmc.thin == 50);
  CHECK(cfg.mcmc.n_chains == 4);
  CHECK(cfg.mcmc.scales.dispersion == doctest::Approx(0.005));
  CHECK(cfg.prior.alpha_mean == -5.0);
  CHECK(cfg.prior.sigma_gamma_upper == doctest::Approx(0.1));
  CHECK(cfg.prior.nu_prior.kind == NuPrior::Kind::Flat);
  CHECK(cfg.hmd.train_first == 1961);
  CHECK(cfg.hmd.train_last == 2002);
}

TEST_CASE("config file parsing with comments and overrides") {
  const std::string path = (fs::temp_directory_path() / "cmpmort_test.cfg").string();
  {
    std::ofstream out(path);
    out << "# comment line\n";
    out << "mcmc.thin = 5   # trailing comment\n";
    out << "model.likelihood = nb\n";
    out << "\n";
    out << "prior.nu = gamma:1,100\n";
  }
  const auto kv = parse_config_file(path);
  const RunConfig cfg = make_run_config(kv);
  CHECK(cfg.mcmc.thin == 5);
  CHECK(cfg.likelihood == Likelihood::NegBin);
  CHECK(cfg.prior.nu_prior.kind == NuPrior::Kind::Gamma);
  CHECK(cfg.prior.nu_prior.b == doctest::Approx(100.0));
}

TEST_CASE("bad keys and values raise ConfigError") {
  CHECK_THROWS_AS(make_run_config({{"mcmc.thinn", "5"}}), ConfigError);
  CHECK_THROWS_AS(make_run_config({{"mcmc.thin", "fast"}}), ConfigError);
  CHECK_THROWS_AS(make_run_config({{"model.likelihood", "gaussian"}}), ConfigError);
  CHECK_THROWS_AS(make_run_config({{"prior.nu", "gamma:1"}}), ConfigError);
  CHECK_THROWS_AS(make_run_config({{"mcmc.thin", "0"}}), ConfigError);
}

TEST_CASE("nu prior round-trips through its text form") {
  for (const std::string s : {"flat", "gamma:1,100", "gamma:2,0.5"}) {
    CHECK(nu_prior_to_string(parse_nu_prior(s)) == s);
  }
}

TEST_CASE("synthetic dataset construction honors the config") {
  RunConfig cfg = make_run_config({{"synthetic.ages", "6"},
                                   {"synthetic.years", "9"},
                                   {"synthetic.holdout_years", "3"},
                                   {"synthetic.likelihood", "poisson"}});
  const MortalityDataset ds = cfg.load_dataset();
  CHECK(ds.n_ages() == 6);
  CHECK(ds.n_years() == 9);
  REQUIRE(ds.holdout != nullptr);
  CHECK(ds.holdout->n_years() == 3);

  // same config, same bytes
  const MortalityDataset ds2 = cfg.load_dataset();
  CHECK(ds.deaths == ds2.deaths);
}

TEST_CASE("exposure curve file overrides the constant exposure") {
  const std::string path = (fs::temp_directory_path() / "cmpmort_curve.txt").string();
  {
    std::ofstream out(path);
    out << "10000\n50000\n200000\n";
  }
  RunConfig cfg = make_run_config({{"synthetic.ages", "3"},
                                   {"synthetic.years", "5"},
                                   {"synthetic.exposure_curve", path}});
  const MortalityDataset ds = cfg.load_dataset();
  CHECK(ds.exposures(0, 0) == 10000.0);
  CHECK(ds.exposures(2, 2) == 200000.0);
}

}  // TEST_SUITE
