#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cmpmort/commands.hpp"
#include "cmpmort/errors.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> set_keys;  // key=value overrides
  std::string structure, likelihood, nu_prior, out_dir;
  long seed = -1, n_keep = -1, burn_in = -1, thin = -1, n_chains = -1, threads = -1;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  // scalar flags may repeat; the last occurrence wins
  cmd->add_option("--config", f.config_path, "flat key = value configuration file")->take_last();
  cmd->add_option("--set", f.set_keys, "extra key=value overrides (repeatable)");
  cmd->add_option("--structure", f.structure, "rate structure: lc | lcc")->take_last();
  cmd->add_option("--likelihood", f.likelihood, "count likelihood: poisson | nb | cmp")->take_last();
  cmd->add_option("--nu-prior", f.nu_prior, "nu prior: flat | gamma:a,b")->take_last();
  cmd->add_option("--out", f.out_dir, "output directory")->take_last();
  cmd->add_option("--seed", f.seed, "master MCMC seed")->take_last();
  cmd->add_option("--n-keep", f.n_keep, "stored draws per chain")->take_last();
  cmd->add_option("--burn-in", f.burn_in, "burn-in sweeps")->take_last();
  cmd->add_option("--thin", f.thin, "thinning factor")->take_last();
  cmd->add_option("--chains", f.n_chains, "number of chains")->take_last();
  cmd->add_option("--threads", f.threads, "worker thread cap")->take_last();
}

cmpmort::RunConfig resolve_config(const CommonFlags& f) {
  std::map<std::string, std::string> kv;
  if (!f.config_path.empty()) kv = cmpmort::parse_config_file(f.config_path);
  for (const auto& kvs : f.set_keys) {
    const auto eq = kvs.find('=');
    if (eq == std::string::npos) {
      throw cmpmort::ConfigError("--set expects key=value, got " + kvs);
    }
    kv[kvs.substr(0, eq)] = kvs.substr(eq + 1);
  }
  if (!f.structure.empty()) kv["model.structure"] = f.structure;
  if (!f.likelihood.empty()) kv["model.likelihood"] = f.likelihood;
  if (!f.nu_prior.empty()) kv["prior.nu"] = f.nu_prior;
  if (!f.out_dir.empty()) kv["output.dir"] = f.out_dir;
  if (f.seed >= 0) kv["mcmc.seed"] = std::to_string(f.seed);
  if (f.n_keep >= 0) kv["mcmc.n_keep"] = std::to_string(f.n_keep);
  if (f.burn_in >= 0) kv["mcmc.burn_in"] = std::to_string(f.burn_in);
  if (f.thin >= 0) kv["mcmc.thin"] = std::to_string(f.thin);
  if (f.n_chains >= 0) kv["mcmc.n_chains"] = std::to_string(f.n_chains);
  if (f.threads >= 0) kv["threads"] = std::to_string(f.threads);
  return cmpmort::make_run_config(kv);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian CMP / Poisson / negative-binomial mortality modelling"};
  app.require_subcommand(1);
  app.footer(
      "Config keys (flat 'key = value' file, also settable via --set):\n"
      "  data.source (synthetic|hmd), data.deaths, data.exposures, data.age_min/max,\n"
      "  data.train_first/last, data.holdout_first/last\n"
      "  synthetic.ages/years/holdout_years/exposure/exposure_curve/structure/\n"
      "  synthetic.likelihood/dispersion/seed\n"
      "  model.structure (lc|lcc), model.likelihood (poisson|nb|cmp)\n"
      "  prior.* (alpha_mean, alpha_var, beta_var_scale, psi_var1/2, rho_beta_a/b,\n"
      "  sigma2_kappa_shape/rate, sigma_gamma_upper, nu = flat|gamma:a,b)\n"
      "  mcmc.* (n_keep, burn_in, thin, n_chains, seed, adapt, target_accept,\n"
      "  jacobian, consistency_interval, scale.<block>)\n"
      "  assess.residual_variance (model|poisson), forecast.draws,\n"
      "  forecast.locf_exposure, output.dir, threads");

  CommonFlags fit_flags, sim_flags, sens_flags;
  std::string run_dir;
  int horizon = 10;
  std::vector<int> fan_ages;
  std::vector<std::string> prior_grid;

  CLI::App* fit = app.add_subcommand("fit", "run the MCMC sampler");
  add_common(fit, fit_flags);

  CLI::App* simulate = app.add_subcommand("simulate", "write a synthetic dataset");
  add_common(simulate, sim_flags);

  CLI::App* diagnose = app.add_subcommand("diagnose", "residual surface and fit verdict");
  diagnose->add_option("--run", run_dir, "fit output directory")->required();

  CLI::App* forecast = app.add_subcommand("forecast", "fitted and projected rates");
  forecast->add_option("--run", run_dir, "fit output directory")->required();
  forecast->add_option("--horizon", horizon, "projection horizon in years");
  forecast->add_option("--ages", fan_ages, "ages for fan charts");

  CLI::App* score = app.add_subcommand("score", "holdout predictive scores");
  score->add_option("--run", run_dir, "fit output directory")->required();

  CLI::App* sensitivity = app.add_subcommand("sensitivity", "nu prior sensitivity grid");
  add_common(sensitivity, sens_flags);
  sensitivity->add_option("--priors", prior_grid, "prior grid entries (flat | gamma:a,b)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (*fit) {
      cmpmort::cmd_fit(resolve_config(fit_flags));
    } else if (*simulate) {
      cmpmort::cmd_simulate(resolve_config(sim_flags));
    } else if (*diagnose) {
      std::cout << cmpmort::cmd_diagnose(run_dir) << "\n";
    } else if (*forecast) {
      cmpmort::cmd_forecast(run_dir, horizon, fan_ages);
    } else if (*score) {
      cmpmort::cmd_score(run_dir);
    } else if (*sensitivity) {
      if (prior_grid.empty()) prior_grid = cmpmort::default_sensitivity_grid();
      cmpmort::cmd_sensitivity(resolve_config(sens_flags), prior_grid);
    }
  } catch (const cmpmort::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const cmpmort::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const cmpmort::NumericError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 4;
  } catch (const cmpmort::ConvergenceError& e) {
    std::cerr << "convergence error: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
