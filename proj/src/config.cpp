#include "cmpmort/config.hpp"

#include <fstream>
#include <sstream>

#include "cmpmort/errors.hpp"

namespace cmpmort {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: bad numeric value for " + key + ": " + v);
  }
}

long to_long(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer value for " + key + ": " + v);
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("config: bad boolean value for " + key + ": " + v);
}

std::map<std::string, std::string> default_map() {
  return {
      {"data.source", "synthetic"},
      {"data.deaths", ""},
      {"data.exposures", ""},
      {"data.age_min", "0"},
      {"data.age_max", "99"},
      {"data.train_first", "1961"},
      {"data.train_last", "2002"},
      {"data.holdout_first", "0"},
      {"data.holdout_last", "-1"},
      {"synthetic.ages", "10"},
      {"synthetic.years", "20"},
      {"synthetic.holdout_years", "0"},
      {"synthetic.exposure", "100000"},
      {"synthetic.exposure_curve", ""},
      {"synthetic.structure", "lc"},
      {"synthetic.likelihood", "cmp"},
      {"synthetic.dispersion", "0.5"},
      {"synthetic.seed", "42"},
      {"model.structure", "lc"},
      {"model.likelihood", "cmp"},
      {"prior.alpha_mean", "-5"},
      {"prior.alpha_var", "4"},
      {"prior.beta_var_scale", "0.005"},
      {"prior.psi_var1", "2000"},
      {"prior.psi_var2", "2"},
      {"prior.rho_beta_a", "3"},
      {"prior.rho_beta_b", "2"},
      {"prior.sigma2_kappa_shape", "1"},
      {"prior.sigma2_kappa_rate", "0.0001"},
      {"prior.sigma_gamma_upper", "0.1"},
      {"prior.nu", "flat"},
      {"mcmc.n_keep", "10000"},
      {"mcmc.burn_in", "1000"},
      {"mcmc.thin", "50"},
      {"mcmc.n_chains", "4"},
      {"mcmc.seed", "1"},
      {"mcmc.adapt", "on"},
      {"mcmc.target_accept", "0.3"},
      {"mcmc.jacobian", "on"},
      {"mcmc.consistency_interval", "1000"},
      {"mcmc.hyper_repeats", "10"},
      {"mcmc.scale.alpha", "0.001"},
      {"mcmc.scale.beta", "0.0001"},
      {"mcmc.scale.kappa", "0.05"},
      {"mcmc.scale.gamma", "0.01"},
      {"mcmc.scale.psi", "0.01"},
      {"mcmc.scale.rho", "0.1"},
      {"mcmc.scale.sigma2_kappa", "0.2"},
      {"mcmc.scale.rho_gamma", "0.1"},
      {"mcmc.scale.sigma_gamma", "0.1"},
      {"mcmc.scale.dispersion", "0.005"},
      {"assess.residual_variance", "model"},
      {"forecast.draws", "0"},
      {"forecast.locf_exposure", "off"},
      {"output.dir", "out"},
      {"threads", "0"},
  };
}

}  // namespace

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: missing '=' at " + path + ":" + std::to_string(lineno));
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

NuPrior parse_nu_prior(const std::string& text) {
  if (text == "flat") return {NuPrior::Kind::Flat, 1.0, 1.0};
  if (text.rfind("gamma:", 0) == 0) {
    const std::string args = text.substr(6);
    const auto comma = args.find(',');
    if (comma == std::string::npos) throw ConfigError("config: nu prior needs gamma:a,b");
    NuPrior prior;
    prior.kind = NuPrior::Kind::Gamma;
    prior.a = to_double("prior.nu", args.substr(0, comma));
    prior.b = to_double("prior.nu", args.substr(comma + 1));
    if (!(prior.a > 0.0) || !(prior.b > 0.0)) {
      throw ConfigError("config: gamma prior parameters must be positive");
    }
    return prior;
  }
  throw ConfigError("config: nu prior must be 'flat' or 'gamma:a,b', got " + text);
}

std::string nu_prior_to_string(const NuPrior& prior) {
  if (prior.kind == NuPrior::Kind::Flat) return "flat";
  std::ostringstream ss;
  ss << "gamma:" << prior.a << "," << prior.b;
  return ss.str();
}

RunConfig make_run_config(const std::map<std::string, std::string>& overrides) {
  auto merged = default_map();
  for (const auto& [k, v] : overrides) {
    if (merged.find(k) == merged.end()) throw ConfigError("config: unknown key " + k);
    merged[k] = v;
  }

  RunConfig cfg;
  cfg.raw = merged;
  const auto get = [&](const std::string& k) { return merged.at(k); };

  cfg.data_source = get("data.source");
  if (cfg.data_source != "synthetic" && cfg.data_source != "hmd") {
    throw ConfigError("config: data.source must be synthetic or hmd");
  }
  cfg.deaths_path = get("data.deaths");
  cfg.exposures_path = get("data.exposures");
  cfg.hmd.age_min = static_cast<int>(to_long("data.age_min", get("data.age_min")));
  cfg.hmd.age_max = static_cast<int>(to_long("data.age_max", get("data.age_max")));
  cfg.hmd.train_first = static_cast<int>(to_long("data.train_first", get("data.train_first")));
  cfg.hmd.train_last = static_cast<int>(to_long("data.train_last", get("data.train_last")));
  cfg.hmd.holdout_first =
      static_cast<int>(to_long("data.holdout_first", get("data.holdout_first")));
  cfg.hmd.holdout_last =
      static_cast<int>(to_long("data.holdout_last", get("data.holdout_last")));

  cfg.synthetic_ages = static_cast<int>(to_long("synthetic.ages", get("synthetic.ages")));
  cfg.synthetic_years = static_cast<int>(to_long("synthetic.years", get("synthetic.years")));
  cfg.synthetic_holdout_years =
      static_cast<int>(to_long("synthetic.holdout_years", get("synthetic.holdout_years")));
  cfg.synthetic_exposure = to_double("synthetic.exposure", get("synthetic.exposure"));
  cfg.synthetic_exposure_curve = get("synthetic.exposure_curve");
  cfg.synthetic_structure = get("synthetic.structure");
  cfg.synthetic_likelihood = get("synthetic.likelihood");
  cfg.synthetic_dispersion = to_double("synthetic.dispersion", get("synthetic.dispersion"));
  cfg.synthetic_seed =
      static_cast<std::uint64_t>(to_long("synthetic.seed", get("synthetic.seed")));

  cfg.structure = structure_from_string(get("model.structure"));
  cfg.likelihood = likelihood_from_string(get("model.likelihood"));

  cfg.prior.alpha_mean = to_double("prior.alpha_mean", get("prior.alpha_mean"));
  cfg.prior.alpha_var = to_double("prior.alpha_var", get("prior.alpha_var"));
  cfg.prior.beta_var_scale = to_double("prior.beta_var_scale", get("prior.beta_var_scale"));
  cfg.prior.psi_var1 = to_double("prior.psi_var1", get("prior.psi_var1"));
  cfg.prior.psi_var2 = to_double("prior.psi_var2", get("prior.psi_var2"));
  cfg.prior.rho_beta_a = to_double("prior.rho_beta_a", get("prior.rho_beta_a"));
  cfg.prior.rho_beta_b = to_double("prior.rho_beta_b", get("prior.rho_beta_b"));
  cfg.prior.sigma2_kappa_shape =
      to_double("prior.sigma2_kappa_shape", get("prior.sigma2_kappa_shape"));
  cfg.prior.sigma2_kappa_rate =
      to_double("prior.sigma2_kappa_rate", get("prior.sigma2_kappa_rate"));
  cfg.prior.sigma_gamma_upper =
      to_double("prior.sigma_gamma_upper", get("prior.sigma_gamma_upper"));
  cfg.prior.nu_prior = parse_nu_prior(get("prior.nu"));

  cfg.mcmc.n_keep = static_cast<int>(to_long("mcmc.n_keep", get("mcmc.n_keep")));
  cfg.mcmc.burn_in = static_cast<int>(to_long("mcmc.burn_in", get("mcmc.burn_in")));
  cfg.mcmc.thin = static_cast<int>(to_long("mcmc.thin", get("mcmc.thin")));
  cfg.mcmc.n_chains = static_cast<int>(to_long("mcmc.n_chains", get("mcmc.n_chains")));
  cfg.mcmc.seed = static_cast<std::uint64_t>(to_long("mcmc.seed", get("mcmc.seed")));
  cfg.mcmc.adapt = to_bool("mcmc.adapt", get("mcmc.adapt"));
  cfg.mcmc.target_accept = to_double("mcmc.target_accept", get("mcmc.target_accept"));
  cfg.mcmc.log_walk_jacobian = to_bool("mcmc.jacobian", get("mcmc.jacobian"));
  cfg.mcmc.consistency_check_interval =
      static_cast<int>(to_long("mcmc.consistency_interval", get("mcmc.consistency_interval")));
  cfg.mcmc.hyper_repeats =
      static_cast<int>(to_long("mcmc.hyper_repeats", get("mcmc.hyper_repeats")));
  cfg.mcmc.scales.alpha = to_double("mcmc.scale.alpha", get("mcmc.scale.alpha"));
  cfg.mcmc.scales.beta = to_double("mcmc.scale.beta", get("mcmc.scale.beta"));
  cfg.mcmc.scales.kappa = to_double("mcmc.scale.kappa", get("mcmc.scale.kappa"));
  cfg.mcmc.scales.gamma = to_double("mcmc.scale.gamma", get("mcmc.scale.gamma"));
  cfg.mcmc.scales.psi = to_double("mcmc.scale.psi", get("mcmc.scale.psi"));
  cfg.mcmc.scales.rho = to_double("mcmc.scale.rho", get("mcmc.scale.rho"));
  cfg.mcmc.scales.sigma2_kappa =
      to_double("mcmc.scale.sigma2_kappa", get("mcmc.scale.sigma2_kappa"));
  cfg.mcmc.scales.rho_gamma = to_double("mcmc.scale.rho_gamma", get("mcmc.scale.rho_gamma"));
  cfg.mcmc.scales.sigma_gamma =
      to_double("mcmc.scale.sigma_gamma", get("mcmc.scale.sigma_gamma"));
  cfg.mcmc.scales.dispersion = to_double("mcmc.scale.dispersion", get("mcmc.scale.dispersion"));
  cfg.mcmc.validate();

  const std::string rv = get("assess.residual_variance");
  if (rv == "model") {
    cfg.residual_variance = ResidualVariance::ModelSpecific;
  } else if (rv == "poisson") {
    cfg.residual_variance = ResidualVariance::Poisson;
  } else {
    throw ConfigError("config: assess.residual_variance must be model or poisson");
  }

  cfg.forecast_draws = static_cast<int>(to_long("forecast.draws", get("forecast.draws")));
  cfg.locf_exposure = to_bool("forecast.locf_exposure", get("forecast.locf_exposure"));
  cfg.output_dir = get("output.dir");
  cfg.threads = static_cast<int>(to_long("threads", get("threads")));
  return cfg;
}

MortalityDataset RunConfig::load_dataset() const {
  if (data_source == "hmd") {
    if (deaths_path.empty() || exposures_path.empty()) {
      throw ConfigError("config: data.deaths and data.exposures required for hmd source");
    }
    return load_hmd(deaths_path, exposures_path, hmd);
  }
  SyntheticSpec spec;
  const Structure truth_structure = structure_from_string(synthetic_structure);
  const Likelihood truth_lik = likelihood_from_string(synthetic_likelihood);
  const int total_years = synthetic_years + synthetic_holdout_years;
  spec.true_params = make_default_true_params(synthetic_ages, total_years, truth_structure,
                                              truth_lik, synthetic_dispersion);
  spec.likelihood = truth_lik;
  if (synthetic_exposure_curve.empty()) {
    spec.exposure = synthetic_exposure;
  } else {
    std::ifstream curve_in(synthetic_exposure_curve);
    if (!curve_in) throw DataError("cannot open exposure curve " + synthetic_exposure_curve);
    std::vector<double> curve;
    double v = 0.0;
    while (curve_in >> v) curve.push_back(v);
    spec.exposure = std::move(curve);
  }
  spec.seed = synthetic_seed;
  return simulate_with_holdout(spec, synthetic_ages, synthetic_years,
                               synthetic_holdout_years);
}

}  // namespace cmpmort
