#ifndef CMPMORT_CONFIG_HPP
#define CMPMORT_CONFIG_HPP

#include <map>
#include <string>

#include "cmpmort/assess.hpp"
#include "cmpmort/mcmc.hpp"
#include "cmpmort/synthetic.hpp"

namespace cmpmort {

// Fully resolved run configuration.  `raw` holds every key=value pair after
// defaults, file and command-line overrides are merged, and is echoed into
// the output manifest so a run can be reconstructed exactly.
struct RunConfig {
  // data
  std::string data_source = "synthetic";  // synthetic | hmd
  std::string deaths_path, exposures_path;
  HmdRange hmd;
  int synthetic_ages = 10;
  int synthetic_years = 20;
  int synthetic_holdout_years = 0;
  double synthetic_exposure = 1e5;
  std::string synthetic_exposure_curve;  // optional path, one exposure per age
  std::string synthetic_structure = "lc";
  std::string synthetic_likelihood = "cmp";
  double synthetic_dispersion = 0.5;
  std::uint64_t synthetic_seed = 42;

  // model
  Structure structure = Structure::LC;
  Likelihood likelihood = Likelihood::CMP;

  PriorConfig prior;
  McmcConfig mcmc;

  ResidualVariance residual_variance = ResidualVariance::ModelSpecific;
  int forecast_draws = 0;  // 0 = one predictive draw per stored posterior draw
  bool locf_exposure = false;

  std::string output_dir = "out";
  int threads = 0;  // 0 = hardware default

  std::map<std::string, std::string> raw;

  // Builds the training dataset (and holdout) this config describes.
  MortalityDataset load_dataset() const;
};

// Flat "key = value" file; '#' comments and blank lines ignored.
std::map<std::string, std::string> parse_config_file(const std::string& path);

// Merges defaults with overrides (later maps win) and validates every key.
RunConfig make_run_config(const std::map<std::string, std::string>& overrides);

// "flat" or "gamma:a,b"
NuPrior parse_nu_prior(const std::string& text);
std::string nu_prior_to_string(const NuPrior& prior);

}  // namespace cmpmort

#endif
