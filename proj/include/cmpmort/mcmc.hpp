#ifndef CMPMORT_MCMC_HPP
#define CMPMORT_MCMC_HPP

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cmpmort/model.hpp"
#include "cmpmort/priors.hpp"
#include "cmpmort/rng.hpp"

namespace cmpmort {

// Proposal variances per block kind.  Positive parameters walk on the log
// scale, rho-type parameters on the atanh scale; these variances apply on the
// transformed scale.
struct ProposalScales {
  double alpha = 1e-3;
  double beta = 1e-4;
  double kappa = 5e-2;
  double gamma = 1e-2;
  double psi = 1e-2;  // common factor; psi2 steps at 5% of psi1's
  double rho = 1e-1;
  double sigma2_kappa = 2e-1;
  double rho_gamma = 1e-1;
  double sigma_gamma = 1e-1;
  double dispersion = 5e-3;  // log nu (and log phi)
};

struct McmcConfig {
  int n_keep = 10000;
  int burn_in = 1000;
  int thin = 50;
  int n_chains = 4;
  std::uint64_t seed = 1;
  bool adapt = true;            // Robbins-Monro during burn-in only
  double target_accept = 0.3;
  bool log_walk_jacobian = true;  // false replicates the printed dispersion update
  int consistency_check_interval = 1000;  // sweeps; 0 disables
  // The hyperparameter blocks (psi, rho, sigma2_kappa, rho_gamma, sigma_gamma)
  // cost no likelihood work, so each sweep scans them this many times; they
  // mix slowly along the rho ridge otherwise.
  int hyper_repeats = 10;
  ProposalScales scales;

  int total_sweeps() const { return burn_in + n_keep * thin; }
  void validate() const;
};

struct BlockId {
  enum class Kind {
    Alpha, Beta, Kappa, Gamma, Psi, Rho, Sigma2Kappa, RhoGamma, SigmaGamma, Dispersion
  };
  Kind kind = Kind::Alpha;
  int index = 0;  // parameter index for vector blocks (0-based)
};

std::vector<BlockId> build_block_list(Structure structure, Likelihood lik, int A, int T,
                                      int C);
std::string block_name(const BlockId& id);

// Mutable sampler state: parameter vector, incremental likelihood cache, and
// the rho-dependent prior factorizations.
struct SamplerState {
  ModelParams params;
  LogLikCache cache;
  KappaPriorShape kappa_shape;
  GammaPriorShape gamma_shape;  // unused under LC
};

SamplerState make_sampler_state(const MortalityDataset& ds, ModelParams params,
                                Structure structure, Likelihood lik);

struct UpdateResult {
  bool accepted = false;
  double alpha = 0.0;  // min(1, ratio)
};

// One variable-at-a-time random-walk proposal for the given block,
// refreshing only the cells that block touches.  proposal_var is the
// variance of the Gaussian step on the walking scale.
UpdateResult mh_block_update(SamplerState& state, const BlockId& block,
                             const MortalityDataset& ds, Likelihood lik,
                             const PriorConfig& prior_cfg, double proposal_var,
                             bool dispersion_jacobian, RngStream& rng);

struct BlockStats {
  std::string name;
  long proposals = 0;
  long accepted = 0;
  double sum_alpha = 0.0;
  double rate() const { return proposals > 0 ? static_cast<double>(accepted) / proposals : 0.0; }
};

struct ChainOutput {
  std::vector<ModelParams> draws;
  std::vector<BlockStats> acceptance;  // retained phase only
  std::vector<double> final_scales;    // adapted proposal variances per block
};

struct PosteriorSamples {
  Structure structure = Structure::LC;
  Likelihood likelihood = Likelihood::Poisson;
  int A = 0, T = 0, C = 0;
  std::vector<ChainOutput> chains;
  McmcConfig config;
  double wall_seconds = 0.0;

  int n_chains() const { return static_cast<int>(chains.size()); }
  std::vector<const ModelParams*> pooled() const;
};

// Poisson MLE by cyclic one-dimensional Newton updates, constraints
// re-imposed every sweep; AR fits on the fitted paths seed the
// hyperparameters.  The dispersion start is nu = 0.5 (phi = 1000 for NB).
ModelParams init_mle(const MortalityDataset& ds, Structure structure, Likelihood lik);

// One chain; deterministic function of (dataset, configs, chain_seed).
ChainOutput run_chain(const MortalityDataset& ds, Structure structure, Likelihood lik,
                      const PriorConfig& prior_cfg, const McmcConfig& config,
                      std::uint64_t chain_seed);

// All chains, chain_seed = config.seed ^ chain_index.  Chains are
// independent given their seeds, so up to `threads` of them run
// concurrently; outputs are ordered by chain index either way.
PosteriorSamples run_mcmc(const MortalityDataset& ds, Structure structure, Likelihood lik,
                          const PriorConfig& prior_cfg, const McmcConfig& config,
                          int threads = 1);

// ---- convergence diagnostics ----

// Gelman-Rubin potential scale reduction factor over >= 2 equal-length
// chains; +inf when the within-chain variance degenerates.
double psrf(const std::vector<std::vector<double>>& chains);

// Geweke Z comparing the first frac_a to the last frac_b of the chain, with
// spectral-density-at-zero variance estimates (Bartlett window); falls back
// to the plain variance if the windowed estimate is non-positive.
double geweke_z(std::span<const double> chain, double frac_a = 0.1, double frac_b = 0.5);

std::vector<double> acf(std::span<const double> xs, int max_lag);

// ---- parameter naming / traces / serialization ----

std::vector<std::string> param_names(Structure structure, Likelihood lik, int A, int T,
                                     int C);
double param_value(const ModelParams& p, const std::string& name);
std::vector<double> trace(const std::vector<ModelParams>& draws, const std::string& name);

// Chain CSV: header of parameter names, one row per stored sweep, %.17g.
void write_chain_csv(const std::vector<ModelParams>& draws, Structure structure,
                     Likelihood lik, std::ostream& out);
std::vector<ModelParams> read_chain_csv(std::istream& in, Structure structure,
                                        Likelihood lik, int A, int T, int C);

}  // namespace cmpmort

#endif
