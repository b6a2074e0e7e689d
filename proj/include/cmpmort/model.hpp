#ifndef CMPMORT_MODEL_HPP
#define CMPMORT_MODEL_HPP

#include <array>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cmpmort/data.hpp"
#include "cmpmort/rng.hpp"

namespace cmpmort {

enum class Structure { LC, LCC };
enum class Likelihood { Poisson, NegBin, CMP };

std::string to_string(Structure s);
std::string to_string(Likelihood l);
Structure structure_from_string(const std::string& s);
Likelihood likelihood_from_string(const std::string& s);

struct Dispersion {
  enum class Kind { None, Nu, Phi };
  Kind kind = Kind::None;
  double value = 0.0;

  static Dispersion none() { return {Kind::None, 0.0}; }
  static Dispersion nu(double v) { return {Kind::Nu, v}; }
  static Dispersion phi(double v) { return {Kind::Phi, v}; }
};

// Expected dispersion tag for each likelihood.
Dispersion::Kind dispersion_kind_for(Likelihood l);

// One complete parameter state.  alpha/beta are length A, kappa length T,
// gamma length C = A + T - 1 (empty under LC).  Identifiability: sum(beta)=1,
// sum(kappa)=0, and for cohort models sum(gamma)=sum(c gamma)=sum(c^2 gamma)=0.
struct ModelParams {
  std::vector<double> alpha;
  std::vector<double> beta;
  std::vector<double> kappa;
  std::vector<double> gamma;
  double psi1 = 0.0, psi2 = 0.0;
  double rho = 0.0;
  double sigma2_kappa = 1.0;
  double rho_gamma = 0.0;
  double sigma_gamma = 0.05;
  Dispersion dispersion;

  bool has_cohorts() const { return !gamma.empty(); }
  int n_ages() const { return static_cast<int>(alpha.size()); }
  int n_years() const { return static_cast<int>(kappa.size()); }
  int n_cohorts() const { return static_cast<int>(gamma.size()); }
};

// log mu_xt = alpha_x + beta_x kappa_t (+ gamma_c); 0-based indices.
inline double log_mu(const ModelParams& p, int x, int t) {
  double v = p.alpha[x] + p.beta[x] * p.kappa[t];
  if (!p.gamma.empty()) v += p.gamma[t - x + static_cast<int>(p.alpha.size()) - 1];
  return v;
}

// Log-likelihood of one cell.  mu is the central rate; the expected count is
// e * mu.  Throws NumericError if the dispersion tag does not match the
// likelihood or e*mu underflows.
double cell_loglik(long d, double e, double mu, Likelihood lik, const Dispersion& disp);

// Per-cell log-likelihood matrix with row/column sums and total, maintained
// incrementally by the sampler.  Aggregation order is fixed (row-major rows,
// then the row-sum reduction) so totals are reproducible.
struct LogLikCache {
  Eigen::MatrixXd cells;
  std::vector<double> row_sums;
  std::vector<double> col_sums;
  double total = 0.0;

  void recompute_aggregates();
};

LogLikCache full_loglik(const MortalityDataset& ds, const ModelParams& p, Likelihood lik);

void refresh_rows(LogLikCache& cache, const MortalityDataset& ds, const ModelParams& p,
                  Likelihood lik, std::span<const int> rows);
void refresh_cols(LogLikCache& cache, const MortalityDataset& ds, const ModelParams& p,
                  Likelihood lik, std::span<const int> cols);
void refresh_cohorts(LogLikCache& cache, const MortalityDataset& ds, const ModelParams& p,
                     Likelihood lik, std::span<const int> cohorts);
void refresh_all_dispersion(LogLikCache& cache, const MortalityDataset& ds,
                            const ModelParams& p, Likelihood lik);

// Max |cache - recomputed| over cells; used by the sampler's periodic
// consistency check and by tests.
double cache_max_abs_error(const LogLikCache& cache, const MortalityDataset& ds,
                           const ModelParams& p, Likelihood lik);

// Cells on cohort diagonal c (0-based), as (x, t) pairs.
std::vector<std::pair<int, int>> cells_of_cohort(int A, int T, int c);

// Indices (0-based) of the three dependent cohort components: {0, m-1, C-1}
// with m = 72 when C = 141, else m = ceil((C+1)/2).
std::array<int, 3> dropped_cohort_indices(int C);

// Recomputes the dependent components from the free ones: beta_1 from the
// unit-sum constraint, kappa_1 from the zero-sum constraint, and the three
// dropped gamma entries by solving the 3x3 moment-constraint system.
void apply_constraints(ModelParams& p);

// Just the dropped-gamma part of apply_constraints; used on every cohort
// proposal.
void update_dependent_gamma(ModelParams& p);

// Max violation over all identifiability constraints.
double constraint_violation(const ModelParams& p);

// Model-implied variance of the death count in one cell, used for Pearson
// residuals: Poisson e*mu, NB e*mu(1 + e*mu/phi), CMP the mean/variance
// relation (m + 1/2 - 1/(2 nu)) / nu.
double count_variance(double e, double mu, Likelihood lik, const Dispersion& disp);

// One death-count draw from the tagged likelihood with mean e*mu.
long sample_count(double e, double mu, Likelihood lik, const Dispersion& disp,
                  RngStream& rng);

}  // namespace cmpmort

#endif
