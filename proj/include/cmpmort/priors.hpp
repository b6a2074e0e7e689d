#ifndef CMPMORT_PRIORS_HPP
#define CMPMORT_PRIORS_HPP

#include <span>

#include <Eigen/Core>

#include "cmpmort/model.hpp"
#include "cmpmort/rng.hpp"

namespace cmpmort {

struct NuPrior {
  enum class Kind { Flat, Gamma };
  Kind kind = Kind::Flat;
  double a = 1.0;
  double b = 1.0;
};

struct PriorConfig {
  double alpha_mean = -5.0;
  double alpha_var = 4.0;
  double beta_var_scale = 0.005;
  double psi_var1 = 2000.0;
  double psi_var2 = 2.0;
  double rho_beta_a = 3.0;  // (rho+1)/2 ~ Beta(a, b)
  double rho_beta_b = 2.0;
  double sigma2_kappa_shape = 1.0;  // on the precision 1/sigma2
  double sigma2_kappa_rate = 1e-4;
  double sigma_gamma_upper = 0.1;
  NuPrior nu_prior;
};

// Gaussian law of the free coordinates of a linearly constrained vector.
struct ConstrainedGaussian {
  Eigen::VectorXd mean;
  Eigen::MatrixXd chol_lower;  // lower Cholesky factor of the covariance
  double log_det = 0.0;        // log det of the covariance

  int dim() const { return static_cast<int>(mean.size()); }
  double log_pdf(const Eigen::VectorXd& x) const;
  Eigen::VectorXd sample(RngStream& rng) const;
  Eigen::MatrixXd covariance() const { return chol_lower * chol_lower.transpose(); }
};

// Law of (kappa_2 .. kappa_T) implied by the AR(1)-around-linear-drift
// recursion conditioned on sum(kappa) = 0.  The construction goes through the
// joint precision restricted to the constraint surface (kappa = M y), which
// is algebraically independent of the Schur-complement conditioning identity
// used as the test oracle.
ConstrainedGaussian kappa_prior(int T, double psi1, double psi2, double rho, double sigma2);

// Law of the C-3 free cohort components implied by the ARIMA(1,1,0)
// recursion (diffuse start, scaled first difference) conditioned on the three
// moment constraints.
ConstrainedGaussian gamma_prior(int C, double rho_gamma, double sigma_gamma);

// Scale-separated forms used by the sampler so that sigma updates do not pay
// a matrix rebuild: the stored factor is for unit innovation variance.
struct KappaPriorShape {
  int T = 0;
  Eigen::MatrixXd chol_unit;
  double log_det_unit = 0.0;
  Eigen::MatrixXd mean_map;  // (T-1) x 2, mean = mean_map * (psi1, psi2)
};
KappaPriorShape build_kappa_shape(int T, double rho);
double log_kappa_density(const KappaPriorShape& shape, std::span<const double> kappa_free,
                         double psi1, double psi2, double sigma2);

struct GammaPriorShape {
  int C = 0;
  Eigen::MatrixXd chol_unit;
  double log_det_unit = 0.0;
};
GammaPriorShape build_gamma_shape(int C, double rho_gamma);
double log_gamma_density(const GammaPriorShape& shape, std::span<const double> gamma_free,
                         double sigma_gamma);

// Marginal log-priors of the scalar blocks.  All return -infinity outside
// their support rather than throwing, so Metropolis-Hastings rejects
// naturally.
double log_alpha_prior(std::span<const double> alpha, const PriorConfig& cfg);
double log_beta_prior(std::span<const double> beta_free, int A, const PriorConfig& cfg);
double log_psi_prior(double psi1, double psi2, const PriorConfig& cfg);
double log_rho_prior(double rho, const PriorConfig& cfg);
double log_sigma2_kappa_prior(double sigma2, const PriorConfig& cfg);
double log_rho_gamma_prior(double rho_gamma);  // N(0,1) truncated to (-1,1)
double log_sigma_gamma_prior(double sigma_gamma, const PriorConfig& cfg);
double log_nu_prior(double nu, const PriorConfig& cfg);
double log_phi_prior(double phi);  // flat on phi > 0

// Full joint log-prior of a parameter state (free coordinates of each
// constrained block).  -infinity outside the support.
double log_prior(const ModelParams& p, const PriorConfig& cfg, Structure structure);

}  // namespace cmpmort

#endif
