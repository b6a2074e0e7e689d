#include "cmpmort/priors.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "cmpmort/errors.hpp"

namespace cmpmort {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogTwoPi = 1.8378770664093454836;

// P[-1 < Z < 1] for the truncated standard normal prior on rho_gamma.
const double kRhoGammaNorm = std::erf(1.0 / std::sqrt(2.0));

// Lower-bidiagonal map from kappa deviations to innovations:
// eps_1 = delta_1, eps_t = delta_t - rho delta_{t-1}.
Eigen::MatrixXd kappa_innovation_map(int T, double rho) {
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(T, T);
  for (int t = 0; t < T; ++t) {
    B(t, t) = 1.0;
    if (t > 0) B(t, t - 1) = -rho;
  }
  return B;
}

// Innovation map for the cohort recursion: eps_1 = gamma_1 / 100,
// eps_2 = sqrt(1-rho^2) (gamma_2 - gamma_1),
// eps_c = gamma_c - (1+rho) gamma_{c-1} + rho gamma_{c-2}.
Eigen::MatrixXd gamma_innovation_map(int C, double rho) {
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(C, C);
  B(0, 0) = 0.01;
  if (C > 1) {
    const double s = std::sqrt(1.0 - rho * rho);
    B(1, 0) = -s;
    B(1, 1) = s;
  }
  for (int c = 2; c < C; ++c) {
    B(c, c) = 1.0;
    B(c, c - 1) = -(1.0 + rho);
    B(c, c - 2) = rho;
  }
  return B;
}

// Restriction of N(mu, Q^{-1}) to the surface {x = M y + offset-free span}:
// y ~ N(m, P^{-1}) with P = M' Q M, P m = M' Q mu.
struct Restricted {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

Restricted restrict_to_surface(const Eigen::MatrixXd& M, const Eigen::MatrixXd& Q,
                               const Eigen::VectorXd& mu) {
  const Eigen::MatrixXd P = M.transpose() * Q * M;
  const Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() != Eigen::Success) {
    throw NumericError("constrained prior: precision not positive definite");
  }
  Restricted out;
  out.mean = llt.solve(M.transpose() * (Q * mu));
  out.cov = llt.solve(Eigen::MatrixXd::Identity(P.rows(), P.cols()));
  return out;
}

ConstrainedGaussian from_mean_cov(Eigen::VectorXd mean, const Eigen::MatrixXd& cov) {
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw NumericError("constrained prior: covariance not positive definite");
  }
  ConstrainedGaussian g;
  g.mean = std::move(mean);
  g.chol_lower = llt.matrixL();
  g.log_det = 0.0;
  for (int i = 0; i < g.chol_lower.rows(); ++i) {
    g.log_det += 2.0 * std::log(g.chol_lower(i, i));
  }
  return g;
}

}  // namespace

double ConstrainedGaussian::log_pdf(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd z = chol_lower.triangularView<Eigen::Lower>().solve(x - mean);
  return -0.5 * (z.squaredNorm() + log_det + dim() * kLogTwoPi);
}

Eigen::VectorXd ConstrainedGaussian::sample(RngStream& rng) const {
  Eigen::VectorXd z(dim());
  for (int i = 0; i < dim(); ++i) z(i) = rng.normal();
  return mean + chol_lower * z;
}

KappaPriorShape build_kappa_shape(int T, double rho) {
  if (T < 3) throw NumericError("kappa prior requires T >= 3");
  if (!(std::fabs(rho) < 1.0)) throw NumericError("kappa prior requires |rho| < 1");

  const Eigen::MatrixXd B = kappa_innovation_map(T, rho);
  const Eigen::MatrixXd Q = B.transpose() * B;  // unit innovation variance

  // kappa = M y with y = (kappa_2..kappa_T), kappa_1 = -sum(y)
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(T, T - 1);
  M.row(0).setConstant(-1.0);
  M.bottomRows(T - 1).setIdentity();

  // drift enters the restriction linearly, so the mean map can be built by
  // restricting with each drift basis vector (eta columns for psi1, psi2)
  Eigen::MatrixXd eta(T, 2);
  for (int t = 0; t < T; ++t) {
    eta(t, 0) = 1.0;
    eta(t, 1) = t + 1;
  }

  const Eigen::MatrixXd P = M.transpose() * Q * M;
  const Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() != Eigen::Success) {
    throw NumericError("kappa prior: precision not positive definite");
  }

  KappaPriorShape shape;
  shape.T = T;
  shape.mean_map = llt.solve(M.transpose() * (Q * eta));
  const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(T - 1, T - 1));
  const Eigen::LLT<Eigen::MatrixXd> cov_llt(cov);
  if (cov_llt.info() != Eigen::Success) {
    throw NumericError("kappa prior: covariance not positive definite");
  }
  shape.chol_unit = cov_llt.matrixL();
  shape.log_det_unit = 0.0;
  for (int i = 0; i < T - 1; ++i) shape.log_det_unit += 2.0 * std::log(shape.chol_unit(i, i));
  return shape;
}

double log_kappa_density(const KappaPriorShape& shape, std::span<const double> kappa_free,
                         double psi1, double psi2, double sigma2) {
  const int n = shape.T - 1;
  Eigen::VectorXd d(n);
  for (int i = 0; i < n; ++i) d(i) = kappa_free[i];
  d -= shape.mean_map * Eigen::Vector2d(psi1, psi2);
  const Eigen::VectorXd z = shape.chol_unit.triangularView<Eigen::Lower>().solve(d);
  return -0.5 * (z.squaredNorm() / sigma2 + shape.log_det_unit + n * std::log(sigma2) +
                 n * kLogTwoPi);
}

ConstrainedGaussian kappa_prior(int T, double psi1, double psi2, double rho, double sigma2) {
  if (!(sigma2 > 0.0)) throw NumericError("kappa prior requires sigma2 > 0");
  const KappaPriorShape shape = build_kappa_shape(T, rho);
  ConstrainedGaussian g;
  g.mean = shape.mean_map * Eigen::Vector2d(psi1, psi2);
  g.chol_lower = std::sqrt(sigma2) * shape.chol_unit;
  g.log_det = shape.log_det_unit + (T - 1) * std::log(sigma2);
  return g;
}

GammaPriorShape build_gamma_shape(int C, double rho_gamma) {
  if (C < 5) throw NumericError("gamma prior requires C >= 5");
  if (!(std::fabs(rho_gamma) < 1.0)) {
    throw NumericError("gamma prior requires |rho_gamma| < 1");
  }
  const Eigen::MatrixXd B = gamma_innovation_map(C, rho_gamma);
  const Eigen::MatrixXd Q = B.transpose() * B;

  // gamma = M y where the three dropped components are linear in the free
  // ones via the moment-constraint back-out (same system as apply_constraints)
  const auto dropped = dropped_cohort_indices(C);
  std::vector<int> free_idx;
  for (int i = 0; i < C; ++i) {
    if (i != dropped[0] && i != dropped[1] && i != dropped[2]) free_idx.push_back(i);
  }
  Eigen::Matrix3d Ad;
  Eigen::MatrixXd Af(3, C - 3);
  for (int k = 0; k < 3; ++k) {
    const double c = dropped[k] + 1;
    Ad(0, k) = 1.0;
    Ad(1, k) = c;
    Ad(2, k) = c * c;
  }
  for (int j = 0; j < C - 3; ++j) {
    const double c = free_idx[j] + 1;
    Af(0, j) = 1.0;
    Af(1, j) = c;
    Af(2, j) = c * c;
  }
  const Eigen::MatrixXd D = -Ad.fullPivLu().solve(Af);  // dropped = D * free

  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(C, C - 3);
  for (int j = 0; j < C - 3; ++j) M(free_idx[j], j) = 1.0;
  for (int k = 0; k < 3; ++k) M.row(dropped[k]) = D.row(k);

  const Restricted r = restrict_to_surface(M, Q, Eigen::VectorXd::Zero(C));
  ConstrainedGaussian g = from_mean_cov(Eigen::VectorXd::Zero(C - 3), r.cov);

  GammaPriorShape shape;
  shape.C = C;
  shape.chol_unit = g.chol_lower;
  shape.log_det_unit = g.log_det;
  return shape;
}

double log_gamma_density(const GammaPriorShape& shape, std::span<const double> gamma_free,
                         double sigma_gamma) {
  const int n = shape.C - 3;
  Eigen::VectorXd d(n);
  for (int i = 0; i < n; ++i) d(i) = gamma_free[i];
  const Eigen::VectorXd z = shape.chol_unit.triangularView<Eigen::Lower>().solve(d);
  const double sigma2 = sigma_gamma * sigma_gamma;
  return -0.5 * (z.squaredNorm() / sigma2 + shape.log_det_unit + n * std::log(sigma2) +
                 n * kLogTwoPi);
}

ConstrainedGaussian gamma_prior(int C, double rho_gamma, double sigma_gamma) {
  if (!(sigma_gamma > 0.0)) throw NumericError("gamma prior requires sigma_gamma > 0");
  const GammaPriorShape shape = build_gamma_shape(C, rho_gamma);
  ConstrainedGaussian g;
  g.mean = Eigen::VectorXd::Zero(C - 3);
  g.chol_lower = sigma_gamma * shape.chol_unit;
  g.log_det = shape.log_det_unit + 2.0 * (C - 3) * std::log(sigma_gamma);
  return g;
}

double log_alpha_prior(std::span<const double> alpha, const PriorConfig& cfg) {
  double s = 0.0;
  for (double a : alpha) {
    const double d = a - cfg.alpha_mean;
    s += -0.5 * (d * d / cfg.alpha_var + std::log(cfg.alpha_var) + kLogTwoPi);
  }
  return s;
}

double log_beta_prior(std::span<const double> beta_free, int A, const PriorConfig& cfg) {
  // N(1/A, v (I - J/A)) on the A-1 free components; the inverse of
  // (I - J/A) at this dimension is I + J and its determinant is 1/A.
  const int n = A - 1;
  double sum_d = 0.0, sum_d2 = 0.0;
  for (double b : beta_free) {
    const double d = b - 1.0 / A;
    sum_d += d;
    sum_d2 += d * d;
  }
  const double quad = (sum_d2 + sum_d * sum_d) / cfg.beta_var_scale;
  const double log_det = n * std::log(cfg.beta_var_scale) - std::log(static_cast<double>(A));
  return -0.5 * (quad + log_det + n * kLogTwoPi);
}

double log_psi_prior(double psi1, double psi2, const PriorConfig& cfg) {
  return -0.5 * (psi1 * psi1 / cfg.psi_var1 + std::log(cfg.psi_var1) + kLogTwoPi) -
         0.5 * (psi2 * psi2 / cfg.psi_var2 + std::log(cfg.psi_var2) + kLogTwoPi);
}

double log_rho_prior(double rho, const PriorConfig& cfg) {
  if (!(rho > -1.0 && rho < 1.0)) return kNegInf;
  const double u = 0.5 * (rho + 1.0);
  const double a = cfg.rho_beta_a, b = cfg.rho_beta_b;
  const double log_beta_const = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  return log_beta_const + (a - 1.0) * std::log(u) + (b - 1.0) * std::log1p(-u) +
         std::log(0.5);
}

double log_sigma2_kappa_prior(double sigma2, const PriorConfig& cfg) {
  if (!(sigma2 > 0.0)) return kNegInf;
  // precision ~ Gamma(shape, rate); density in sigma2 includes the u = 1/v
  // Jacobian v^{-2}
  const double a = cfg.sigma2_kappa_shape, b = cfg.sigma2_kappa_rate;
  return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(sigma2) - b / sigma2;
}

double log_rho_gamma_prior(double rho_gamma) {
  if (!(rho_gamma > -1.0 && rho_gamma < 1.0)) return kNegInf;
  return -0.5 * (rho_gamma * rho_gamma + kLogTwoPi) - std::log(kRhoGammaNorm);
}

double log_sigma_gamma_prior(double sigma_gamma, const PriorConfig& cfg) {
  if (!(sigma_gamma > 0.0 && sigma_gamma < cfg.sigma_gamma_upper)) return kNegInf;
  return -std::log(cfg.sigma_gamma_upper);
}

double log_nu_prior(double nu, const PriorConfig& cfg) {
  if (!(nu > 0.0)) return kNegInf;
  if (cfg.nu_prior.kind == NuPrior::Kind::Flat) return 0.0;
  const double a = cfg.nu_prior.a, b = cfg.nu_prior.b;
  return a * std::log(b) - std::lgamma(a) + (a - 1.0) * std::log(nu) - b * nu;
}

double log_phi_prior(double phi) {
  return phi > 0.0 ? 0.0 : kNegInf;
}

double log_prior(const ModelParams& p, const PriorConfig& cfg, Structure structure) {
  const int A = p.n_ages();
  const int T = p.n_years();

  double lp = log_alpha_prior(p.alpha, cfg);
  lp += log_beta_prior(std::span<const double>(p.beta).subspan(1), A, cfg);
  lp += log_psi_prior(p.psi1, p.psi2, cfg);
  lp += log_rho_prior(p.rho, cfg);
  lp += log_sigma2_kappa_prior(p.sigma2_kappa, cfg);
  if (std::isinf(lp)) return kNegInf;

  const KappaPriorShape ks = build_kappa_shape(T, p.rho);
  lp += log_kappa_density(ks, std::span<const double>(p.kappa).subspan(1), p.psi1, p.psi2,
                          p.sigma2_kappa);

  if (structure == Structure::LCC) {
    lp += log_rho_gamma_prior(p.rho_gamma);
    lp += log_sigma_gamma_prior(p.sigma_gamma, cfg);
    if (std::isinf(lp)) return kNegInf;
    const int C = p.n_cohorts();
    const auto dropped = dropped_cohort_indices(C);
    std::vector<double> free_gamma;
    free_gamma.reserve(C - 3);
    for (int i = 0; i < C; ++i) {
      if (i != dropped[0] && i != dropped[1] && i != dropped[2]) {
        free_gamma.push_back(p.gamma[i]);
      }
    }
    const GammaPriorShape gs = build_gamma_shape(C, p.rho_gamma);
    lp += log_gamma_density(gs, free_gamma, p.sigma_gamma);
  }

  switch (p.dispersion.kind) {
    case Dispersion::Kind::Nu: lp += log_nu_prior(p.dispersion.value, cfg); break;
    case Dispersion::Kind::Phi: lp += log_phi_prior(p.dispersion.value); break;
    default: break;
  }
  return lp;
}

}  // namespace cmpmort
