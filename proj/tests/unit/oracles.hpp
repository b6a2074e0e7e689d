#ifndef CMPMORT_TEST_ORACLES_HPP
#define CMPMORT_TEST_ORACLES_HPP

// Independent reference implementations used only by tests.  Each one takes a
// deliberately different algebraic route from the library code it checks.

#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace oracles {

// Brute-force CMP series sums in extended precision, straight accumulation
// from j = 0 with no scaling tricks.
inline long double direct_log_z(double lambda, double nu, int terms) {
  const long double ll = std::log(static_cast<long double>(lambda));
  long double sum = 0.0L;
  for (int j = 0; j < terms; ++j) {
    sum += std::exp(j * ll - static_cast<long double>(nu) * std::lgamma(j + 1.0L));
  }
  return std::log(sum);
}

struct DirectMoments {
  long double mean;
  long double variance;
};

inline DirectMoments direct_moments(double lambda, double nu, int terms) {
  const long double ll = std::log(static_cast<long double>(lambda));
  long double s0 = 0.0L, s1 = 0.0L, s2 = 0.0L;
  for (int j = 0; j < terms; ++j) {
    const long double t = std::exp(j * ll - static_cast<long double>(nu) * std::lgamma(j + 1.0L));
    s0 += t;
    s1 += j * t;
    s2 += static_cast<long double>(j) * j * t;
  }
  const long double mean = s1 / s0;
  return {mean, s2 / s0 - mean * mean};
}

// Analytic Gaussian conditioning on the event A x = 0 via the Schur
// complement, then selection of the kept coordinates.  Runs in extended
// precision: the diffuse cohort start cancels ~8 digits, and the oracle has
// to stay well below the tolerance it enforces.
struct Conditioned {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

using MatL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using VecL = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

inline Conditioned condition_on_constraints(const Eigen::VectorXd& mu,
                                            const Eigen::MatrixXd& sigma,
                                            const Eigen::MatrixXd& A,
                                            const std::vector<int>& keep) {
  const MatL sigma_l = sigma.cast<long double>();
  const MatL a_l = A.cast<long double>();
  const VecL mu_l = mu.cast<long double>();
  const MatL S = a_l * sigma_l * a_l.transpose();
  const MatL K = sigma_l * a_l.transpose() * S.inverse();
  const VecL mu_c = mu_l - K * (a_l * mu_l);
  const MatL sig_c = sigma_l - K * a_l * sigma_l;
  Conditioned out;
  out.mean.resize(keep.size());
  out.cov.resize(keep.size(), keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.mean(i) = static_cast<double>(mu_c(keep[i]));
    for (std::size_t j = 0; j < keep.size(); ++j) {
      out.cov(i, j) = static_cast<double>(sig_c(keep[i], keep[j]));
    }
  }
  return out;
}

// Unconstrained kappa law built through the moving-average representation
// delta = L eps with L[t][s] = rho^{t-s}.
inline Eigen::MatrixXd kappa_cov_unconstrained(int T, double rho, double sigma2) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(T, T);
  for (int t = 0; t < T; ++t) {
    for (int s = 0; s <= t; ++s) L(t, s) = std::pow(rho, t - s);
  }
  return sigma2 * L * L.transpose();
}

inline Eigen::VectorXd kappa_mean_unconstrained(int T, double psi1, double psi2) {
  Eigen::VectorXd eta(T);
  for (int t = 0; t < T; ++t) eta(t) = psi1 + psi2 * (t + 1);
  return eta;
}

// Unconstrained cohort law: gamma = L eps accumulated from the diffuse start
// and the scaled first difference.
inline Eigen::MatrixXd gamma_cov_unconstrained(int C, double rho, double sigma_gamma) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(C, C);
  for (int c = 0; c < C; ++c) L(c, 0) = 100.0;
  const double s = 1.0 / std::sqrt(1.0 - rho * rho);
  for (int c = 1; c < C; ++c) {
    // coefficient of eps_2 in gamma_c: sum of rho^{j-2} weights over diffs
    double w = 0.0;
    for (int j = 1; j <= c; ++j) w += std::pow(rho, j - 1);
    L(c, 1) = s * w;
  }
  for (int k = 2; k < C; ++k) {
    for (int c = k; c < C; ++c) {
      double w = 0.0;
      for (int j = k; j <= c; ++j) w += std::pow(rho, j - k);
      L(c, k) = w;
    }
  }
  return sigma_gamma * sigma_gamma * L * L.transpose();
}

// Exact CRPS of a discrete predictive PMF against an integer observation.
inline double crps_exact(std::span<const double> pmf, long y) {
  const long n = static_cast<long>(pmf.size());
  double term1 = 0.0;
  for (long j = 0; j < n; ++j) term1 += pmf[j] * std::fabs(static_cast<double>(j - y));
  double term2 = 0.0;
  for (long j = 0; j < n; ++j) {
    for (long k = 0; k < n; ++k) {
      term2 += pmf[j] * pmf[k] * std::fabs(static_cast<double>(j - k));
    }
  }
  return term1 - 0.5 * term2;
}

}  // namespace oracles

#endif
