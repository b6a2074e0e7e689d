#include "cmpmort/synthetic.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "cmpmort/errors.hpp"

namespace cmpmort {

ModelParams make_default_true_params(int A, int T, Structure structure,
                                     Likelihood likelihood, double dispersion_value) {
  ModelParams p;
  p.alpha.resize(A);
  p.beta.assign(A, 1.0 / A);
  p.kappa.resize(T);
  for (int x = 0; x < A; ++x) {
    const double u = A > 1 ? static_cast<double>(x) / (A - 1) : 0.0;
    p.alpha[x] = -7.5 + 1.6 * u + 0.4 * u * u;
  }
  for (int t = 0; t < T; ++t) {
    p.kappa[t] = -0.3 * ((t + 1) - 0.5 * (T + 1));
  }
  p.psi1 = 0.0;
  p.psi2 = -0.3;
  p.rho = 0.6;
  p.sigma2_kappa = 0.01;
  if (structure == Structure::LCC) {
    const int C = A + T - 1;
    p.gamma.resize(C);
    for (int i = 0; i < C; ++i) {
      p.gamma[i] = 0.1 * std::sin(2.0 * M_PI * (i + 1) / C);
    }
    // least-squares projection onto {sum g = sum c g = sum c^2 g = 0}; the
    // residual of a quadratic fit satisfies all three exactly
    Eigen::MatrixXd X(C, 3);
    Eigen::VectorXd g(C);
    for (int i = 0; i < C; ++i) {
      const double c = i + 1;
      X(i, 0) = 1.0;
      X(i, 1) = c;
      X(i, 2) = c * c;
      g(i) = p.gamma[i];
    }
    const Eigen::VectorXd fit = X * (X.transpose() * X).ldlt().solve(X.transpose() * g);
    for (int i = 0; i < C; ++i) p.gamma[i] -= fit(i);
    p.rho_gamma = 0.3;
    p.sigma_gamma = 0.05;
  }
  switch (likelihood) {
    case Likelihood::Poisson: p.dispersion = Dispersion::none(); break;
    case Likelihood::NegBin: p.dispersion = Dispersion::phi(dispersion_value); break;
    default: p.dispersion = Dispersion::nu(dispersion_value); break;
  }
  return p;
}

MortalityDataset simulate(const SyntheticSpec& spec, int A, int T) {
  const ModelParams& p = spec.true_params;
  if (p.n_ages() != A || p.n_years() != T) {
    throw DataError("simulate: true_params dimensions do not match A, T");
  }
  if (p.has_cohorts() && p.n_cohorts() != A + T - 1) {
    throw DataError("simulate: gamma length must be A + T - 1");
  }
  if (constraint_violation(p) > 1e-8) {
    throw DataError("simulate: true_params violate identifiability constraints");
  }

  MortalityDataset ds;
  ds.deaths.resize(A, T);
  ds.exposures.resize(A, T);
  for (int x = 0; x < A; ++x) ds.ages.push_back(x);
  for (int t = 0; t < T; ++t) ds.years.push_back(t + 1);

  for (int x = 0; x < A; ++x) {
    double e = 0.0;
    if (std::holds_alternative<double>(spec.exposure)) {
      e = std::get<double>(spec.exposure);
    } else {
      const auto& curve = std::get<std::vector<double>>(spec.exposure);
      if (static_cast<int>(curve.size()) != A) {
        throw DataError("simulate: exposure curve length must equal A");
      }
      e = curve[x];
    }
    if (!(e > 0.0)) throw DataError("simulate: exposure must be positive");
    for (int t = 0; t < T; ++t) ds.exposures(x, t) = e;
  }

  RngStream rng(spec.seed);
  for (int x = 0; x < A; ++x) {
    for (int t = 0; t < T; ++t) {
      const double mu = std::exp(log_mu(p, x, t));
      ds.deaths(x, t) = sample_count(ds.exposures(x, t), mu, spec.likelihood,
                                     p.dispersion, rng);
    }
  }
  ds.check();
  return ds;
}

MortalityDataset simulate_with_holdout(const SyntheticSpec& spec, int A, int T,
                                       int holdout_years) {
  MortalityDataset full = simulate(spec, A, T + holdout_years);
  if (holdout_years <= 0) return full;

  MortalityDataset train;
  train.deaths = full.deaths.leftCols(T);
  train.exposures = full.exposures.leftCols(T);
  train.ages = full.ages;
  train.years.assign(full.years.begin(), full.years.begin() + T);

  auto hold = std::make_shared<MortalityDataset>();
  hold->deaths = full.deaths.rightCols(holdout_years);
  hold->exposures = full.exposures.rightCols(holdout_years);
  hold->ages = full.ages;
  hold->years.assign(full.years.begin() + T, full.years.end());
  train.holdout = std::move(hold);
  train.check();
  return train;
}

}  // namespace cmpmort
