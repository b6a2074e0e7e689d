#include "cmpmort/model.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "cmpmort/cmp.hpp"
#include "cmpmort/errors.hpp"
#include "cmpmort/math_utils.hpp"

namespace cmpmort {

std::string to_string(Structure s) { return s == Structure::LC ? "lc" : "lcc"; }

std::string to_string(Likelihood l) {
  switch (l) {
    case Likelihood::Poisson: return "poisson";
    case Likelihood::NegBin: return "nb";
    default: return "cmp";
  }
}

Structure structure_from_string(const std::string& s) {
  if (s == "lc") return Structure::LC;
  if (s == "lcc") return Structure::LCC;
  throw ConfigError("unknown structure: " + s);
}

Likelihood likelihood_from_string(const std::string& s) {
  if (s == "poisson") return Likelihood::Poisson;
  if (s == "nb") return Likelihood::NegBin;
  if (s == "cmp") return Likelihood::CMP;
  throw ConfigError("unknown likelihood: " + s);
}

Dispersion::Kind dispersion_kind_for(Likelihood l) {
  switch (l) {
    case Likelihood::Poisson: return Dispersion::Kind::None;
    case Likelihood::NegBin: return Dispersion::Kind::Phi;
    default: return Dispersion::Kind::Nu;
  }
}

double cell_loglik(long d, double e, double mu, Likelihood lik, const Dispersion& disp) {
  if (disp.kind != dispersion_kind_for(lik)) {
    throw NumericError("cell_loglik: dispersion tag does not match likelihood");
  }
  const double em = e * mu;
  if (!(em > 1e-300)) throw NumericError("cell_loglik: e*mu underflow");

  switch (lik) {
    case Likelihood::Poisson:
      return d * std::log(em) - em - log_factorial(d);
    case Likelihood::NegBin: {
      // NegBin(phi, p) with p = phi/(e mu + phi); mean e mu.
      const double phi = disp.value;
      if (!(phi > 0.0)) throw NumericError("cell_loglik: phi must be positive");
      return std::lgamma(d + phi) - std::lgamma(phi) - log_factorial(d) +
             phi * std::log(phi / (em + phi)) + d * std::log(em / (em + phi));
    }
    default: {
      const double nu = disp.value;
      if (!(nu > 0.0)) throw NumericError("cell_loglik: nu must be positive");
      const cmp::CmpParams p{cmp::mean_matched_lambda(em, nu), nu};
      return cmp::log_pmf(d, p);
    }
  }
}

void LogLikCache::recompute_aggregates() {
  const auto A = cells.rows();
  const auto T = cells.cols();
  row_sums.assign(A, 0.0);
  col_sums.assign(T, 0.0);
  for (Eigen::Index x = 0; x < A; ++x) {
    for (Eigen::Index t = 0; t < T; ++t) {
      row_sums[x] += cells(x, t);
      col_sums[t] += cells(x, t);
    }
  }
  total = 0.0;
  for (double r : row_sums) total += r;
}

namespace {

double eval_cell(const MortalityDataset& ds, const ModelParams& p, Likelihood lik, int x,
                 int t) {
  try {
    return cell_loglik(ds.deaths(x, t), ds.exposures(x, t), std::exp(log_mu(p, x, t)), lik,
                       p.dispersion);
  } catch (const NumericError& err) {
    throw NumericError(std::string(err.what()) + " at cell (" + std::to_string(x) + "," +
                       std::to_string(t) + ")");
  }
}

}  // namespace

LogLikCache full_loglik(const MortalityDataset& ds, const ModelParams& p, Likelihood lik) {
  LogLikCache cache;
  cache.cells.resize(ds.n_ages(), ds.n_years());
  for (int x = 0; x < ds.n_ages(); ++x) {
    for (int t = 0; t < ds.n_years(); ++t) {
      cache.cells(x, t) = eval_cell(ds, p, lik, x, t);
    }
  }
  cache.recompute_aggregates();
  return cache;
}

void refresh_rows(LogLikCache& cache, const MortalityDataset& ds, const ModelParams& p,
                  Likelihood lik, std::span<const int> rows) {
  for (int x : rows) {
    for (int t = 0; t < ds.n_years(); ++t) cache.cells(x, t) = eval_cell(ds, p, lik, x, t);
  }
  cache.recompute_aggregates();
}

void refresh_cols(LogLikCache& cache, const MortalityDataset& ds, const ModelParams& p,
                  Likelihood lik, std::span<const int> cols) {
  for (int t : cols) {
    for (int x = 0; x < ds.n_ages(); ++x) cache.cells(x, t) = eval_cell(ds, p, lik, x, t);
  }
  cache.recompute_aggregates();
}

void refresh_cohorts(LogLikCache& cache, const MortalityDataset& ds, const ModelParams& p,
                     Likelihood lik, std::span<const int> cohorts) {
  for (int c : cohorts) {
    for (const auto& [x, t] : cells_of_cohort(ds.n_ages(), ds.n_years(), c)) {
      cache.cells(x, t) = eval_cell(ds, p, lik, x, t);
    }
  }
  cache.recompute_aggregates();
}

void refresh_all_dispersion(LogLikCache& cache, const MortalityDataset& ds,
                            const ModelParams& p, Likelihood lik) {
  for (int x = 0; x < ds.n_ages(); ++x) {
    for (int t = 0; t < ds.n_years(); ++t) cache.cells(x, t) = eval_cell(ds, p, lik, x, t);
  }
  cache.recompute_aggregates();
}

double cache_max_abs_error(const LogLikCache& cache, const MortalityDataset& ds,
                           const ModelParams& p, Likelihood lik) {
  double worst = 0.0;
  for (int x = 0; x < ds.n_ages(); ++x) {
    for (int t = 0; t < ds.n_years(); ++t) {
      worst = std::max(worst, std::fabs(cache.cells(x, t) - eval_cell(ds, p, lik, x, t)));
    }
  }
  return worst;
}

std::vector<std::pair<int, int>> cells_of_cohort(int A, int T, int c) {
  std::vector<std::pair<int, int>> out;
  for (int x = 0; x < A; ++x) {
    const int t = c - (A - 1) + x;
    if (t >= 0 && t < T) out.emplace_back(x, t);
  }
  return out;
}

std::array<int, 3> dropped_cohort_indices(int C) {
  const int m = (C == 141) ? 72 : (C + 2) / 2;  // ceil((C+1)/2)
  return {0, m - 1, C - 1};
}

void update_dependent_gamma(ModelParams& p) {
  if (p.gamma.empty()) return;
  const int C = p.n_cohorts();
  const auto dropped = dropped_cohort_indices(C);
  // moment sums over the free components, cohort labels c = 1..C
  Eigen::Vector3d rhs = Eigen::Vector3d::Zero();
  for (int i = 0; i < C; ++i) {
    if (i == dropped[0] || i == dropped[1] || i == dropped[2]) continue;
    const double c = i + 1;
    rhs(0) -= p.gamma[i];
    rhs(1) -= c * p.gamma[i];
    rhs(2) -= c * c * p.gamma[i];
  }
  Eigen::Matrix3d M;
  for (int k = 0; k < 3; ++k) {
    const double c = dropped[k] + 1;
    M(0, k) = 1.0;
    M(1, k) = c;
    M(2, k) = c * c;
  }
  const Eigen::Vector3d sol = M.fullPivLu().solve(rhs);
  for (int k = 0; k < 3; ++k) p.gamma[dropped[k]] = sol(k);
}

void apply_constraints(ModelParams& p) {
  const int A = p.n_ages();
  const int T = p.n_years();

  double beta_tail = 0.0;
  for (int x = 1; x < A; ++x) beta_tail += p.beta[x];
  p.beta[0] = 1.0 - beta_tail;

  double kappa_tail = 0.0;
  for (int t = 1; t < T; ++t) kappa_tail += p.kappa[t];
  p.kappa[0] = -kappa_tail;

  update_dependent_gamma(p);
}

double constraint_violation(const ModelParams& p) {
  double beta_sum = 0.0, kappa_sum = 0.0;
  for (double b : p.beta) beta_sum += b;
  for (double k : p.kappa) kappa_sum += k;
  double worst = std::max(std::fabs(beta_sum - 1.0), std::fabs(kappa_sum));
  if (!p.gamma.empty()) {
    double g0 = 0.0, g1 = 0.0, g2 = 0.0;
    for (int i = 0; i < p.n_cohorts(); ++i) {
      const double c = i + 1;
      g0 += p.gamma[i];
      g1 += c * p.gamma[i];
      g2 += c * c * p.gamma[i];
    }
    // scale the higher moments down so the tolerance is comparable across C
    const double C = p.n_cohorts();
    worst = std::max({worst, std::fabs(g0), std::fabs(g1) / C, std::fabs(g2) / (C * C)});
  }
  return worst;
}

double count_variance(double e, double mu, Likelihood lik, const Dispersion& disp) {
  const double em = e * mu;
  switch (lik) {
    case Likelihood::Poisson: return em;
    case Likelihood::NegBin: return em * (1.0 + em / disp.value);
    default: return (em + 0.5 - 0.5 / disp.value) / disp.value;
  }
}

long sample_count(double e, double mu, Likelihood lik, const Dispersion& disp,
                  RngStream& rng) {
  const double em = e * mu;
  switch (lik) {
    case Likelihood::Poisson:
      return rng.poisson(em);
    case Likelihood::NegBin: {
      // gamma-Poisson mixture representation of NegBin(phi, phi/(em+phi))
      const double g = rng.gamma(disp.value, em / disp.value);
      return rng.poisson(g);
    }
    default:
      return cmp::sample({cmp::mean_matched_lambda(em, disp.value), disp.value}, rng);
  }
}

}  // namespace cmpmort
