#include "cmpmort/mcmc.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <Eigen/Dense>

#include "cmpmort/errors.hpp"
#include "cmpmort/math_utils.hpp"

namespace cmpmort {

void McmcConfig::validate() const {
  if (n_keep < 1) throw ConfigError("mcmc: n_keep must be >= 1");
  if (burn_in < 0) throw ConfigError("mcmc: burn_in must be >= 0");
  if (thin < 1) throw ConfigError("mcmc: thin must be >= 1");
  if (n_chains < 1) throw ConfigError("mcmc: n_chains must be >= 1");
  if (hyper_repeats < 1) throw ConfigError("mcmc: hyper_repeats must be >= 1");
  const double s[] = {scales.alpha, scales.beta, scales.kappa, scales.gamma, scales.psi,
                      scales.rho, scales.sigma2_kappa, scales.rho_gamma,
                      scales.sigma_gamma, scales.dispersion};
  for (double v : s) {
    if (!(v > 0.0)) throw ConfigError("mcmc: proposal scales must be positive");
  }
}

std::vector<BlockId> build_block_list(Structure structure, Likelihood lik, int A, int T,
                                      int C) {
  std::vector<BlockId> blocks;
  using K = BlockId::Kind;
  for (int x = 0; x < A; ++x) blocks.push_back({K::Alpha, x});
  for (int x = 1; x < A; ++x) blocks.push_back({K::Beta, x});
  for (int t = 1; t < T; ++t) blocks.push_back({K::Kappa, t});
  if (structure == Structure::LCC) {
    const auto dropped = dropped_cohort_indices(C);
    for (int c = 0; c < C; ++c) {
      if (c != dropped[0] && c != dropped[1] && c != dropped[2]) {
        blocks.push_back({K::Gamma, c});
      }
    }
  }
  blocks.push_back({K::Psi, 0});
  blocks.push_back({K::Rho, 0});
  blocks.push_back({K::Sigma2Kappa, 0});
  if (structure == Structure::LCC) {
    blocks.push_back({K::RhoGamma, 0});
    blocks.push_back({K::SigmaGamma, 0});
  }
  if (lik != Likelihood::Poisson) blocks.push_back({K::Dispersion, 0});
  return blocks;
}

std::string block_name(const BlockId& id) {
  switch (id.kind) {
    case BlockId::Kind::Alpha: return "alpha." + std::to_string(id.index + 1);
    case BlockId::Kind::Beta: return "beta." + std::to_string(id.index + 1);
    case BlockId::Kind::Kappa: return "kappa." + std::to_string(id.index + 1);
    case BlockId::Kind::Gamma: return "gamma." + std::to_string(id.index + 1);
    case BlockId::Kind::Psi: return "psi";
    case BlockId::Kind::Rho: return "rho";
    case BlockId::Kind::Sigma2Kappa: return "sigma2_kappa";
    case BlockId::Kind::RhoGamma: return "rho_gamma";
    case BlockId::Kind::SigmaGamma: return "sigma_gamma";
    default: return "dispersion";
  }
}

SamplerState make_sampler_state(const MortalityDataset& ds, ModelParams params,
                                Structure structure, Likelihood lik) {
  SamplerState state;
  state.params = std::move(params);
  apply_constraints(state.params);
  state.cache = full_loglik(ds, state.params, lik);
  // degenerate grids (T < 3) still support dispersion-only updates; blocks
  // that need the kappa prior will throw if exercised
  if (ds.n_years() >= 3) {
    state.kappa_shape = build_kappa_shape(ds.n_years(), state.params.rho);
  }
  if (structure == Structure::LCC) {
    state.gamma_shape = build_gamma_shape(ds.n_cohorts(), state.params.rho_gamma);
  }
  return state;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct CellSnapshot {
  std::vector<std::pair<int, int>> cells;
  std::vector<double> values;

  void take(const LogLikCache& cache, std::vector<std::pair<int, int>> which) {
    cells = std::move(which);
    values.resize(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) {
      values[i] = cache.cells(cells[i].first, cells[i].second);
    }
  }
  void restore(LogLikCache& cache) const {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      cache.cells(cells[i].first, cells[i].second) = values[i];
    }
    cache.recompute_aggregates();
  }
};

std::vector<std::pair<int, int>> row_cells(int x, int T) {
  std::vector<std::pair<int, int>> v;
  v.reserve(T);
  for (int t = 0; t < T; ++t) v.emplace_back(x, t);
  return v;
}

std::vector<std::pair<int, int>> col_cells(int t, int A) {
  std::vector<std::pair<int, int>> v;
  v.reserve(A);
  for (int x = 0; x < A; ++x) v.emplace_back(x, t);
  return v;
}

std::vector<double> free_gamma_of(const ModelParams& p) {
  const int C = p.n_cohorts();
  const auto dropped = dropped_cohort_indices(C);
  std::vector<double> v;
  v.reserve(C - 3);
  for (int i = 0; i < C; ++i) {
    if (i != dropped[0] && i != dropped[1] && i != dropped[2]) v.push_back(p.gamma[i]);
  }
  return v;
}

double kappa_density_of(const SamplerState& s) {
  return log_kappa_density(s.kappa_shape,
                           std::span<const double>(s.params.kappa).subspan(1),
                           s.params.psi1, s.params.psi2, s.params.sigma2_kappa);
}

double gamma_density_of(const SamplerState& s) {
  return log_gamma_density(s.gamma_shape, free_gamma_of(s.params), s.params.sigma_gamma);
}

bool metropolis_accept(double log_ratio, RngStream& rng, double& alpha_out) {
  alpha_out = std::isnan(log_ratio) ? 0.0 : std::exp(std::min(0.0, log_ratio));
  return std::log(rng.uniform_pos()) < log_ratio;
}

}  // namespace

UpdateResult mh_block_update(SamplerState& state, const BlockId& block,
                             const MortalityDataset& ds, Likelihood lik,
                             const PriorConfig& prior_cfg, double proposal_var,
                             bool dispersion_jacobian, RngStream& rng) {
  ModelParams& p = state.params;
  LogLikCache& cache = state.cache;
  const int A = ds.n_ages();
  const int T = ds.n_years();
  const double sd = std::sqrt(proposal_var);
  using K = BlockId::Kind;
  double alpha = 0.0;

  switch (block.kind) {
    case K::Alpha: {
      const int x = block.index;
      const double old = p.alpha[x];
      const double d_old = old - prior_cfg.alpha_mean;
      CellSnapshot snap;
      snap.take(cache, row_cells(x, T));
      const double ll_old = cache.total;
      p.alpha[x] = old + sd * rng.normal();
      const int rows[] = {x};
      try {
        refresh_rows(cache, ds, p, lik, rows);
      } catch (const NumericError&) {
        p.alpha[x] = old;
        snap.restore(cache);
        return {false, 0.0};
      }
      const double d_new = p.alpha[x] - prior_cfg.alpha_mean;
      const double log_ratio = (cache.total - ll_old) +
                               0.5 * (d_old * d_old - d_new * d_new) / prior_cfg.alpha_var;
      if (metropolis_accept(log_ratio, rng, alpha)) return {true, alpha};
      p.alpha[x] = old;
      snap.restore(cache);
      return {false, alpha};
    }

    case K::Beta: {
      const int x = block.index;
      const double old_x = p.beta[x];
      const double old_0 = p.beta[0];
      auto cells = row_cells(0, T);
      const auto more = row_cells(x, T);
      cells.insert(cells.end(), more.begin(), more.end());
      CellSnapshot snap;
      snap.take(cache, std::move(cells));
      const double ll_old = cache.total;
      const double prior_old =
          log_beta_prior(std::span<const double>(p.beta).subspan(1), A, prior_cfg);
      p.beta[x] = old_x + sd * rng.normal();
      double tail = 0.0;
      for (int i = 1; i < A; ++i) tail += p.beta[i];
      p.beta[0] = 1.0 - tail;
      const int rows[] = {0, x};
      try {
        refresh_rows(cache, ds, p, lik, rows);
      } catch (const NumericError&) {
        p.beta[x] = old_x;
        p.beta[0] = old_0;
        snap.restore(cache);
        return {false, 0.0};
      }
      const double prior_new =
          log_beta_prior(std::span<const double>(p.beta).subspan(1), A, prior_cfg);
      const double log_ratio = (cache.total - ll_old) + (prior_new - prior_old);
      if (metropolis_accept(log_ratio, rng, alpha)) return {true, alpha};
      p.beta[x] = old_x;
      p.beta[0] = old_0;
      snap.restore(cache);
      return {false, alpha};
    }

    case K::Kappa: {
      const int t = block.index;
      const double old_t = p.kappa[t];
      const double old_0 = p.kappa[0];
      auto cells = col_cells(0, A);
      const auto more = col_cells(t, A);
      cells.insert(cells.end(), more.begin(), more.end());
      CellSnapshot snap;
      snap.take(cache, std::move(cells));
      const double ll_old = cache.total;
      const double prior_old = kappa_density_of(state);
      p.kappa[t] = old_t + sd * rng.normal();
      double tail = 0.0;
      for (int i = 1; i < T; ++i) tail += p.kappa[i];
      p.kappa[0] = -tail;
      const int cols[] = {0, t};
      try {
        refresh_cols(cache, ds, p, lik, cols);
      } catch (const NumericError&) {
        p.kappa[t] = old_t;
        p.kappa[0] = old_0;
        snap.restore(cache);
        return {false, 0.0};
      }
      const double log_ratio =
          (cache.total - ll_old) + (kappa_density_of(state) - prior_old);
      if (metropolis_accept(log_ratio, rng, alpha)) return {true, alpha};
      p.kappa[t] = old_t;
      p.kappa[0] = old_0;
      snap.restore(cache);
      return {false, alpha};
    }

    case K::Gamma: {
      const int c = block.index;
      const int C = p.n_cohorts();
      const auto dropped = dropped_cohort_indices(C);
      const double old_c = p.gamma[c];
      const double old_d0 = p.gamma[dropped[0]];
      const double old_d1 = p.gamma[dropped[1]];
      const double old_d2 = p.gamma[dropped[2]];
      std::vector<std::pair<int, int>> cells = cells_of_cohort(A, T, c);
      for (int k = 0; k < 3; ++k) {
        const auto more = cells_of_cohort(A, T, dropped[k]);
        cells.insert(cells.end(), more.begin(), more.end());
      }
      CellSnapshot snap;
      snap.take(cache, cells);
      const double ll_old = cache.total;
      const double prior_old = gamma_density_of(state);
      p.gamma[c] = old_c + sd * rng.normal();
      update_dependent_gamma(p);
      const int cohorts[] = {c, dropped[0], dropped[1], dropped[2]};
      try {
        refresh_cohorts(cache, ds, p, lik, cohorts);
      } catch (const NumericError&) {
        p.gamma[c] = old_c;
        p.gamma[dropped[0]] = old_d0;
        p.gamma[dropped[1]] = old_d1;
        p.gamma[dropped[2]] = old_d2;
        snap.restore(cache);
        return {false, 0.0};
      }
      const double log_ratio =
          (cache.total - ll_old) + (gamma_density_of(state) - prior_old);
      if (metropolis_accept(log_ratio, rng, alpha)) return {true, alpha};
      p.gamma[c] = old_c;
      p.gamma[dropped[0]] = old_d0;
      p.gamma[dropped[1]] = old_d1;
      p.gamma[dropped[2]] = old_d2;
      snap.restore(cache);
      return {false, alpha};
    }

    case K::Psi: {
      // slope steps carry a compensating intercept shift so the proposal
      // walks along the (level at mid-sample, slope) axes rather than the
      // strongly anti-correlated (psi1, psi2) ridge; the transform is linear
      // and fixed, so the Gaussian proposal stays symmetric
      const double old1 = p.psi1, old2 = p.psi2;
      const double prior_old = log_psi_prior(old1, old2, prior_cfg) + kappa_density_of(state);
      const double t_mid = 0.5 * (T + 1);
      const double slope_step = 0.2 * sd * rng.normal();
      p.psi2 = old2 + slope_step;
      p.psi1 = old1 + sd * rng.normal() - t_mid * slope_step;
      const double prior_new =
          log_psi_prior(p.psi1, p.psi2, prior_cfg) + kappa_density_of(state);
      if (metropolis_accept(prior_new - prior_old, rng, alpha)) return {true, alpha};
      p.psi1 = old1;
      p.psi2 = old2;
      return {false, alpha};
    }

    case K::Rho: {
      const double old = p.rho;
      const double z_new = std::atanh(old) + sd * rng.normal();
      const double rho_new = std::tanh(z_new);
      const double prior_old = log_rho_prior(old, prior_cfg) + kappa_density_of(state);
      KappaPriorShape shape_new;
      try {
        shape_new = build_kappa_shape(T, rho_new);
      } catch (const NumericError&) {
        return {false, 0.0};
      }
      KappaPriorShape shape_old = std::move(state.kappa_shape);
      state.kappa_shape = std::move(shape_new);
      p.rho = rho_new;
      const double prior_new = log_rho_prior(rho_new, prior_cfg) + kappa_density_of(state);
      const double jac = std::log1p(-rho_new * rho_new) - std::log1p(-old * old);
      if (metropolis_accept(prior_new - prior_old + jac, rng, alpha)) return {true, alpha};
      p.rho = old;
      state.kappa_shape = std::move(shape_old);
      return {false, alpha};
    }

    case K::Sigma2Kappa: {
      const double old = p.sigma2_kappa;
      const double step = sd * rng.normal();
      const double prior_old =
          log_sigma2_kappa_prior(old, prior_cfg) + kappa_density_of(state);
      p.sigma2_kappa = old * std::exp(step);
      const double prior_new =
          log_sigma2_kappa_prior(p.sigma2_kappa, prior_cfg) + kappa_density_of(state);
      if (metropolis_accept(prior_new - prior_old + step, rng, alpha)) return {true, alpha};
      p.sigma2_kappa = old;
      return {false, alpha};
    }

    case K::RhoGamma: {
      const double old = p.rho_gamma;
      const double z_new = std::atanh(old) + sd * rng.normal();
      const double rho_new = std::tanh(z_new);
      const double prior_old = log_rho_gamma_prior(old) + gamma_density_of(state);
      GammaPriorShape shape_new;
      try {
        shape_new = build_gamma_shape(p.n_cohorts(), rho_new);
      } catch (const NumericError&) {
        return {false, 0.0};
      }
      GammaPriorShape shape_old = std::move(state.gamma_shape);
      state.gamma_shape = std::move(shape_new);
      p.rho_gamma = rho_new;
      const double prior_new = log_rho_gamma_prior(rho_new) + gamma_density_of(state);
      const double jac = std::log1p(-rho_new * rho_new) - std::log1p(-old * old);
      if (metropolis_accept(prior_new - prior_old + jac, rng, alpha)) return {true, alpha};
      p.rho_gamma = old;
      state.gamma_shape = std::move(shape_old);
      return {false, alpha};
    }

    case K::SigmaGamma: {
      const double old = p.sigma_gamma;
      const double step = sd * rng.normal();
      const double cand = old * std::exp(step);
      const double prior_cand = log_sigma_gamma_prior(cand, prior_cfg);
      if (prior_cand == kNegInf) return {false, 0.0};
      const double prior_old =
          log_sigma_gamma_prior(old, prior_cfg) + gamma_density_of(state);
      p.sigma_gamma = cand;
      const double prior_new = prior_cand + gamma_density_of(state);
      if (metropolis_accept(prior_new - prior_old + step, rng, alpha)) return {true, alpha};
      p.sigma_gamma = old;
      return {false, alpha};
    }

    default: {  // Dispersion
      const double old = p.dispersion.value;
      const double step = sd * rng.normal();
      std::vector<std::pair<int, int>> all;
      all.reserve(static_cast<std::size_t>(A) * T);
      for (int x = 0; x < A; ++x) {
        for (int t = 0; t < T; ++t) all.emplace_back(x, t);
      }
      CellSnapshot snap;
      snap.take(cache, std::move(all));
      const double ll_old = cache.total;
      const bool is_nu = p.dispersion.kind == Dispersion::Kind::Nu;
      const double prior_old =
          is_nu ? log_nu_prior(old, prior_cfg) : log_phi_prior(old);
      p.dispersion.value = old * std::exp(step);
      try {
        refresh_all_dispersion(cache, ds, p, lik);
      } catch (const NumericError&) {
        p.dispersion.value = old;
        snap.restore(cache);
        return {false, 0.0};
      }
      const double prior_new = is_nu ? log_nu_prior(p.dispersion.value, prior_cfg)
                                     : log_phi_prior(p.dispersion.value);
      const double jac = dispersion_jacobian ? step : 0.0;
      const double log_ratio = (cache.total - ll_old) + (prior_new - prior_old) + jac;
      if (metropolis_accept(log_ratio, rng, alpha)) return {true, alpha};
      p.dispersion.value = old;
      snap.restore(cache);
      return {false, alpha};
    }
  }
}

// ---------------------------------------------------------------------------
// Poisson MLE initialization
// ---------------------------------------------------------------------------

namespace {

double poisson_loglik_total(const MortalityDataset& ds, const ModelParams& p) {
  double total = 0.0;
  for (int x = 0; x < ds.n_ages(); ++x) {
    for (int t = 0; t < ds.n_years(); ++t) {
      const double em = ds.exposures(x, t) * std::exp(log_mu(p, x, t));
      total += ds.deaths(x, t) * std::log(em) - em - log_factorial(ds.deaths(x, t));
    }
  }
  return total;
}

// (rho, innovation variance) by conditional least squares on a series that is
// first detrended on (1, t).
std::pair<double, double> fit_ar1_cls(const std::vector<double>& xs) {
  const int n = static_cast<int>(xs.size());
  double sx = 0, st = 0, stt = 0, sxt = 0;
  for (int i = 0; i < n; ++i) {
    const double t = i + 1;
    sx += xs[i];
    st += t;
    stt += t * t;
    sxt += xs[i] * t;
  }
  const double det = n * stt - st * st;
  const double slope = (n * sxt - st * sx) / det;
  const double intercept = (sx - slope * st) / n;
  std::vector<double> z(n);
  for (int i = 0; i < n; ++i) z[i] = xs[i] - intercept - slope * (i + 1);

  double num = 0, den = 0;
  for (int i = 1; i < n; ++i) {
    num += z[i] * z[i - 1];
    den += z[i - 1] * z[i - 1];
  }
  double rho = den > 1e-12 ? num / den : 0.0;
  rho = std::clamp(rho, -0.95, 0.95);
  double s2 = 0.0;
  for (int i = 1; i < n; ++i) {
    const double e = z[i] - rho * z[i - 1];
    s2 += e * e;
  }
  s2 = std::max(s2 / std::max(1, n - 1), 1e-8);
  return {rho, s2};
}

}  // namespace

ModelParams init_mle(const MortalityDataset& ds, Structure structure, Likelihood lik) {
  const int A = ds.n_ages();
  const int T = ds.n_years();
  const int C = ds.n_cohorts();

  ModelParams p;
  p.alpha.resize(A);
  p.beta.assign(A, 1.0 / A);
  p.kappa.assign(T, 0.0);
  if (structure == Structure::LCC) p.gamma.assign(C, 0.0);

  for (int x = 0; x < A; ++x) {
    double d = 0.5, e = 0.0;
    for (int t = 0; t < T; ++t) {
      d += static_cast<double>(ds.deaths(x, t));
      e += ds.exposures(x, t);
    }
    p.alpha[x] = std::log(d / e);
  }

  Eigen::MatrixXd em(A, T);
  const auto recompute_mu = [&]() {
    for (int x = 0; x < A; ++x) {
      for (int t = 0; t < T; ++t) {
        em(x, t) = ds.exposures(x, t) * std::exp(log_mu(p, x, t));
      }
    }
  };

  double ll_prev = -std::numeric_limits<double>::infinity();
  double damp = 1.0;
  bool converged = false;
  for (int sweep = 0; sweep < 500; ++sweep) {
    recompute_mu();
    for (int x = 0; x < A; ++x) {
      double num = 0, den = 0;
      for (int t = 0; t < T; ++t) {
        num += ds.deaths(x, t) - em(x, t);
        den += em(x, t);
      }
      const double step = damp * num / den;
      p.alpha[x] += step;
      for (int t = 0; t < T; ++t) em(x, t) *= std::exp(step);
    }
    for (int x = 0; x < A; ++x) {
      double num = 0, den = 0;
      for (int t = 0; t < T; ++t) {
        num += p.kappa[t] * (ds.deaths(x, t) - em(x, t));
        den += p.kappa[t] * p.kappa[t] * em(x, t);
      }
      if (den > 1e-12) {
        const double step = damp * num / den;
        p.beta[x] += step;
        for (int t = 0; t < T; ++t) em(x, t) *= std::exp(step * p.kappa[t]);
      }
    }
    for (int t = 0; t < T; ++t) {
      double num = 0, den = 0;
      for (int x = 0; x < A; ++x) {
        num += p.beta[x] * (ds.deaths(x, t) - em(x, t));
        den += p.beta[x] * p.beta[x] * em(x, t);
      }
      if (den > 1e-12) {
        const double step = damp * num / den;
        p.kappa[t] += step;
        for (int x = 0; x < A; ++x) em(x, t) *= std::exp(step * p.beta[x]);
      }
    }
    if (structure == Structure::LCC) {
      for (int c = 0; c < C; ++c) {
        double num = 0, den = 0;
        for (const auto& [x, t] : cells_of_cohort(A, T, c)) {
          num += ds.deaths(x, t) - em(x, t);
          den += em(x, t);
        }
        if (den > 1e-12) p.gamma[c] += damp * num / den;
      }
    }

    // re-impose identifiability: center kappa into alpha, normalize beta,
    // project gamma onto the moment-constraint space
    double kbar = 0.0;
    for (double k : p.kappa) kbar += k;
    kbar /= T;
    for (int x = 0; x < A; ++x) p.alpha[x] += p.beta[x] * kbar;
    for (int t = 0; t < T; ++t) p.kappa[t] -= kbar;
    double bsum = 0.0;
    for (double b : p.beta) bsum += b;
    for (int x = 0; x < A; ++x) p.beta[x] /= bsum;
    for (int t = 0; t < T; ++t) p.kappa[t] *= bsum;
    if (structure == Structure::LCC) {
      double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, m0 = 0, m1 = 0, m2 = 0;
      for (int i = 0; i < C; ++i) {
        const double c = i + 1, g = p.gamma[i];
        s0 += 1; s1 += c; s2 += c * c; s3 += c * c * c; s4 += c * c * c * c;
        m0 += g; m1 += c * g; m2 += c * c * g;
      }
      Eigen::Matrix3d X;
      X << s0, s1, s2, s1, s2, s3, s2, s3, s4;
      const Eigen::Vector3d coef = X.fullPivLu().solve(Eigen::Vector3d(m0, m1, m2));
      for (int i = 0; i < C; ++i) {
        const double c = i + 1;
        p.gamma[i] -= coef(0) + coef(1) * c + coef(2) * c * c;
      }
    }

    const double ll = poisson_loglik_total(ds, p);
    if (std::isfinite(ll_prev) && ll < ll_prev - 1e-10) {
      damp = std::max(0.125, 0.5 * damp);
    } else {
      damp = 1.0;
    }
    if (std::isfinite(ll_prev) &&
        std::fabs(ll - ll_prev) < 1e-8 * (std::fabs(ll_prev) + 1.0)) {
      converged = true;
      break;
    }
    ll_prev = ll;
  }
  if (!converged) {
    throw ConvergenceError("init_mle: Newton sweeps did not converge within 500 sweeps "
                           "(last log-likelihood " + std::to_string(ll_prev) + ")");
  }

  const auto [rho, s2] = fit_ar1_cls(p.kappa);
  p.rho = rho;
  // floor keeps the sigma2 walk from starting many log-decades below the
  // posterior when the fitted kappa path is near-deterministic
  p.sigma2_kappa = std::max(s2, 1e-3);
  p.psi1 = 0.0;
  p.psi2 = 0.0;
  if (structure == Structure::LCC) {
    std::vector<double> dg(p.gamma.size() - 1);
    for (std::size_t i = 1; i < p.gamma.size(); ++i) dg[i - 1] = p.gamma[i] - p.gamma[i - 1];
    double num = 0, den = 0;
    for (std::size_t i = 1; i < dg.size(); ++i) {
      num += dg[i] * dg[i - 1];
      den += dg[i - 1] * dg[i - 1];
    }
    p.rho_gamma = std::clamp(den > 1e-12 ? num / den : 0.0, -0.95, 0.95);
    double s2g = 0.0;
    for (std::size_t i = 1; i < dg.size(); ++i) {
      const double e = dg[i] - p.rho_gamma * dg[i - 1];
      s2g += e * e;
    }
    s2g /= std::max<std::size_t>(1, dg.size() - 1);
    p.sigma_gamma = std::clamp(std::sqrt(s2g), 1e-4, 0.099);
  }

  switch (lik) {
    case Likelihood::Poisson: p.dispersion = Dispersion::none(); break;
    case Likelihood::NegBin: p.dispersion = Dispersion::phi(1000.0); break;
    default: p.dispersion = Dispersion::nu(0.5); break;
  }
  apply_constraints(p);
  return p;
}

// ---------------------------------------------------------------------------
// chain driver
// ---------------------------------------------------------------------------

ChainOutput run_chain(const MortalityDataset& ds, Structure structure, Likelihood lik,
                      const PriorConfig& prior_cfg, const McmcConfig& config,
                      std::uint64_t chain_seed) {
  config.validate();
  ds.check();
  SamplerState state = make_sampler_state(ds, init_mle(ds, structure, lik), structure, lik);

  const int A = ds.n_ages();
  const int T = ds.n_years();
  const int C = ds.n_cohorts();
  const auto blocks = build_block_list(structure, lik, A, T, C);

  const auto base_var = [&](const BlockId& b) {
    switch (b.kind) {
      case BlockId::Kind::Alpha: return config.scales.alpha;
      case BlockId::Kind::Beta: return config.scales.beta;
      case BlockId::Kind::Kappa: return config.scales.kappa;
      case BlockId::Kind::Gamma: return config.scales.gamma;
      case BlockId::Kind::Psi: return config.scales.psi;
      case BlockId::Kind::Rho: return config.scales.rho;
      case BlockId::Kind::Sigma2Kappa: return config.scales.sigma2_kappa;
      case BlockId::Kind::RhoGamma: return config.scales.rho_gamma;
      case BlockId::Kind::SigmaGamma: return config.scales.sigma_gamma;
      default: return config.scales.dispersion;
    }
  };

  std::vector<double> log_sd(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) log_sd[b] = 0.5 * std::log(base_var(blocks[b]));
  std::vector<long> adapt_n(blocks.size(), 0);

  ChainOutput out;
  out.draws.reserve(config.n_keep);
  out.acceptance.resize(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) out.acceptance[b].name = block_name(blocks[b]);

  const auto is_hyper = [](const BlockId& b) {
    using K = BlockId::Kind;
    return b.kind == K::Psi || b.kind == K::Rho || b.kind == K::Sigma2Kappa ||
           b.kind == K::RhoGamma || b.kind == K::SigmaGamma;
  };

  RngStream rng(chain_seed);
  const int total = config.total_sweeps();
  for (int sweep = 0; sweep < total; ++sweep) {
    const bool burning = sweep < config.burn_in;
    const auto update_block = [&](std::size_t b) {
      const double var = std::exp(2.0 * log_sd[b]);
      const UpdateResult res = mh_block_update(state, blocks[b], ds, lik, prior_cfg, var,
                                               config.log_walk_jacobian, rng);
      if (burning) {
        if (config.adapt) {
          ++adapt_n[b];
          log_sd[b] += 1.5 * std::pow(static_cast<double>(adapt_n[b]), -0.6) *
                       (res.alpha - config.target_accept);
          log_sd[b] = std::clamp(log_sd[b], -14.0, 2.5);
        }
      } else {
        BlockStats& st = out.acceptance[b];
        ++st.proposals;
        st.accepted += res.accepted ? 1 : 0;
        st.sum_alpha += res.alpha;
      }
    };
    for (std::size_t b = 0; b < blocks.size(); ++b) update_block(b);
    for (int rep = 1; rep < config.hyper_repeats; ++rep) {
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (is_hyper(blocks[b])) update_block(b);
      }
    }
    if (!burning && (sweep - config.burn_in + 1) % config.thin == 0) {
      out.draws.push_back(state.params);
    }
    if (config.consistency_check_interval > 0 &&
        (sweep + 1) % config.consistency_check_interval == 0) {
      const LogLikCache full = full_loglik(ds, state.params, lik);
      const double rel = std::fabs(full.total - state.cache.total) /
                         (1.0 + std::fabs(full.total));
      if (rel > 1e-7) {
        throw NumericError("mcmc: incremental cache diverged from full recompute");
      }
      if (constraint_violation(state.params) > 1e-8) {
        throw NumericError("mcmc: identifiability constraints drifted");
      }
    }
  }

  out.final_scales.resize(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) out.final_scales[b] = std::exp(2.0 * log_sd[b]);
  return out;
}

PosteriorSamples run_mcmc(const MortalityDataset& ds, Structure structure, Likelihood lik,
                          const PriorConfig& prior_cfg, const McmcConfig& config,
                          int threads) {
  const auto t0 = std::chrono::steady_clock::now();
  PosteriorSamples out;
  out.structure = structure;
  out.likelihood = lik;
  out.A = ds.n_ages();
  out.T = ds.n_years();
  out.C = ds.n_cohorts();
  out.config = config;
  out.chains.resize(config.n_chains);

  if (threads <= 0) threads = static_cast<int>(std::thread::hardware_concurrency());
  threads = std::max(1, std::min(threads, config.n_chains));
  if (threads == 1) {
    for (int c = 0; c < config.n_chains; ++c) {
      out.chains[c] = run_chain(ds, structure, lik, prior_cfg, config,
                                config.seed ^ static_cast<std::uint64_t>(c));
    }
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::mutex error_mutex;
    std::exception_ptr error;
    for (int w = 0; w < threads; ++w) {
      pool.emplace_back([&]() {
        for (;;) {
          const int c = next.fetch_add(1);
          if (c >= config.n_chains) return;
          try {
            out.chains[c] = run_chain(ds, structure, lik, prior_cfg, config,
                                      config.seed ^ static_cast<std::uint64_t>(c));
          } catch (...) {
            const std::lock_guard<std::mutex> lock(error_mutex);
            if (!error) error = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
  }
  out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::vector<const ModelParams*> PosteriorSamples::pooled() const {
  std::vector<const ModelParams*> all;
  for (const auto& ch : chains) {
    for (const auto& d : ch.draws) all.push_back(&d);
  }
  return all;
}

// ---------------------------------------------------------------------------
// diagnostics
// ---------------------------------------------------------------------------

double psrf(const std::vector<std::vector<double>>& chains) {
  const int m = static_cast<int>(chains.size());
  if (m < 2) throw NumericError("psrf: needs at least 2 chains");
  std::size_t n = chains.front().size();
  for (const auto& c : chains) n = std::min(n, c.size());
  if (n < 10) throw NumericError("psrf: chains too short");

  std::vector<double> means(m), vars(m);
  for (int j = 0; j < m; ++j) {
    const std::span<const double> xs(chains[j].data(), n);
    means[j] = mean_of(xs);
    vars[j] = variance_of(xs);
  }
  const double w = mean_of(vars);
  if (!(w > 0.0) || !std::isfinite(w)) return std::numeric_limits<double>::infinity();
  const double grand = mean_of(means);
  double b_over_n = 0.0;
  for (int j = 0; j < m; ++j) b_over_n += (means[j] - grand) * (means[j] - grand);
  b_over_n /= (m - 1);
  const double nn = static_cast<double>(n);
  const double vhat = (nn - 1.0) / nn * w + b_over_n;
  return std::sqrt(vhat / w);
}

namespace {

// long-run variance of one segment: spectral density at zero estimated with
// Bartlett-windowed autocovariances; if the windowed sum degenerates, fall
// back to batch means (variance of sqrt(n) batch averages times batch size)
double spectral_variance(std::span<const double> xs) {
  const int n = static_cast<int>(xs.size());
  const double mean = mean_of(xs);
  const int L = std::max(1, static_cast<int>(std::cbrt(static_cast<double>(n))));
  std::vector<double> gamma(L + 1, 0.0);
  for (int k = 0; k <= L; ++k) {
    double s = 0.0;
    for (int i = 0; i + k < n; ++i) s += (xs[i] - mean) * (xs[i + k] - mean);
    gamma[k] = s / n;
  }
  double s2 = gamma[0];
  for (int k = 1; k <= L; ++k) s2 += 2.0 * (1.0 - static_cast<double>(k) / (L + 1)) * gamma[k];
  if (!(s2 > 0.0)) {
    const int n_batches = std::max(2, static_cast<int>(std::sqrt(static_cast<double>(n))));
    const int batch = n / n_batches;
    if (batch >= 2) {
      std::vector<double> batch_means(n_batches);
      for (int b = 0; b < n_batches; ++b) {
        batch_means[b] = mean_of(xs.subspan(b * batch, batch));
      }
      s2 = batch * variance_of(batch_means);
    } else {
      s2 = gamma[0];
    }
  }
  return s2;
}

}  // namespace

double geweke_z(std::span<const double> chain, double frac_a, double frac_b) {
  const int n = static_cast<int>(chain.size());
  if (n < 100) throw NumericError("geweke_z: chain too short");
  const int na = std::max(2, static_cast<int>(frac_a * n));
  const int nb = std::max(2, static_cast<int>(frac_b * n));
  const auto seg_a = chain.subspan(0, na);
  const auto seg_b = chain.subspan(n - nb, nb);
  const double va = spectral_variance(seg_a);
  const double vb = spectral_variance(seg_b);
  const double denom = std::sqrt(va / na + vb / nb);
  if (!(denom > 0.0) || !std::isfinite(denom)) {
    return std::numeric_limits<double>::infinity();
  }
  return (mean_of(seg_a) - mean_of(seg_b)) / denom;
}

std::vector<double> acf(std::span<const double> xs, int max_lag) {
  const int n = static_cast<int>(xs.size());
  if (n <= max_lag) throw NumericError("acf: series shorter than max_lag");
  const double mean = mean_of(xs);
  double g0 = 0.0;
  for (double x : xs) g0 += (x - mean) * (x - mean);
  std::vector<double> out(max_lag + 1, 1.0);
  for (int k = 1; k <= max_lag; ++k) {
    double s = 0.0;
    for (int i = 0; i + k < n; ++i) s += (xs[i] - mean) * (xs[i + k] - mean);
    out[k] = s / g0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// naming and serialization
// ---------------------------------------------------------------------------

std::vector<std::string> param_names(Structure structure, Likelihood lik, int A, int T,
                                     int C) {
  std::vector<std::string> names;
  for (int i = 1; i <= A; ++i) names.push_back("alpha." + std::to_string(i));
  for (int i = 1; i <= A; ++i) names.push_back("beta." + std::to_string(i));
  for (int i = 1; i <= T; ++i) names.push_back("kappa." + std::to_string(i));
  if (structure == Structure::LCC) {
    for (int i = 1; i <= C; ++i) names.push_back("gamma." + std::to_string(i));
  }
  names.push_back("psi.1");
  names.push_back("psi.2");
  names.push_back("rho");
  names.push_back("sigma2_kappa");
  if (structure == Structure::LCC) {
    names.push_back("rho_gamma");
    names.push_back("sigma_gamma");
  }
  if (lik == Likelihood::NegBin) names.push_back("phi");
  if (lik == Likelihood::CMP) names.push_back("nu");
  return names;
}

double param_value(const ModelParams& p, const std::string& name) {
  const auto dot = name.find('.');
  if (dot != std::string::npos) {
    const std::string base = name.substr(0, dot);
    const int idx = std::stoi(name.substr(dot + 1)) - 1;
    if (base == "alpha") return p.alpha.at(idx);
    if (base == "beta") return p.beta.at(idx);
    if (base == "kappa") return p.kappa.at(idx);
    if (base == "gamma") return p.gamma.at(idx);
    if (base == "psi") return idx == 0 ? p.psi1 : p.psi2;
  }
  if (name == "rho") return p.rho;
  if (name == "sigma2_kappa") return p.sigma2_kappa;
  if (name == "rho_gamma") return p.rho_gamma;
  if (name == "sigma_gamma") return p.sigma_gamma;
  if (name == "nu" || name == "phi") return p.dispersion.value;
  throw ConfigError("unknown parameter name: " + name);
}

std::vector<double> trace(const std::vector<ModelParams>& draws, const std::string& name) {
  std::vector<double> out;
  out.reserve(draws.size());
  for (const auto& d : draws) out.push_back(param_value(d, name));
  return out;
}

void write_chain_csv(const std::vector<ModelParams>& draws, Structure structure,
                     Likelihood lik, std::ostream& out) {
  if (draws.empty()) throw DataError("write_chain_csv: no draws");
  const auto names = param_names(structure, lik, draws.front().n_ages(),
                                 draws.front().n_years(), draws.front().n_cohorts());
  for (std::size_t i = 0; i < names.size(); ++i) out << (i ? "," : "") << names[i];
  out << "\n";
  char buf[32];
  for (const auto& d : draws) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", param_value(d, names[i]));
      out << (i ? "," : "") << buf;
    }
    out << "\n";
  }
}

std::vector<ModelParams> read_chain_csv(std::istream& in, Structure structure,
                                        Likelihood lik, int A, int T, int C) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("read_chain_csv: empty stream");
  std::vector<std::string> names;
  {
    std::istringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) names.push_back(tok);
  }
  const auto expected = param_names(structure, lik, A, T, C);
  if (names != expected) throw DataError("read_chain_csv: header does not match model");

  std::vector<ModelParams> draws;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ModelParams p;
    p.alpha.resize(A);
    p.beta.resize(A);
    p.kappa.resize(T);
    if (structure == Structure::LCC) p.gamma.resize(C);
    switch (lik) {
      case Likelihood::Poisson: p.dispersion = Dispersion::none(); break;
      case Likelihood::NegBin: p.dispersion = Dispersion::phi(1.0); break;
      default: p.dispersion = Dispersion::nu(1.0); break;
    }
    std::istringstream ss(line);
    std::string tok;
    std::size_t i = 0;
    while (std::getline(ss, tok, ',')) {
      if (i >= names.size()) throw DataError("read_chain_csv: too many columns");
      const double v = std::stod(tok);
      const std::string& name = names[i];
      const auto dot = name.find('.');
      if (dot != std::string::npos) {
        const std::string base = name.substr(0, dot);
        const int idx = std::stoi(name.substr(dot + 1)) - 1;
        if (base == "alpha") p.alpha[idx] = v;
        else if (base == "beta") p.beta[idx] = v;
        else if (base == "kappa") p.kappa[idx] = v;
        else if (base == "gamma") p.gamma[idx] = v;
        else if (base == "psi") (idx == 0 ? p.psi1 : p.psi2) = v;
      } else if (name == "rho") p.rho = v;
      else if (name == "sigma2_kappa") p.sigma2_kappa = v;
      else if (name == "rho_gamma") p.rho_gamma = v;
      else if (name == "sigma_gamma") p.sigma_gamma = v;
      else p.dispersion.value = v;
      ++i;
    }
    if (i != names.size()) throw DataError("read_chain_csv: too few columns");
    draws.push_back(std::move(p));
  }
  return draws;
}

}  // namespace cmpmort
