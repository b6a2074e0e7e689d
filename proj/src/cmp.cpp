#include "cmpmort/cmp.hpp"

#include <atomic>
#include <cmath>
#include <limits>

#include "cmpmort/errors.hpp"
#include "cmpmort/math_utils.hpp"

namespace cmpmort::cmp {

namespace {

std::atomic<std::uint64_t> clamp_counter{0};

// Index of the largest series term, floor(lambda^{1/nu}).
long series_mode(const CmpParams& p, long term_cap) {
  if (p.nu == 0.0) return 0;  // terms lambda^j strictly decreasing for lambda < 1
  const double log_mode = std::log(p.lambda) / p.nu;
  if (log_mode > std::log(static_cast<double>(term_cap))) {
    throw NumericError("cmp: series mode exceeds term cap");
  }
  const long m = static_cast<long>(std::floor(std::exp(log_mode)));
  return m < 0 ? 0 : m;
}

struct SeriesSums {
  long double s0 = 0.0L;  // sum of terms scaled by exp(-log_peak)
  long double s1 = 0.0L;  // sum of (j - mode) * term
  long double s2 = 0.0L;  // sum of (j - mode)^2 * term
  double log_peak = 0.0;
  long mode = 0;
  long terms = 0;
};

// One pass over the series, outward from the mode in both directions.  Terms
// are scaled by the peak term so every addend is <= 1; accumulation is in
// long double so the stated tolerances hold with headroom.
SeriesSums sum_series(const CmpParams& p, double rel_tol, long term_cap) {
  const double log_lambda = std::log(p.lambda);
  SeriesSums out;
  out.mode = series_mode(p, term_cap);
  out.log_peak = out.mode * log_lambda - p.nu * log_factorial(out.mode);

  out.s0 = 1.0L;  // the mode term itself
  out.terms = 1;

  // Downward: t_{j-1} = t_j * j^nu / lambda, non-increasing for j <= mode.
  double logt = 0.0;  // relative to peak
  for (long j = out.mode; j > 0; --j) {
    logt -= log_lambda - p.nu * log_int(j);
    const double w = std::exp(logt);
    const long d = (j - 1) - out.mode;
    out.s0 += w;
    out.s1 += w * d;
    out.s2 += w * static_cast<double>(d) * d;
    ++out.terms;
    // everything below j-1 is bounded by (j-1) further copies of w
    if (w * static_cast<double>(j) < 0.05 * rel_tol * static_cast<double>(out.s0)) break;
  }

  // Upward: t_{j+1} = t_j * lambda / (j+1)^nu, strictly decreasing past the
  // mode; stop once the geometric tail bound drops below tolerance.
  logt = 0.0;
  for (long j = out.mode + 1;; ++j) {
    if (j - out.mode > term_cap) throw NumericError("cmp: term cap exceeded in series tail");
    logt += log_lambda - p.nu * log_int(j);
    const double w = std::exp(logt);
    const long d = j - out.mode;
    out.s0 += w;
    out.s1 += w * d;
    out.s2 += w * static_cast<double>(d) * d;
    ++out.terms;
    const double r = std::exp(log_lambda - p.nu * log_int(j + 1));
    if (r < 1.0 && w * r / (1.0 - r) < 0.05 * rel_tol * static_cast<double>(out.s0)) break;
  }
  return out;
}

}  // namespace

void validate(const CmpParams& p) {
  if (!(p.lambda > 0.0) || !std::isfinite(p.lambda)) {
    throw NumericError("cmp: lambda must be positive and finite");
  }
  if (!(p.nu >= 0.0) || !std::isfinite(p.nu)) {
    throw NumericError("cmp: nu must be non-negative and finite");
  }
  if (p.nu == 0.0 && p.lambda >= 1.0) {
    throw NumericError("cmp: divergent series, nu == 0 requires lambda < 1");
  }
}

ZEvalResult log_normalizer(const CmpParams& p, double rel_tol, long term_cap) {
  validate(p);
  if (!(rel_tol > 0.0) || rel_tol > 1e-6) throw NumericError("cmp: rel_tol out of range");
  if (p.nu == 0.0) {
    // geometric series in closed form: Z = 1 / (1 - lambda)
    return {-std::log1p(-p.lambda), 1, ZMethod::ExactSeries};
  }
  const SeriesSums s = sum_series(p, rel_tol, term_cap);
  const double log_z = s.log_peak + static_cast<double>(std::log(s.s0));
  return {log_z, s.terms, ZMethod::ExactSeries};
}

ZEvalResult log_normalizer_asymptotic(const CmpParams& p) {
  validate(p);
  if (p.nu == 0.0) return {-std::log1p(-p.lambda), 1, ZMethod::Asymptotic};
  const double t = std::pow(p.lambda, 1.0 / p.nu);
  const double log_z = p.nu * t - 0.5 * (p.nu - 1.0) * std::log(t) -
                       0.5 * (p.nu - 1.0) * std::log(2.0 * M_PI) - 0.5 * std::log(p.nu);
  return {log_z, 0, ZMethod::Asymptotic};
}

double log_pmf(long y, const CmpParams& p) {
  if (y < 0) return -std::numeric_limits<double>::infinity();
  if (p.nu == 0.0) {
    validate(p);
    return std::log1p(-p.lambda) + y * std::log(p.lambda);
  }
  const ZEvalResult z = log_normalizer(p);
  return y * std::log(p.lambda) - p.nu * log_factorial(y) - z.log_z;
}

Moments moments_exact(const CmpParams& p, double rel_tol) {
  validate(p);
  if (p.nu == 0.0) {
    // geometric on {0,1,...} with success probability 1 - lambda
    const double q = p.lambda;
    return {q / (1.0 - q), q / ((1.0 - q) * (1.0 - q))};
  }
  const SeriesSums s = sum_series(p, rel_tol, kDefaultTermCap);
  const double m1 = static_cast<double>(s.s1 / s.s0);
  const double m2 = static_cast<double>(s.s2 / s.s0);
  const double mean = static_cast<double>(s.mode) + m1;
  double variance = m2 - m1 * m1;
  if (variance <= 0.0) variance = std::numeric_limits<double>::min();
  return {mean, variance};
}

Moments moments_approx(const CmpParams& p) {
  validate(p);
  if (p.nu <= 0.0) throw NumericError("cmp: moments_approx requires nu > 0");
  const double t = std::pow(p.lambda, 1.0 / p.nu);
  return {t + 0.5 / p.nu - 0.5, t / p.nu};
}

double pmf_ratio(long y, const CmpParams& p) {
  if (y < 1) throw NumericError("cmp: pmf_ratio requires y >= 1");
  return std::exp(p.nu * log_int(y)) / p.lambda;
}

long sample(const CmpParams& p, RngStream& rng) {
  validate(p);
  const double log_z = log_normalizer(p).log_z;
  const double u = rng.uniform();
  if (u <= 0.0) return 0;
  const double log_lambda = std::log(p.lambda);
  const long mode = series_mode(p, kDefaultTermCap);
  const double log_peak = mode * log_lambda - p.nu * log_factorial(mode);

  // CDF accumulation scaled by the peak term.  Far-left-tail terms that would
  // underflow the scaled representation are folded in via log space first.
  const double target = u * std::exp(log_z - log_peak);
  double log_term = -log_peak;  // log(term_0 / peak)
  long y = 0;
  double log_cdf_left = log_term;
  while (log_cdf_left < -45.0 && y < mode) {
    ++y;
    log_term += log_lambda - p.nu * log_int(y);
    log_cdf_left = log_add_exp(log_cdf_left, log_term);
  }
  double cdf = std::exp(log_cdf_left);
  double term = std::exp(log_term);
  while (cdf < target) {
    ++y;
    term *= std::exp(log_lambda - p.nu * log_int(y));
    cdf += term;
    // Past the mode terms shrink monotonically; once they no longer move the
    // CDF in double precision the current y carries all remaining mass.
    if (y > mode && term < 1e-17 * cdf) break;
    if (y > kDefaultTermCap) throw NumericError("cmp: sample exceeded term cap");
  }
  return y;
}

double mean_matched_lambda(double mean_target, double nu) {
  double base = mean_target + 0.5 - 0.5 / nu;
  if (base < 1e-10) {
    base = 1e-10;
    clamp_counter.fetch_add(1, std::memory_order_relaxed);
  }
  return std::pow(base, nu);
}

std::uint64_t mean_match_clamp_count() {
  return clamp_counter.load(std::memory_order_relaxed);
}

}  // namespace cmpmort::cmp
