#ifndef CMPMORT_MATH_UTILS_HPP
#define CMPMORT_MATH_UTILS_HPP

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace cmpmort {

// log(k) for integer k >= 1, backed by a thread-local table so the CMP
// series evaluation does not pay a transcendental call per term.
double log_int(long k);

inline double log_factorial(long k) { return std::lgamma(static_cast<double>(k) + 1.0); }

inline double log_add_exp(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = a > b ? a : b;
  return m + std::log1p(std::exp(-(a > b ? a - b : b - a)));
}

// Regularized lower incomplete gamma P(a, x); series for x < a+1, continued
// fraction otherwise.
double gamma_p(double a, double x);

inline double chi_squared_cdf(double x, double df) { return gamma_p(0.5 * df, 0.5 * x); }

// Inverse of chi_squared_cdf in x, bisection refined by Newton steps.
double chi_squared_quantile(double p, double df);

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / 1.4142135623730951); }

double mean_of(std::span<const double> xs);
double variance_of(std::span<const double> xs);  // n-1 denominator

// Type-7 quantile of an ascending-sorted sample.
double quantile_sorted(std::span<const double> sorted, double p);

// One-sided sign test: P[X >= successes] for X ~ Binomial(trials, 1/2).
double sign_test_pvalue(int successes, int trials);

// Empirical two-sample style KS distance between sorted sample values and a
// reference CDF evaluated on the sample points.
double ks_distance(std::vector<double> sample, const std::vector<double>& grid,
                   const std::vector<double>& grid_cdf);

}  // namespace cmpmort

#endif
