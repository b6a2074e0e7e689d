#include "cmpmort/math_utils.hpp"

#include <algorithm>
#include <limits>

#include "cmpmort/errors.hpp"

namespace cmpmort {

double log_int(long k) {
  thread_local std::vector<double> table{0.0, 0.0};  // log 0 unused, log 1 = 0
  const auto idx = static_cast<std::size_t>(k);
  if (idx >= table.size()) {
    std::size_t target = std::max(idx + 1, table.size() * 2);
    table.reserve(target);
    for (std::size_t j = table.size(); j < target; ++j) {
      table.push_back(std::log(static_cast<double>(j)));
    }
  }
  return table[idx];
}

namespace {

double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 1000; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_q_contfrac(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double gamma_p(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw NumericError("gamma_p: invalid arguments");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_contfrac(a, x);
}

double chi_squared_quantile(double p, double df) {
  if (p <= 0.0 || p >= 1.0 || df <= 0.0) {
    throw NumericError("chi_squared_quantile: invalid arguments");
  }
  double lo = 0.0;
  double hi = df + 20.0 * std::sqrt(2.0 * df) + 100.0;
  while (chi_squared_cdf(hi, df) < p) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (chi_squared_cdf(mid, df) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-10 * (1.0 + hi)) break;
  }
  return 0.5 * (lo + hi);
}

double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double variance_of(std::span<const double> xs) {
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw NumericError("quantile_sorted: empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - std::floor(h)) * (sorted[hi] - sorted[lo]);
}

double sign_test_pvalue(int successes, int trials) {
  if (trials <= 0) return 1.0;
  double p = 0.0;
  for (int k = successes; k <= trials; ++k) {
    const double log_choose = std::lgamma(trials + 1.0) - std::lgamma(k + 1.0) -
                              std::lgamma(trials - k + 1.0);
    p += std::exp(log_choose - trials * std::log(2.0));
  }
  return std::min(p, 1.0);
}

double ks_distance(std::vector<double> sample, const std::vector<double>& grid,
                   const std::vector<double>& grid_cdf) {
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double ks = 0.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto it = std::upper_bound(sample.begin(), sample.end(), grid[g]);
    const double emp = static_cast<double>(it - sample.begin()) / n;
    ks = std::max(ks, std::fabs(emp - grid_cdf[g]));
  }
  return ks;
}

}  // namespace cmpmort
