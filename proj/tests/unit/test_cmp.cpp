#include <doctest.h>

#include <cmath>
#include <vector>

#include "cmpmort/cmp.hpp"
#include "cmpmort/errors.hpp"
#include "cmpmort/math_utils.hpp"
#include "oracles.hpp"

using namespace cmpmort;

namespace {

double poisson_log_pmf(long y, double lambda) {
  return y * std::log(lambda) - lambda - log_factorial(y);
}

}  // namespace

TEST_SUITE("cmp") {

TEST_CASE("log_normalizer special cases") {
  CHECK(cmp::log_normalizer({2.0, 1.0}).log_z == doctest::Approx(2.0).epsilon(1e-13));
  CHECK(cmp::log_normalizer({0.5, 0.0}).log_z ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));

  const auto z = cmp::log_normalizer({2.0, 1.5});
  const double want = static_cast<double>(oracles::direct_log_z(2.0, 1.5, 200));
  CHECK(z.log_z == doctest::Approx(want).epsilon(1e-12));
  CHECK(z.terms_used >= 1);
  CHECK(z.method == cmp::ZMethod::ExactSeries);
}

TEST_CASE("log_normalizer rejects invalid parameters") {
  CHECK_THROWS_AS(cmp::log_normalizer({1.0, 0.0}), NumericError);   // divergent series
  CHECK_THROWS_AS(cmp::log_normalizer({1.5, 0.0}), NumericError);
  CHECK_THROWS_AS(cmp::log_normalizer({-1.0, 1.0}), NumericError);
  CHECK_THROWS_AS(cmp::log_normalizer({2.0, -0.1}), NumericError);
  // mode lambda^{1/nu} = 10^100 blows past the term cap
  CHECK_THROWS_AS(cmp::log_normalizer({10.0, 0.01}), NumericError);
}

TEST_CASE("log_pmf closed-form checks") {
  CHECK(cmp::log_pmf(3, {2.0, 1.0}) ==
        doctest::Approx(3 * std::log(2.0) - 2.0 - std::log(6.0)).epsilon(1e-12));
  const cmp::CmpParams p{1.7, 0.8};
  CHECK(cmp::log_pmf(0, p) == doctest::Approx(-cmp::log_normalizer(p).log_z));
  CHECK(cmp::log_pmf(2, {0.5, 0.0}) == doctest::Approx(std::log(0.125)).epsilon(1e-14));
}

TEST_CASE("moments_exact against closed forms and the series oracle") {
  auto m = cmp::moments_exact({2.0, 1.0});
  CHECK(m.mean == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(m.variance == doctest::Approx(2.0).epsilon(1e-11));

  m = cmp::moments_exact({0.5, 0.0});
  CHECK(m.mean == doctest::Approx(1.0));
  CHECK(m.variance == doctest::Approx(2.0));

  // lambda chosen so lambda^{1/nu} = 99.5; mean-matching target is 100
  m = cmp::moments_exact({std::sqrt(99.5), 0.5});
  CHECK(std::fabs(m.mean - 100.0) / 100.0 < 0.01);

  const auto want = oracles::direct_moments(std::sqrt(99.5), 0.5, 800);
  CHECK(m.mean == doctest::Approx(static_cast<double>(want.mean)).epsilon(1e-10));
  CHECK(m.variance == doctest::Approx(static_cast<double>(want.variance)).epsilon(1e-8));
}

TEST_CASE("moments_approx formula and accuracy") {
  auto m = cmp::moments_approx({100.0, 1.0});
  CHECK(m.mean == doctest::Approx(100.0));
  CHECK(m.variance == doctest::Approx(100.0));

  m = cmp::moments_approx({std::pow(99.5, 0.5), 0.5});
  CHECK(m.mean == doctest::Approx(99.5 + 1.0 - 0.5).epsilon(1e-12));

  const cmp::CmpParams p{50.0, 2.0};
  const auto approx = cmp::moments_approx(p);
  CHECK(approx.mean == doctest::Approx(std::sqrt(50.0) + 0.25 - 0.5).epsilon(1e-12));
  // relative error of the approximation is small once lambda^{1/nu} >= 10
  const cmp::CmpParams big{std::pow(25.0, 2.0), 2.0};
  const auto ex = cmp::moments_exact(big);
  const auto ap = cmp::moments_approx(big);
  CHECK(std::fabs(ap.mean - ex.mean) / ex.mean < 0.01);
}

TEST_CASE("pmf_ratio") {
  CHECK(cmp::pmf_ratio(4, {2.0, 1.0}) == doctest::Approx(2.0));
  CHECK(cmp::pmf_ratio(3, {0.5, 0.0}) == doctest::Approx(2.0));
  CHECK(cmp::pmf_ratio(5, {3.0, 1.5}) == doctest::Approx(std::pow(5.0, 1.5) / 3.0));

  const cmp::CmpParams p{2.3, 0.7};
  for (long y : {1L, 2L, 5L, 9L}) {
    const double via_pmf = std::exp(cmp::log_pmf(y - 1, p) - cmp::log_pmf(y, p));
    CHECK(cmp::pmf_ratio(y, p) == doctest::Approx(via_pmf).epsilon(1e-12));
  }
}

TEST_CASE("normalization over the dispersion grid") {
  const double nus[] = {0.1, 0.25, 0.5, 1.0, 2.0, 5.0};
  const double targets[] = {1.0, 10.0, 100.0};
  for (double nu : nus) {
    for (double target : targets) {
      const cmp::CmpParams p{std::pow(target, nu), nu};
      double sum = 0.0;
      double prev = 0.0;
      for (long y = 0; y < 2000000; ++y) {
        const double v = std::exp(cmp::log_pmf(y, p));
        sum += v;
        if (y > static_cast<long>(target) && v < 1e-18 * sum && prev < 1e-18 * sum) break;
        prev = v;
      }
      CHECK(sum <= 1.0 + 1e-12);
      CHECK(sum >= 1.0 - 1e-9);
    }
  }
}

TEST_CASE("Poisson and geometric reductions") {
  for (double lambda : {1.0, 10.0, 100.0}) {
    const cmp::CmpParams p{lambda, 1.0};
    for (long y = 0; y <= static_cast<long>(10 * lambda); ++y) {
      CHECK(std::fabs(cmp::log_pmf(y, p) - poisson_log_pmf(y, lambda)) < 1e-12);
    }
  }
  for (double lambda : {0.1, 0.5, 0.9}) {
    const cmp::CmpParams p{lambda, 0.0};
    for (long y = 0; y <= 50; ++y) {
      const double want = std::log1p(-lambda) + y * std::log(lambda);
      CHECK(std::fabs(cmp::log_pmf(y, p) - want) < 1e-12);
    }
  }
}

TEST_CASE("tail decay regimes: nu < 1 has the heavier tail") {
  // same mode 20 under both dispersion levels; compare ratios at 2x the mode
  const cmp::CmpParams over{std::pow(20.0, 0.5), 0.5};
  const cmp::CmpParams under{std::pow(20.0, 2.0), 2.0};
  const long y = 40;
  const double ratio_over = 1.0 / cmp::pmf_ratio(y + 1, over);
  const double ratio_under = 1.0 / cmp::pmf_ratio(y + 1, under);
  CHECK(ratio_over > ratio_under);
}

TEST_CASE("sampler matches the distribution") {
  RngStream rng(20240817);

  SUBCASE("Poisson case mean") {
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += static_cast<double>(cmp::sample({2.0, 1.0}, rng));
    const double mean = sum / n;
    const double se = std::sqrt(2.0 / n);
    CHECK(std::fabs(mean - 2.0) < 3.0 * se);
  }

  SUBCASE("geometric case chi-square GOF at the 1% level") {
    const int n = 100000;
    std::vector<long> counts(12, 0);
    for (int i = 0; i < n; ++i) {
      const long y = cmp::sample({0.5, 0.0}, rng);
      ++counts[std::min<long>(y, 11)];
    }
    double chi2 = 0.0;
    for (int k = 0; k < 12; ++k) {
      const double p = k < 11 ? 0.5 * std::pow(0.5, k) : std::pow(0.5, 11);
      const double expect = n * p;
      chi2 += (counts[k] - expect) * (counts[k] - expect) / expect;
    }
    CHECK(chi2 < chi_squared_quantile(0.99, 11));
  }

  SUBCASE("overdispersed case: variance/mean near 1/nu = 2") {
    const cmp::CmpParams p{cmp::mean_matched_lambda(10.0, 0.5), 0.5};
    const int n = 100000;
    std::vector<double> draws(n);
    for (int i = 0; i < n; ++i) draws[i] = static_cast<double>(cmp::sample(p, rng));
    const double ratio = variance_of(draws) / mean_of(draws);
    CHECK(ratio > 1.8);
    CHECK(ratio < 2.2);
  }

  SUBCASE("sample mean within 4 standard errors of moments_exact") {
    const cmp::CmpParams cases[] = {{3.0, 1.3}, {std::pow(50.0, 0.4), 0.4}, {0.7, 0.0}};
    for (const auto& p : cases) {
      const auto m = cmp::moments_exact(p);
      const int n = 100000;
      double sum = 0.0;
      for (int i = 0; i < n; ++i) sum += static_cast<double>(cmp::sample(p, rng));
      const double se = std::sqrt(m.variance / n);
      CHECK(std::fabs(sum / n - m.mean) < 4.0 * se);
    }
  }
}

TEST_CASE("mean matching guard clamps and counts") {
  const auto before = cmp::mean_match_clamp_count();
  // nu small enough that m + 1/2 - 1/(2 nu) < 0
  const double lam = cmp::mean_matched_lambda(0.2, 0.1);
  CHECK(cmp::mean_match_clamp_count() == before + 1);
  CHECK(lam == doctest::Approx(std::pow(1e-10, 0.1)));
  // benign case leaves the counter alone
  cmp::mean_matched_lambda(100.0, 0.5);
  CHECK(cmp::mean_match_clamp_count() == before + 1);
}

TEST_CASE("asymptotic normalizer is close for large mode but tagged") {
  const cmp::CmpParams p{std::pow(200.0, 0.7), 0.7};
  const auto exact = cmp::log_normalizer(p);
  const auto approx = cmp::log_normalizer_asymptotic(p);
  CHECK(approx.method == cmp::ZMethod::Asymptotic);
  CHECK(std::fabs(approx.log_z - exact.log_z) / std::fabs(exact.log_z) < 1e-2);
}

}  // TEST_SUITE
