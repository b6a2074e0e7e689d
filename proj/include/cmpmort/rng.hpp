#ifndef CMPMORT_RNG_HPP
#define CMPMORT_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace cmpmort {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic random stream built on mt19937_64.  All variate generators
// are hand-rolled from raw 64-bit draws so that output is identical across
// standard library implementations.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  // Substream for worker i, decorrelated from the base seed.
  static RngStream derive(std::uint64_t base, std::uint64_t index) {
    return RngStream(splitmix64(base ^ splitmix64(index + 1)));
  }

  std::uint64_t raw() { return gen_(); }

  // uniform on [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  // uniform on (0, 1), never exactly 0 or 1
  double uniform_pos() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }

  // standard normal, Box-Muller (no spare kept)
  double normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  // Poisson(lambda): sequential inverse CDF for small means, Hormann's PTRS
  // transformed rejection for large ones.
  long poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    if (lambda < 30.0) {
      double p = std::exp(-lambda);
      double cdf = p;
      const double u = uniform();
      long k = 0;
      while (cdf < u && k < 10000) {
        ++k;
        p *= lambda / static_cast<double>(k);
        cdf += p;
      }
      return k;
    }
    const double b = 0.931 + 2.53 * std::sqrt(lambda);
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    const double log_lambda = std::log(lambda);
    for (;;) {
      double u = uniform() - 0.5;
      double v = uniform();
      const double us = 0.5 - std::fabs(u);
      const double kf = std::floor((2.0 * a / us + b) * u + lambda + 0.43);
      if (us >= 0.07 && v <= v_r) return static_cast<long>(kf);
      if (kf < 0.0 || (us < 0.013 && v > us)) continue;
      const long k = static_cast<long>(kf);
      if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
          kf * log_lambda - lambda - std::lgamma(kf + 1.0)) {
        return k;
      }
    }
  }

  // Gamma(shape, scale), Marsaglia-Tsang
  double gamma(double shape, double scale) {
    if (shape < 1.0) {
      const double u = uniform_pos();
      return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_pos();
      if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
        return d * v * scale;
      }
    }
  }

private:
  std::mt19937_64 gen_;
};

}  // namespace cmpmort

#endif
