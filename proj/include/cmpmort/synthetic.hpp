#ifndef CMPMORT_SYNTHETIC_HPP
#define CMPMORT_SYNTHETIC_HPP

#include <variant>
#include <vector>

#include "cmpmort/model.hpp"

namespace cmpmort {

// Ground-truth recipe for a generated dataset.  Exposure is either one
// constant for every cell or one value per age.
struct SyntheticSpec {
  ModelParams true_params;
  Likelihood likelihood = Likelihood::Poisson;
  std::variant<double, std::vector<double>> exposure = 1e5;
  std::uint64_t seed = 1;
};

// Documented default truth used by the bundled tests and the demo CLI runs:
//   alpha_x = -7.5 + 1.6 u + 0.4 u^2 with u = x/(A-1)   (log-rate age curve)
//   beta_x  = 1/A
//   kappa_t = -0.3 (t - (T+1)/2)                        (centered linear drift)
//   gamma_c = 0.1 sin(2 pi c / C) projected onto the constraint space (LCC)
// Hyperparameters are set to the values used when projecting these paths.
ModelParams make_default_true_params(int A, int T, Structure structure,
                                     Likelihood likelihood, double dispersion_value);

// Draws d_xt from the tagged likelihood at mu_xt implied by true_params.
// Byte-for-byte reproducible from the spec.
MortalityDataset simulate(const SyntheticSpec& spec, int A, int T);

// Convenience wrapper: simulate A x (T + holdout_years) and split the last
// holdout_years columns into dataset.holdout.
MortalityDataset simulate_with_holdout(const SyntheticSpec& spec, int A, int T,
                                       int holdout_years);

}  // namespace cmpmort

#endif
