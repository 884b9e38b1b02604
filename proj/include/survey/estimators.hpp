#pragma once

#include <cstddef>
#include <span>

#include "survey/population.hpp"
#include "survey/symmetric_matrix.hpp"

namespace survey {

/// sum_{i in S} x_i / w_i with the 0/0 = 0 convention. Throws InputError
/// when a selected unit with x_i != 0 has zero weight.
double ht_total(const Population& pop, std::span<const double> weights, const SampleDraw& draw);

/// Exact variance of the HT estimator under a fixed-size design:
/// sum_{i<j} (x_i/pi_i - x_j/pi_j)^2 (pi_i pi_j - pi_ij).
double fixed_size_variance(const Population& pop, std::span<const double> pi,
                           const SymmetricMatrix& pi_pairs);

/// Variance quantities of a rejective design with canonical p and first-order pi.
struct VarianceProfile {
  double d_N = 0.0;          // sum p_i (1 - p_i)
  double d_star_N = 0.0;     // sum pi_i (1 - pi_i)
  double theta_N = 0.0;      // sum x_i (1 - p_i) / d_N
  double sigma2_N = 0.0;     // sum p_i (1 - p_i) (x_i/p_i - theta_N)^2
  double poisson_var = 0.0;  // sum (1 - p_i)/p_i x_i^2
  double na_var = 0.0;       // sum (1 - pi_i)/pi_i x_i^2
  double M_N = 0.0;          // (6/d_N) sum |x_i| / pi_i
  double c_p = 0.0;          // max |x_i| / p_i
  double c_pi = 0.0;         // max |x_i| / pi_i
  std::size_t sample_size = 0;

  /// poisson_var - (sigma2_N + theta_N^2 d_N), relative to poisson_var.
  double decomposition_residual() const;
};

/// Throws DegenerateDesign when d_N = 0. `n` is recorded, not used in the formulas.
VarianceProfile variance_profile(const Population& pop, std::span<const double> p,
                                 std::span<const double> pi, std::size_t n);

/// Poisson design: p doubles as pi.
VarianceProfile poisson_profile(const Population& pop, std::span<const double> p);

/// Closed form of sigma2_N for SWOR: (1 - n/N)(N^2/n) * (population variance).
double swor_sigma2(const Population& pop, std::size_t n);

}  // namespace survey
