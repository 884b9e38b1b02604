#include "survey/estimators.hpp"

#include <algorithm>
#include <cmath>

#include "survey/compensated_sum.hpp"
#include "survey/errors.hpp"

namespace survey {

double ht_total(const Population& pop, std::span<const double> weights, const SampleDraw& draw) {
  if (weights.size() != pop.size()) throw InputError("weights and population differ in length");
  CompensatedSum acc;
  for (std::size_t i : draw.selected) {
    const double x = pop[i];
    if (weights[i] == 0.0) {
      if (x != 0.0) {
        throw InputError("selected unit " + std::to_string(i + 1) + " has zero weight");
      }
      continue;
    }
    acc += x / weights[i];
  }
  return acc.value();
}

double fixed_size_variance(const Population& pop, std::span<const double> pi,
                           const SymmetricMatrix& pi_pairs) {
  const std::size_t N = pop.size();
  if (pi.size() != N || pi_pairs.size() != N) {
    throw InputError("inclusion probabilities and population differ in length");
  }
  CompensatedSum acc;
  for (std::size_t i = 0; i < N; ++i) {
    const double ri = pop[i] / pi[i];
    for (std::size_t j = i + 1; j < N; ++j) {
      const double diff = ri - pop[j] / pi[j];
      acc += diff * diff * (pi[i] * pi[j] - pi_pairs(i, j));
    }
  }
  return acc.value();
}

double VarianceProfile::decomposition_residual() const {
  const double rebuilt = sigma2_N + theta_N * theta_N * d_N;
  const double scale = std::max(std::abs(poisson_var), std::abs(rebuilt));
  return scale > 0.0 ? (poisson_var - rebuilt) / scale : 0.0;
}

VarianceProfile variance_profile(const Population& pop, std::span<const double> p,
                                 std::span<const double> pi, std::size_t n) {
  const std::size_t N = pop.size();
  if (p.size() != N || pi.size() != N) throw InputError("weights and population differ in length");
  VarianceProfile v;
  v.sample_size = n;
  CompensatedSum d, ds, theta_num, pvar, navar, bias;
  for (std::size_t i = 0; i < N; ++i) {
    const double x = pop[i];
    if (!(p[i] > 0.0) || !(pi[i] > 0.0)) {
      throw InputError("weights must be strictly positive for the variance profile");
    }
    d += p[i] * (1.0 - p[i]);
    ds += pi[i] * (1.0 - pi[i]);
    theta_num += x * (1.0 - p[i]);
    pvar += (1.0 - p[i]) / p[i] * x * x;
    navar += (1.0 - pi[i]) / pi[i] * x * x;
    bias += std::abs(x) / pi[i];
    v.c_p = std::max(v.c_p, std::abs(x) / p[i]);
    v.c_pi = std::max(v.c_pi, std::abs(x) / pi[i]);
  }
  v.d_N = d.value();
  if (!(v.d_N > 0.0)) {
    throw DegenerateDesign("d_N = 0: every unit is included deterministically or never");
  }
  v.d_star_N = ds.value();
  v.theta_N = theta_num.value() / v.d_N;
  v.poisson_var = pvar.value();
  v.na_var = navar.value();
  v.M_N = 6.0 / v.d_N * bias.value();
  CompensatedSum s2;
  for (std::size_t i = 0; i < N; ++i) {
    const double r = pop[i] / p[i] - v.theta_N;
    s2 += p[i] * (1.0 - p[i]) * r * r;
  }
  v.sigma2_N = s2.value();
  return v;
}

VarianceProfile poisson_profile(const Population& pop, std::span<const double> p) {
  return variance_profile(pop, p, p, 0);
}

double swor_sigma2(const Population& pop, std::size_t n) {
  const double N = static_cast<double>(pop.size());
  const double nn = static_cast<double>(n);
  const double mean = pop.total() / N;
  CompensatedSum ss;
  for (double x : pop.values()) ss += (x - mean) * (x - mean);
  return (1.0 - nn / N) * (N * N / nn) * (ss.value() / N);
}

}  // namespace survey
