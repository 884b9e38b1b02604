#pragma once

// Exact Poisson-binomial machinery: the law of the size of a Poisson sample,
// and from it the first- and second-order inclusion probabilities of the
// rejective (conditional Poisson) design of fixed size n.
//
// Every leave-one-out quantity is built by multiplying Bernoulli factors in,
// never by dividing one out, so results stay accurate when p_i is near 1/2.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "survey/symmetric_matrix.hpp"

namespace survey {

/// Arithmetic used by the dynamic programs. `automatic` selects log-domain
/// accumulation above kLogDomainThreshold units, linear space otherwise.
enum class Arithmetic { automatic, linear, log };

inline constexpr std::size_t kLogDomainThreshold = 2000;

/// probs[k] = P{sum_i eps_i = k} for independent eps_i ~ Bernoulli(p_i).
struct PmfTable {
  std::vector<double> probs;

  double operator[](std::size_t k) const { return k < probs.size() ? probs[k] : 0.0; }
  std::size_t size() const { return probs.size(); }
};

struct RejectiveInclusions {
  std::vector<double> first_order;
  SymmetricMatrix second_order;  // diagonal holds first_order
  std::size_t sample_size = 0;
};

/// O(N^2) convolution. Entries of `p` must lie in [0,1].
PmfTable pmf_table(std::span<const double> p, Arithmetic arithmetic = Arithmetic::automatic);

/// pi_i = p_i B_{-i}(n-1) / B(n). Entries of `p` in [0,1]; a unit with
/// p_i = 1 is always included. Throws DegenerateDesign when B(n) = 0.
std::vector<double> first_order_inclusion(std::span<const double> p, std::size_t n,
                                          Arithmetic arithmetic = Arithmetic::automatic);

/// pi_ij = p_i p_j B_{-ij}(n-2) / B(n), diagonal set to pi_i. Costs
/// O(N^2 n log N); intended for the population sizes where an N x N table
/// is itself reasonable.
SymmetricMatrix second_order_inclusion(std::span<const double> p, std::size_t n,
                                       Arithmetic arithmetic = Arithmetic::automatic);

RejectiveInclusions rejective_inclusions(std::span<const double> p, std::size_t n,
                                         Arithmetic arithmetic = Arithmetic::automatic);

/// Rescales the odds p_i/(1-p_i) by a common factor so that the result sums
/// to n. The rejective design is unchanged by such rescaling, so this maps any
/// representation onto the canonical one. Requires 0 < n < #{i : p_i > 0}
/// when some p_i < 1.
std::vector<double> canonicalize(std::span<const double> p, std::size_t n);

struct CanonicalSolverOptions {
  std::size_t max_iterations = 500;
  double stop_tolerance = 1e-13;    // iterate until max |pi(p) - target| falls below
  double accept_tolerance = 1e-8;   // otherwise fail when above this
  double initial_damping = 0.5;
};

struct CanonicalSolution {
  std::vector<double> p;              // forced units carry p_i = 1
  std::vector<std::size_t> forced;    // units with target pi_i = 1
  std::size_t iterations = 0;
  double residual = 0.0;              // max-norm of pi(p) - target
  bool renormalized = false;          // target rescaled to sum exactly to n
  std::vector<std::string> warnings;
};

/// Finds the canonical p (sum p = n) whose rejective design has first-order
/// inclusion probabilities `target`. Damped fixed point on log-odds started
/// from Hajek's first-order relation, with a monotone-residual safeguard.
/// Targets summing to n within 1e-6 (but not 1e-9) are rescaled with a warning.
CanonicalSolution solve_canonical(std::span<const double> target, std::size_t n,
                                  const CanonicalSolverOptions& options = {});

/// Both sides of Hajek's relations between canonical p and first-order pi,
/// and the bias lemma |1/pi_i - 1/p_i| <= (6/d_N)(1-pi_i)/pi_i.
struct HajekDiagnostics {
  double d_N = 0.0;
  double d_star_N = 0.0;
  double pi_tilde = 0.0;
  double p_tilde = 0.0;
  // Remainders r such that pi(1-p) = p(1-pi)(1 - (pi~ - pi_i)/d*_N + r), and
  // p(1-pi) = pi(1-p)(1 - (p~ - p_i)/d_N + r) respectively.
  std::vector<double> rel1_residual;
  std::vector<double> rel2_residual;
  double max_scaled_residual = 0.0;  // max |r| * d_N over both relations
  std::vector<double> bias_gap;      // |1/pi_i - 1/p_i|
  std::vector<double> bias_radius;   // (6/d_N)(1-pi_i)/pi_i
  bool bias_lemma_applicable = false;  // d_N >= 1
  bool bias_lemma_holds = true;
};

HajekDiagnostics hajek_residuals(std::span<const double> p, std::span<const double> pi,
                                 std::size_t n);

}  // namespace survey
