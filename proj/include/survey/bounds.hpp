#pragma once

// Bennett/Bernstein tail bounds for Horvitz-Thompson deviations under
// Poisson and rejective designs, and their inversion into confidence radii.
//
// Constant-free bounds (Poisson, negative association) are valid as stated.
// The rejective bounds carry a universal constant C whose value is unknown;
// they are evaluated with a caller-supplied C (default 1) and flagged.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "survey/estimators.hpp"

namespace survey {

enum class KernelShape { bennett, bernstein };

enum class BoundKind {
  poisson_bennett,
  poisson_bernstein,
  na_bennett,
  na_bernstein,
  rejective_bennett,
  rejective_bernstein,
  ht_pi_bennett,
  ht_pi_bernstein,
};

const char* to_string(BoundKind kind);
BoundKind bound_kind_from_string(const std::string& name);
KernelShape shape_of(BoundKind kind);
/// True for bounds proved with explicit constants (Poisson and NA families).
bool constant_free(BoundKind kind);

/// H(x) = (1+x) log(1+x) - x for x >= 0, accurate near 0.
double bennett_h(double x);

/// exp(-(v/c^2) H(c t / v)). v = 0 gives the degenerate limit (1 at t = 0, else 0).
double bennett_kernel(double t, double variance, double envelope);
/// exp(-t^2 / (2 (v + c t / 3))).
double bernstein_kernel(double t, double variance, double envelope);
double kernel(KernelShape shape, double t, double variance, double envelope);

struct BoundConstants {
  double C = 1.0;  // multiplicative universal constant of the rejective bounds
  double D = 1.0;  // minimal d_N for the rejective bounds
};

enum BoundFlag : std::uint32_t {
  kBoundOk = 0,
  kUncalibratedConstant = 1u << 0,  // value uses a caller-chosen C
  kPreconditionViolated = 1u << 1,  // min(d_N, d*_N) < 1 or d_N < D
  kBelowBiasRadius = 1u << 2,       // t <= M_N; value is the trivial C
};

struct BoundValue {
  double value = 1.0;     // raw bound; NA bounds reach 2 at t = 0
  std::uint32_t flags = kBoundOk;

  double reported() const { return value < 1.0 ? value : 1.0; }
};

/// P{HT_p - S_N > t} under Poisson sampling: kernel(t; poisson_var, c_p).
BoundValue poisson_tail_bound(const VarianceProfile& profile, double t, KernelShape shape);
/// P{HT_pi - S_N > t} under a negatively associated design:
/// 2 kernel(t/2; na_var, c_pi).
BoundValue na_tail_bound(const VarianceProfile& profile, double t, KernelShape shape);
/// P{HT_p - S_N > t} under rejective sampling: C kernel(t; sigma2_N, c_p).
BoundValue rejective_tail_bound(const VarianceProfile& profile, double t, KernelShape shape,
                                const BoundConstants& constants = {});
/// P{HT_pi - S_N > t} under rejective sampling: the rejective bound at t - M_N.
BoundValue ht_pi_tail_bound(const VarianceProfile& profile, double t, KernelShape shape,
                            const BoundConstants& constants = {});

BoundValue evaluate_bound(BoundKind kind, const VarianceProfile& profile, double t,
                          const BoundConstants& constants = {});

/// Exponent -log(kernel) of the bound, without its multiplicative constant.
double bound_exponent(BoundKind kind, const VarianceProfile& profile, double t);

struct BoundCurve {
  BoundKind kind;
  std::vector<double> thresholds;
  std::vector<double> values;  // raw values
  std::vector<std::uint32_t> flags;
  BoundConstants constants;
};

BoundCurve bound_curve(BoundKind kind, const VarianceProfile& profile,
                       std::span<const double> thresholds, const BoundConstants& constants = {});

/// Linear grid of `count` points from lo to hi inclusive.
std::vector<double> linear_grid(double lo, double hi, std::size_t count);

/// Smallest t >= 0 (to 1e-10 relative) with bound(t) <= delta, for a
/// non-increasing bound. Returns 0 when delta >= bound(0).
double confidence_radius(const std::function<double(double)>& bound, double delta);

/// Radius r with P{|HT - S_N| > r} <= delta: inverts min(1, 2 bound(t)).
/// The lower tail reuses the bound of -x, whose profile quantities coincide.
double two_sided_radius(BoundKind kind, const VarianceProfile& profile, double delta,
                        const BoundConstants& constants = {});

}  // namespace survey
