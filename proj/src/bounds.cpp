#include "survey/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "survey/errors.hpp"

namespace survey {

const char* to_string(BoundKind kind) {
  switch (kind) {
    case BoundKind::poisson_bennett: return "poisson-bennett";
    case BoundKind::poisson_bernstein: return "poisson-bernstein";
    case BoundKind::na_bennett: return "na-bennett";
    case BoundKind::na_bernstein: return "na-bernstein";
    case BoundKind::rejective_bennett: return "rejective-bennett";
    case BoundKind::rejective_bernstein: return "rejective-bernstein";
    case BoundKind::ht_pi_bennett: return "ht-pi-bennett";
    case BoundKind::ht_pi_bernstein: return "ht-pi-bernstein";
  }
  return "?";
}

BoundKind bound_kind_from_string(const std::string& name) {
  for (auto k : {BoundKind::poisson_bennett, BoundKind::poisson_bernstein, BoundKind::na_bennett,
                 BoundKind::na_bernstein, BoundKind::rejective_bennett,
                 BoundKind::rejective_bernstein, BoundKind::ht_pi_bennett,
                 BoundKind::ht_pi_bernstein}) {
    if (name == to_string(k)) return k;
  }
  throw InputError("unknown bound kind '" + name + "'");
}

KernelShape shape_of(BoundKind kind) {
  switch (kind) {
    case BoundKind::poisson_bennett:
    case BoundKind::na_bennett:
    case BoundKind::rejective_bennett:
    case BoundKind::ht_pi_bennett:
      return KernelShape::bennett;
    default:
      return KernelShape::bernstein;
  }
}

bool constant_free(BoundKind kind) {
  switch (kind) {
    case BoundKind::poisson_bennett:
    case BoundKind::poisson_bernstein:
    case BoundKind::na_bennett:
    case BoundKind::na_bernstein:
      return true;
    default:
      return false;
  }
}

double bennett_h(double x) {
  if (x < 0.1) {
    // H(x) = x^2 sum_{j>=0} (-x)^j / ((j+1)(j+2)); terms past j = 16 are below
    // 1e-17 relative. The closed form loses about log10(1/x) digits here.
    double acc = 0.0;
    for (int j = 16; j >= 0; --j) acc = 1.0 / ((j + 1.0) * (j + 2.0)) - x * acc;
    return x * x * acc;
  }
  return (1.0 + x) * std::log1p(x) - x;
}

namespace {

double kernel_exponent(KernelShape shape, double t, double v, double c) {
  if (t <= 0.0) return 0.0;
  if (!(v > 0.0)) return std::numeric_limits<double>::infinity();
  if (shape == KernelShape::bennett) {
    if (!(c > 0.0)) return t * t / (2.0 * v);  // Gaussian limit of Bennett as c -> 0
    return v / (c * c) * bennett_h(c * t / v);
  }
  return t * t / (2.0 * (v + c * t / 3.0));
}

std::uint32_t rejective_flags(const VarianceProfile& profile, const BoundConstants& constants) {
  std::uint32_t f = kUncalibratedConstant;
  if (std::min(profile.d_N, profile.d_star_N) < 1.0 || profile.d_N < constants.D) {
    f |= kPreconditionViolated;
  }
  return f;
}

}  // namespace

double bennett_kernel(double t, double variance, double envelope) {
  return std::exp(-kernel_exponent(KernelShape::bennett, t, variance, envelope));
}

double bernstein_kernel(double t, double variance, double envelope) {
  return std::exp(-kernel_exponent(KernelShape::bernstein, t, variance, envelope));
}

double kernel(KernelShape shape, double t, double variance, double envelope) {
  return std::exp(-kernel_exponent(shape, t, variance, envelope));
}

BoundValue poisson_tail_bound(const VarianceProfile& profile, double t, KernelShape shape) {
  return {kernel(shape, t, profile.poisson_var, profile.c_p), kBoundOk};
}

BoundValue na_tail_bound(const VarianceProfile& profile, double t, KernelShape shape) {
  return {2.0 * kernel(shape, t / 2.0, profile.na_var, profile.c_pi), kBoundOk};
}

BoundValue rejective_tail_bound(const VarianceProfile& profile, double t, KernelShape shape,
                                const BoundConstants& constants) {
  return {constants.C * kernel(shape, t, profile.sigma2_N, profile.c_p),
          rejective_flags(profile, constants)};
}

BoundValue ht_pi_tail_bound(const VarianceProfile& profile, double t, KernelShape shape,
                            const BoundConstants& constants) {
  if (t <= profile.M_N) {
    // Trivial bound; carrying C keeps the curve non-increasing across M_N.
    return {constants.C, rejective_flags(profile, constants) | kBelowBiasRadius};
  }
  return rejective_tail_bound(profile, t - profile.M_N, shape, constants);
}

BoundValue evaluate_bound(BoundKind kind, const VarianceProfile& profile, double t,
                          const BoundConstants& constants) {
  const KernelShape shape = shape_of(kind);
  switch (kind) {
    case BoundKind::poisson_bennett:
    case BoundKind::poisson_bernstein:
      return poisson_tail_bound(profile, t, shape);
    case BoundKind::na_bennett:
    case BoundKind::na_bernstein:
      return na_tail_bound(profile, t, shape);
    case BoundKind::rejective_bennett:
    case BoundKind::rejective_bernstein:
      return rejective_tail_bound(profile, t, shape, constants);
    case BoundKind::ht_pi_bennett:
    case BoundKind::ht_pi_bernstein:
      return ht_pi_tail_bound(profile, t, shape, constants);
  }
  throw Error("unknown bound kind");
}

double bound_exponent(BoundKind kind, const VarianceProfile& profile, double t) {
  const KernelShape shape = shape_of(kind);
  switch (kind) {
    case BoundKind::poisson_bennett:
    case BoundKind::poisson_bernstein:
      return kernel_exponent(shape, t, profile.poisson_var, profile.c_p);
    case BoundKind::na_bennett:
    case BoundKind::na_bernstein:
      return kernel_exponent(shape, t / 2.0, profile.na_var, profile.c_pi);
    case BoundKind::rejective_bennett:
    case BoundKind::rejective_bernstein:
      return kernel_exponent(shape, t, profile.sigma2_N, profile.c_p);
    case BoundKind::ht_pi_bennett:
    case BoundKind::ht_pi_bernstein:
      return kernel_exponent(shape, std::max(0.0, t - profile.M_N), profile.sigma2_N, profile.c_p);
  }
  throw Error("unknown bound kind");
}

BoundCurve bound_curve(BoundKind kind, const VarianceProfile& profile,
                       std::span<const double> thresholds, const BoundConstants& constants) {
  BoundCurve curve{kind, {thresholds.begin(), thresholds.end()}, {}, {}, constants};
  curve.values.reserve(thresholds.size());
  curve.flags.reserve(thresholds.size());
  for (double t : thresholds) {
    if (t < 0.0) throw InputError("bound thresholds must be nonnegative");
    const BoundValue b = evaluate_bound(kind, profile, t, constants);
    curve.values.push_back(b.value);
    curve.flags.push_back(b.flags);
  }
  return curve;
}

std::vector<double> linear_grid(double lo, double hi, std::size_t count) {
  if (count == 0) throw InputError("grid needs at least one point");
  if (!(hi >= lo)) throw InputError("grid upper end must not be below its lower end");
  std::vector<double> g(count);
  if (count == 1) {
    g[0] = lo;
    return g;
  }
  const double step = (hi - lo) / static_cast<double>(count - 1);
  for (std::size_t k = 0; k < count; ++k) g[k] = lo + step * static_cast<double>(k);
  g.back() = hi;
  return g;
}

double confidence_radius(const std::function<double(double)>& bound, double delta) {
  if (!(delta > 0.0)) throw InputError("confidence level delta must be positive");
  if (delta >= bound(0.0)) return 0.0;
  double lo = 0.0, hi = 1.0;
  int doublings = 0;
  while (bound(hi) > delta) {
    lo = hi;
    hi *= 2.0;
    if (++doublings > 2000) throw ConvergenceError("bound never falls below delta", bound(hi));
  }
  while (hi - lo > 1e-10 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (bound(mid) <= delta) hi = mid; else lo = mid;
  }
  return hi;
}

double two_sided_radius(BoundKind kind, const VarianceProfile& profile, double delta,
                        const BoundConstants& constants) {
  return confidence_radius(
      [&](double t) { return std::min(1.0, 2.0 * evaluate_bound(kind, profile, t, constants).value); },
      delta);
}

}  // namespace survey
