#include "survey/poisson_binomial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "survey/compensated_sum.hpp"
#include "survey/errors.hpp"

namespace survey {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Probabilities carried as plain doubles.
struct LinearSpace {
  static double zero() { return 0.0; }
  static double one() { return 1.0; }
  static double weight(double p) { return p; }
  static double complement(double p) { return 1.0 - p; }
  static double mul(double a, double b) { return a * b; }
  static double add(double a, double b) { return a + b; }
  static bool is_zero(double v) { return !(v > 0.0); }
  // p * num / den, returned as a probability.
  static double scaled_ratio(double p, double num, double den) { return p * num / den; }
  static double to_probability(double v) { return v; }
};

// Probabilities carried as natural logarithms.
struct LogSpace {
  static double zero() { return kNegInf; }
  static double one() { return 0.0; }
  static double weight(double p) { return std::log(p); }
  static double complement(double p) { return std::log1p(-p); }
  static double mul(double a, double b) { return a + b; }
  static double add(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double hi = std::max(a, b);
    return hi + std::log1p(std::exp(-std::abs(a - b)));
  }
  static bool is_zero(double v) { return v == kNegInf; }
  static double scaled_ratio(double p, double num, double den) {
    return std::exp(std::log(p) + num - den);
  }
  static double to_probability(double v) { return std::exp(v); }
};

void check_probabilities(std::span<const double> p) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0 && p[i] <= 1.0)) {
      throw InputError("probability of unit " + std::to_string(i + 1) + " outside [0,1]");
    }
  }
}

bool use_log_space(Arithmetic a, std::size_t n_units) {
  return a == Arithmetic::log || (a == Arithmetic::automatic && n_units > kLogDomainThreshold);
}

// Multiplies the Bernoulli(p) generating factor into `acc`, truncated to
// indices [0, acc.size()).
template <class Space>
void absorb(std::vector<double>& acc, double p) {
  const double in = Space::weight(p);
  const double out = Space::complement(p);
  for (std::size_t k = acc.size() - 1; k >= 1; --k) {
    acc[k] = Space::add(Space::mul(acc[k], out), Space::mul(acc[k - 1], in));
  }
  acc[0] = Space::mul(acc[0], out);
}

template <class Space>
std::vector<double> truncated_pmf(std::span<const double> p, std::size_t top) {
  std::vector<double> acc(top + 1, Space::zero());
  acc[0] = Space::one();
  for (double pi : p) absorb<Space>(acc, pi);
  return acc;
}

// For every unit u in `units`, stores into out[u] the mass at `level` of the
// pmf of (units outside `units`, already folded into `acc`) plus
// (units \ {u}). Divide and conquer: O(|units| log|units|) absorptions.
template <class Space>
void leave_one_out(std::span<const double> p, std::span<const std::size_t> units,
                   std::vector<double> acc, std::size_t level, std::vector<double>& out) {
  if (units.size() == 1) {
    out[units[0]] = acc[level];
    return;
  }
  const std::size_t mid = units.size() / 2;
  const auto left = units.first(mid);
  const auto right = units.subspan(mid);
  std::vector<double> with_right = acc;
  for (std::size_t u : right) absorb<Space>(with_right, p[u]);
  leave_one_out<Space>(p, left, std::move(with_right), level, out);
  for (std::size_t u : left) absorb<Space>(acc, p[u]);
  leave_one_out<Space>(p, right, std::move(acc), level, out);
}

template <class Space>
double size_mass(std::span<const double> p, std::size_t n) {
  const double mass = truncated_pmf<Space>(p, n)[n];
  if (Space::is_zero(mass)) {
    throw DegenerateDesign("the Poisson design cannot produce a sample of size " +
                           std::to_string(n));
  }
  return mass;
}

template <class Space>
std::vector<double> first_order_in(std::span<const double> p, std::size_t n) {
  const std::size_t N = p.size();
  std::vector<double> pi(N, 0.0);
  if (n == 0) {
    size_mass<Space>(p, 0);
    return pi;
  }
  const double mass = size_mass<Space>(p, n);
  std::vector<std::size_t> units(N);
  std::iota(units.begin(), units.end(), std::size_t{0});
  std::vector<double> loo(N, Space::zero());
  std::vector<double> acc(n, Space::zero());
  acc[0] = Space::one();
  leave_one_out<Space>(p, units, std::move(acc), n - 1, loo);
  for (std::size_t i = 0; i < N; ++i) {
    pi[i] = p[i] > 0.0 ? Space::scaled_ratio(p[i], loo[i], mass) : 0.0;
  }
  return pi;
}

template <class Space>
SymmetricMatrix second_order_in(std::span<const double> p, std::size_t n,
                                const std::vector<double>& first) {
  const std::size_t N = p.size();
  SymmetricMatrix table(N, 0.0);
  for (std::size_t i = 0; i < N; ++i) table.set(i, i, first[i]);
  if (n < 2 || N < 2) return table;
  const double mass = size_mass<Space>(p, n);
  std::vector<double> pair_mass(N, Space::zero());
  // acc_i: pmf of units 0..i-1, truncated at n-2.
  std::vector<double> prefix(n - 1, Space::zero());
  prefix[0] = Space::one();
  for (std::size_t i = 0; i + 1 < N; ++i) {
    if (p[i] > 0.0) {
      std::vector<std::size_t> later(N - i - 1);
      std::iota(later.begin(), later.end(), i + 1);
      leave_one_out<Space>(p, later, prefix, n - 2, pair_mass);
      for (std::size_t j = i + 1; j < N; ++j) {
        const double v =
            p[j] > 0.0 ? Space::scaled_ratio(p[i] * p[j], pair_mass[j], mass) : 0.0;
        table.set(i, j, v);
      }
    }
    absorb<Space>(prefix, p[i]);
  }
  return table;
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Finds the shift s with sum_i sigmoid(log_odds_i + s) = target, for
// 0 < target < log_odds.size(). Newton steps kept inside a bisection bracket.
double odds_shift(std::span<const double> log_odds, double target) {
  auto excess = [&](double s, double* slope) {
    CompensatedSum sum, deriv;
    for (double z : log_odds) {
      const double q = sigmoid(z + s);
      sum += q;
      deriv += q * (1.0 - q);
    }
    if (slope) *slope = deriv.value();
    return sum.value() - target;
  };
  double lo = -1.0, hi = 1.0;
  while (excess(lo, nullptr) > 0.0) lo *= 2.0;
  while (excess(hi, nullptr) < 0.0) hi *= 2.0;
  double s = 0.5 * (lo + hi);
  const double tol = 1e-15 * std::max(1.0, target);
  for (int it = 0; it < 200; ++it) {
    double slope = 0.0;
    const double f = excess(s, &slope);
    if (std::abs(f) <= tol) break;
    if (f > 0.0) hi = s; else lo = s;
    double next = slope > 0.0 ? s - f / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == s) break;
    s = next;
  }
  return s;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

PmfTable pmf_table(std::span<const double> p, Arithmetic arithmetic) {
  check_probabilities(p);
  PmfTable table;
  if (use_log_space(arithmetic, p.size())) {
    const auto logs = truncated_pmf<LogSpace>(p, p.size());
    table.probs.reserve(logs.size());
    for (double v : logs) table.probs.push_back(LogSpace::to_probability(v));
  } else {
    table.probs = truncated_pmf<LinearSpace>(p, p.size());
  }
  // Renormalization guard against accumulated drift.
  const double total = compensated_sum(table.probs);
  if (total > 0.0 && std::abs(total - 1.0) > 1e-15) {
    for (double& v : table.probs) v /= total;
  }
  return table;
}

std::vector<double> first_order_inclusion(std::span<const double> p, std::size_t n,
                                          Arithmetic arithmetic) {
  check_probabilities(p);
  if (n > p.size()) throw InputError("sample size exceeds population size");
  return use_log_space(arithmetic, p.size()) ? first_order_in<LogSpace>(p, n)
                                             : first_order_in<LinearSpace>(p, n);
}

SymmetricMatrix second_order_inclusion(std::span<const double> p, std::size_t n,
                                       Arithmetic arithmetic) {
  const auto first = first_order_inclusion(p, n, arithmetic);
  return use_log_space(arithmetic, p.size()) ? second_order_in<LogSpace>(p, n, first)
                                             : second_order_in<LinearSpace>(p, n, first);
}

RejectiveInclusions rejective_inclusions(std::span<const double> p, std::size_t n,
                                         Arithmetic arithmetic) {
  RejectiveInclusions r;
  r.second_order = second_order_inclusion(p, n, arithmetic);
  r.first_order.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) r.first_order[i] = r.second_order(i, i);
  r.sample_size = n;
  return r;
}

std::vector<double> canonicalize(std::span<const double> p, std::size_t n) {
  check_probabilities(p);
  std::vector<double> out(p.begin(), p.end());
  std::vector<std::size_t> free_units;
  std::size_t forced = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] >= 1.0) ++forced;
    else if (p[i] > 0.0) free_units.push_back(i);
  }
  if (n < forced || n - forced > free_units.size()) {
    throw DegenerateDesign("no sample of size " + std::to_string(n) + " has positive probability");
  }
  const std::size_t m = n - forced;
  if (free_units.empty()) return out;
  if (m == 0 || m == free_units.size()) {
    throw DegenerateDesign("sample size " + std::to_string(n) +
                           " leaves no randomness; canonical p would hit 0 or 1");
  }
  std::vector<double> log_odds;
  log_odds.reserve(free_units.size());
  for (std::size_t i : free_units) log_odds.push_back(logit(p[i]));
  const double s = odds_shift(log_odds, static_cast<double>(m));
  for (std::size_t k = 0; k < free_units.size(); ++k) out[free_units[k]] = sigmoid(log_odds[k] + s);
  return out;
}

CanonicalSolution solve_canonical(std::span<const double> target, std::size_t n,
                                  const CanonicalSolverOptions& options) {
  const std::size_t N = target.size();
  for (std::size_t i = 0; i < N; ++i) {
    if (!(target[i] > 0.0 && target[i] <= 1.0)) {
      throw InputError("target inclusion probability of unit " + std::to_string(i + 1) +
                       " must lie in (0,1]");
    }
  }
  CanonicalSolution sol;
  std::vector<double> goal(target.begin(), target.end());
  const double total = compensated_sum(goal);
  const double gap = std::abs(total - static_cast<double>(n));
  if (gap > 1e-6) {
    throw InputError("target inclusion probabilities sum to " + std::to_string(total) +
                     ", not to the sample size " + std::to_string(n));
  }
  if (gap > 1e-9) {
    const double scale = static_cast<double>(n) / total;
    for (double& g : goal) {
      if (g < 1.0) g = std::min(g * scale, std::nextafter(1.0, 0.0));
    }
    sol.renormalized = true;
    sol.warnings.push_back("target inclusion probabilities summed to " + std::to_string(total) +
                           "; rescaled to sum to " + std::to_string(n));
  }

  std::vector<std::size_t> free_units;
  for (std::size_t i = 0; i < N; ++i) {
    if (goal[i] >= 1.0) sol.forced.push_back(i);
    else free_units.push_back(i);
  }
  sol.p.assign(N, 1.0);
  if (free_units.empty()) return sol;
  if (n <= sol.forced.size() || n - sol.forced.size() >= free_units.size()) {
    throw InputError("target inclusion probabilities are inconsistent with sample size " +
                     std::to_string(n));
  }
  const std::size_t m = n - sol.forced.size();
  const double md = static_cast<double>(m);

  std::vector<double> want;
  for (std::size_t i : free_units) want.push_back(goal[i]);
  const std::size_t K = want.size();

  // Start from Hajek's relation odds(p) ~ odds(pi) (1 - (p~ - p_i)/d_N),
  // with pi standing in for p inside the correction.
  CompensatedSum d_acc, t_acc;
  for (double w : want) {
    d_acc += w * (1.0 - w);
    t_acc += w * w * (1.0 - w);
  }
  const double d = d_acc.value();
  const double tilde = t_acc.value() / d;
  std::vector<double> log_odds(K);
  for (std::size_t k = 0; k < K; ++k) {
    const double factor = std::clamp(1.0 - (tilde - want[k]) / d, 0.25, 4.0);
    log_odds[k] = logit(want[k]) + std::log(factor);
  }

  auto evaluate = [&](std::vector<double>& lo, std::vector<double>& p_out,
                      std::vector<double>& pi_out) {
    const double s = odds_shift(lo, md);
    for (std::size_t k = 0; k < K; ++k) {
      lo[k] += s;
      p_out[k] = sigmoid(lo[k]);
    }
    pi_out = first_order_inclusion(p_out, m);
    return max_abs_diff(pi_out, want);
  };

  std::vector<double> p(K), pi(K);
  double residual = evaluate(log_odds, p, pi);
  double damping = options.initial_damping;
  std::vector<double> trial_lo(K), trial_p(K), trial_pi(K);
  std::size_t it = 0;
  while (it < options.max_iterations && residual > options.stop_tolerance) {
    ++it;
    for (std::size_t k = 0; k < K; ++k) {
      trial_lo[k] = log_odds[k] + damping * (logit(want[k]) - logit(pi[k]));
    }
    const double trial_residual = evaluate(trial_lo, trial_p, trial_pi);
    if (trial_residual < residual) {
      log_odds.swap(trial_lo);
      p.swap(trial_p);
      pi.swap(trial_pi);
      residual = trial_residual;
      damping = std::min(1.0, 2.0 * damping);
    } else {
      damping *= 0.5;
      if (damping < 1e-12) break;
    }
  }
  sol.iterations = it;
  sol.residual = residual;
  if (residual > options.accept_tolerance) {
    throw ConvergenceError("canonical solver stopped at residual " + std::to_string(residual) +
                               " after " + std::to_string(it) + " iterations",
                           residual);
  }
  for (std::size_t k = 0; k < K; ++k) sol.p[free_units[k]] = p[k];
  return sol;
}

HajekDiagnostics hajek_residuals(std::span<const double> p, std::span<const double> pi,
                                 std::size_t n) {
  if (p.size() != pi.size()) throw InputError("p and pi differ in length");
  if (std::abs(compensated_sum(pi) - static_cast<double>(n)) > 1e-6) {
    throw InputError("first-order inclusion probabilities do not sum to the sample size");
  }
  const std::size_t N = p.size();
  HajekDiagnostics h;
  CompensatedSum d, ds, pt, qt;
  for (std::size_t i = 0; i < N; ++i) {
    d += p[i] * (1.0 - p[i]);
    ds += pi[i] * (1.0 - pi[i]);
    pt += pi[i] * pi[i] * (1.0 - pi[i]);
    qt += p[i] * p[i] * (1.0 - p[i]);
  }
  h.d_N = d.value();
  h.d_star_N = ds.value();
  h.pi_tilde = h.d_star_N > 0.0 ? pt.value() / h.d_star_N : 0.0;
  h.p_tilde = h.d_N > 0.0 ? qt.value() / h.d_N : 0.0;
  h.rel1_residual.assign(N, 0.0);
  h.rel2_residual.assign(N, 0.0);
  h.bias_gap.assign(N, 0.0);
  h.bias_radius.assign(N, 0.0);
  h.bias_lemma_applicable = h.d_N >= 1.0;
  for (std::size_t i = 0; i < N; ++i) {
    const bool interior = p[i] > 0.0 && p[i] < 1.0 && pi[i] > 0.0 && pi[i] < 1.0;
    if (interior && h.d_star_N > 0.0 && h.d_N > 0.0) {
      const double odds_ratio = pi[i] * (1.0 - p[i]) / (p[i] * (1.0 - pi[i]));
      h.rel1_residual[i] = odds_ratio - 1.0 + (h.pi_tilde - pi[i]) / h.d_star_N;
      h.rel2_residual[i] = 1.0 / odds_ratio - 1.0 + (h.p_tilde - p[i]) / h.d_N;
      h.max_scaled_residual = std::max(
          h.max_scaled_residual,
          std::max(std::abs(h.rel1_residual[i]), std::abs(h.rel2_residual[i])) * h.d_N);
    }
    if (pi[i] > 0.0 && p[i] > 0.0) {
      h.bias_gap[i] = std::abs(1.0 / pi[i] - 1.0 / p[i]);
      h.bias_radius[i] = h.d_N > 0.0 ? (6.0 / h.d_N) * (1.0 - pi[i]) / pi[i] : 0.0;
      if (h.bias_lemma_applicable && h.bias_gap[i] > h.bias_radius[i]) h.bias_lemma_holds = false;
    }
  }
  return h;
}

}  // namespace survey
