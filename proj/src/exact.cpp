#include "survey/exact.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <ostream>
#include <string>

#include "survey/compensated_sum.hpp"
#include "survey/errors.hpp"
#include "survey/poisson_binomial.hpp"

namespace survey {

double PlanTable::total_probability() const {
  CompensatedSum s;
  for (const auto& e : support) s += e.probability;
  return s.value();
}

double PlanTable::probability(SubsetMask mask) const {
  auto it = std::lower_bound(support.begin(), support.end(), mask,
                             [](const PlanEntry& e, SubsetMask m) { return e.mask < m; });
  return (it != support.end() && it->mask == mask) ? it->probability : 0.0;
}

namespace {

std::uint64_t binomial_capped(std::size_t N, std::size_t k, std::uint64_t cap) {
  if (k > N) return 0;
  k = std::min(k, N - k);
  std::uint64_t c = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    // c * (N - k + i) / i is exact at every step.
    c = c * (N - k + i) / i;
    if (c > cap) return cap + 1;
  }
  return c;
}

SubsetMask next_same_popcount(SubsetMask v) {
  const SubsetMask t = v | (v - 1);
  return (t + 1) | (((~t & -~t) - 1) >> (std::countr_zero(v) + 1));
}

template <typename Weight>
std::vector<PlanEntry> fixed_size_support(std::size_t N, std::size_t n, Weight weight) {
  const std::uint64_t count = binomial_capped(N, n, kMaxFixedSizeSupport);
  if (N > 63 || count > kMaxFixedSizeSupport) {
    throw CapExceeded("fixed-size plan with N = " + std::to_string(N) + ", n = " +
                      std::to_string(n) + " exceeds the enumeration cap");
  }
  std::vector<PlanEntry> out;
  out.reserve(count);
  if (n == 0) {
    out.push_back({0, weight(SubsetMask{0})});
    return out;
  }
  SubsetMask m = (SubsetMask{1} << n) - 1;
  for (std::uint64_t k = 0; k < count; ++k) {
    out.push_back({m, weight(m)});
    if (k + 1 < count) m = next_same_popcount(m);
  }
  return out;
}

double poisson_mass(SubsetMask m, std::span<const double> p) {
  double prob = 1.0;
  for (std::size_t i = 0; i < p.size(); ++i) prob *= (m >> i & 1U) ? p[i] : 1.0 - p[i];
  return prob;
}

void normalize(std::vector<PlanEntry>& support) {
  CompensatedSum s;
  for (const auto& e : support) s += e.probability;
  const double total = s.value();
  if (!(total > 0.0)) throw DegenerateDesign("plan has zero total mass");
  for (auto& e : support) e.probability /= total;
}

}  // namespace

PlanTable enumerate_plan(const SchemeSpec& spec) {
  const std::size_t N = spec.population_size();
  PlanTable plan{N, {}};
  switch (spec.kind()) {
    case SchemeKind::poisson: {
      if (N > kMaxPoissonEnumeration) {
        throw CapExceeded("Poisson plan with N = " + std::to_string(N) +
                          " exceeds the enumeration cap of " +
                          std::to_string(kMaxPoissonEnumeration));
      }
      const auto& p = spec.weights()->probs();
      const SubsetMask end = SubsetMask{1} << N;
      plan.support.reserve(end);
      for (SubsetMask m = 0; m < end; ++m) plan.support.push_back({m, poisson_mass(m, p)});
      return plan;
    }
    case SchemeKind::rejective_rejection:
    case SchemeKind::rejective_sequential: {
      const auto& p = spec.weights()->probs();
      const std::size_t n = *spec.sample_size();
      const double size_mass = pmf_table(p).probs[n];
      if (!(size_mass > 0.0)) throw DegenerateDesign("P{size = n} underflows to zero");
      plan.support = fixed_size_support(N, n, [&](SubsetMask m) { return poisson_mass(m, p) / size_mass; });
      return plan;
    }
    case SchemeKind::swor: {
      const std::size_t n = *spec.sample_size();
      const double each = 1.0 / static_cast<double>(binomial_capped(N, n, kMaxFixedSizeSupport));
      plan.support = fixed_size_support(N, n, [&](SubsetMask) { return each; });
      return plan;
    }
    case SchemeKind::rao_sampford: {
      // P(s) proportional to prod_{i in s} lambda_i * (n - sum_{i in s} pi_i),
      // lambda_i = pi_i / (1 - pi_i).
      const auto& pi = spec.weights()->probs();
      const std::size_t n = *spec.sample_size();
      plan.support = fixed_size_support(N, n, [&](SubsetMask m) {
        double prod = 1.0, s = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
          if (m >> i & 1U) {
            prod *= pi[i] / (1.0 - pi[i]);
            s += pi[i];
          }
        }
        return prod * (static_cast<double>(n) - s);
      });
      normalize(plan.support);
      return plan;
    }
  }
  throw Error("unknown scheme kind");
}

SampleDraw draw_from_mask(SubsetMask mask, std::size_t population_size) {
  std::vector<std::uint8_t> ind(population_size, 0);
  for (std::size_t i = 0; i < population_size; ++i) ind[i] = static_cast<std::uint8_t>(mask >> i & 1U);
  return SampleDraw::from_indicators(std::move(ind));
}

SubsetMask mask_of(const SampleDraw& draw) {
  if (draw.indicators.size() > 64) throw InputError("draw too large for a subset mask");
  SubsetMask m = 0;
  for (std::size_t i : draw.selected) m |= SubsetMask{1} << i;
  return m;
}

namespace {

double ht_deviation(SubsetMask m, const Population& pop, std::span<const double> weights,
                    double total) {
  CompensatedSum s;
  s += -total;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    if (!(m >> i & 1U) || pop[i] == 0.0) continue;
    if (weights[i] == 0.0) throw InputError("selected unit has zero weight");
    s += pop[i] / weights[i];
  }
  return s.value();
}

}  // namespace

DeviationDistribution::DeviationDistribution(const PlanTable& plan, const Population& pop,
                                             std::span<const double> weights) {
  if (pop.size() != plan.population_size || weights.size() != pop.size()) {
    throw InputError("plan, population and weights differ in size");
  }
  if (plan.support.empty()) throw InputError("plan has empty support");
  const double total = survey::total(pop);
  std::vector<std::pair<double, double>> atoms;
  atoms.reserve(plan.support.size());
  for (const auto& e : plan.support) {
    atoms.emplace_back(ht_deviation(e.mask, pop, weights, total), e.probability);
  }
  std::sort(atoms.begin(), atoms.end());
  std::vector<double> mass;
  for (const auto& [v, p] : atoms) {
    if (!values_.empty() && values_.back() == v) {
      mass.back() += p;
    } else {
      values_.push_back(v);
      mass.push_back(p);
    }
  }
  upper_tail_.assign(values_.size() + 1, 0.0);
  CompensatedSum acc;
  for (std::size_t k = values_.size(); k-- > 0;) {
    acc += mass[k];
    upper_tail_[k] = acc.value();
  }
}

double DeviationDistribution::tail(double t) const {
  const auto k = static_cast<std::size_t>(
      std::upper_bound(values_.begin(), values_.end(), t) - values_.begin());
  return std::min(1.0, upper_tail_[k]);
}

std::vector<double> DeviationDistribution::tail(std::span<const double> thresholds) const {
  std::vector<double> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) out.push_back(tail(t));
  return out;
}

double exact_tail(const PlanTable& plan, const Population& pop, std::span<const double> weights,
                  double t) {
  return DeviationDistribution(plan, pop, weights).tail(t);
}

double tv_distance(const PlanTable& a, const PlanTable& b) {
  if (a.population_size != b.population_size) throw InputError("plans differ in population size");
  CompensatedSum s;
  std::size_t i = 0, j = 0;
  while (i < a.support.size() || j < b.support.size()) {
    if (j == b.support.size() || (i < a.support.size() && a.support[i].mask < b.support[j].mask)) {
      s += std::abs(a.support[i++].probability);
    } else if (i == a.support.size() || b.support[j].mask < a.support[i].mask) {
      s += std::abs(b.support[j++].probability);
    } else {
      s += std::abs(a.support[i++].probability - b.support[j++].probability);
    }
  }
  return s.value();
}

double kl_divergence(const PlanTable& r, const PlanTable& r_tilde) {
  if (r.population_size != r_tilde.population_size) {
    throw InputError("plans differ in population size");
  }
  CompensatedSum s;
  for (const auto& e : r.support) {
    if (e.probability == 0.0) continue;
    const double q = r_tilde.probability(e.mask);
    if (q == 0.0) {
      throw InputError("KL divergence undefined: mask " + std::to_string(e.mask) +
                       " has positive probability only under the first plan");
    }
    s += e.probability * std::log(e.probability / q);
  }
  return std::max(0.0, s.value());
}

double tail_transfer_bound(double bound, double distance, TransferMetric metric) {
  if (!(distance >= 0.0)) throw InputError("plan distance must be nonnegative");
  return metric == TransferMetric::l1 ? bound + distance : bound + std::sqrt(2.0 * distance);
}

PlanTable empirical_plan(std::span<const SubsetMask> masks, std::size_t population_size) {
  if (masks.empty()) throw InputError("empirical plan needs at least one draw");
  std::vector<SubsetMask> sorted(masks.begin(), masks.end());
  std::sort(sorted.begin(), sorted.end());
  PlanTable plan{population_size, {}};
  const double w = 1.0 / static_cast<double>(sorted.size());
  std::size_t run = 0;
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    ++run;
    if (k + 1 == sorted.size() || sorted[k + 1] != sorted[k]) {
      plan.support.push_back({sorted[k], static_cast<double>(run) * w});
      run = 0;
    }
  }
  return plan;
}

PlanTable empirical_plan(std::span<const SampleDraw> draws, std::size_t population_size) {
  std::vector<SubsetMask> masks;
  masks.reserve(draws.size());
  for (const auto& d : draws) masks.push_back(mask_of(d));
  return empirical_plan(masks, population_size);
}

std::vector<double> marginal_inclusions(const PlanTable& plan) {
  std::vector<CompensatedSum> acc(plan.population_size);
  for (const auto& e : plan.support) {
    for (SubsetMask m = e.mask; m != 0; m &= m - 1) acc[std::countr_zero(m)] += e.probability;
  }
  std::vector<double> out(plan.population_size);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = acc[i].value();
  return out;
}

SymmetricMatrix marginal_pair_inclusions(const PlanTable& plan) {
  const std::size_t N = plan.population_size;
  SymmetricMatrix out(N, 0.0);
  for (const auto& e : plan.support) {
    for (SubsetMask a = e.mask; a != 0; a &= a - 1) {
      const auto i = static_cast<std::size_t>(std::countr_zero(a));
      for (SubsetMask b = a; b != 0; b &= b - 1) {
        const auto j = static_cast<std::size_t>(std::countr_zero(b));
        out.set(i, j, out(i, j) + e.probability);
      }
    }
  }
  return out;
}

void write_plan_csv(std::ostream& out, const PlanTable& plan) {
  out << "mask,probability\n";
  for (const auto& e : plan.support) out << e.mask << ',' << format_double(e.probability) << '\n';
}

}  // namespace survey
