#pragma once

// Exhaustive enumeration of sampling plans on small populations.
//
// Subsets are bitmasks (bit i set <=> unit i selected). Plans list their
// support in ascending mask order, so every derived quantity is computed in
// a fixed order.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "survey/population.hpp"
#include "survey/schemes.hpp"
#include "survey/symmetric_matrix.hpp"

namespace survey {

using SubsetMask = std::uint64_t;

struct PlanEntry {
  SubsetMask mask = 0;
  double probability = 0.0;
};

struct PlanTable {
  std::size_t population_size = 0;
  std::vector<PlanEntry> support;  // ascending, distinct masks

  double total_probability() const;
  /// Probability of `mask`, 0 when it is outside the support.
  double probability(SubsetMask mask) const;
};

inline constexpr std::size_t kMaxPoissonEnumeration = 20;       // 2^N subsets
inline constexpr std::uint64_t kMaxFixedSizeSupport = 2'000'000;  // C(N, n)

/// Exact plan of `spec`. Throws CapExceeded beyond the enumeration caps.
PlanTable enumerate_plan(const SchemeSpec& spec);

SampleDraw draw_from_mask(SubsetMask mask, std::size_t population_size);
SubsetMask mask_of(const SampleDraw& draw);

/// Deviations HT(s) - S_N of every support point, sorted, with the
/// probability of each atom. Answers tail queries in O(log |support|).
class DeviationDistribution {
 public:
  DeviationDistribution(const PlanTable& plan, const Population& pop,
                        std::span<const double> weights);

  /// P{HT - S_N > t}.
  double tail(double t) const;
  std::vector<double> tail(std::span<const double> thresholds) const;
  double min_deviation() const { return values_.front(); }
  double max_deviation() const { return values_.back(); }

 private:
  std::vector<double> values_;        // ascending distinct deviations
  std::vector<double> upper_tail_;    // upper_tail_[k] = P{dev >= values_[k]}, plus trailing 0
};

/// P{HT(s) - S_N > t} under `plan`.
double exact_tail(const PlanTable& plan, const Population& pop, std::span<const double> weights,
                  double t);

/// sum_s |P1(s) - P2(s)|, twice the usual total variation; lies in [0, 2].
double tv_distance(const PlanTable& a, const PlanTable& b);

/// sum_s R(s) log(R(s)/Rt(s)), natural log. Throws InputError unless
/// supp(R) is contained in supp(Rt).
double kl_divergence(const PlanTable& r, const PlanTable& r_tilde);

enum class TransferMetric { l1, kl };

/// Tail bound for an approximating plan: bound + l1, or bound + sqrt(2 KL).
double tail_transfer_bound(double bound, double distance, TransferMetric metric);

/// Frequency table of observed draws; labeled empirical, not exact.
PlanTable empirical_plan(std::span<const SampleDraw> draws, std::size_t population_size);
PlanTable empirical_plan(std::span<const SubsetMask> masks, std::size_t population_size);

std::vector<double> marginal_inclusions(const PlanTable& plan);
SymmetricMatrix marginal_pair_inclusions(const PlanTable& plan);

/// CSV with header `mask,probability`.
void write_plan_csv(std::ostream& out, const PlanTable& plan);

}  // namespace survey
