#pragma once

// Replicated experiments checking the concentration results against
// simulation and enumeration.
//
// Replication r of an experiment draws from RandomStream(master_seed, r) and
// its results are stored at index r, so reports do not depend on the number
// of workers.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "survey/bounds.hpp"
#include "survey/estimators.hpp"
#include "survey/population.hpp"
#include "survey/schemes.hpp"

namespace survey {

enum class CheckKind {
  unbiasedness,         // mean HT_pi within 4 SE of S_N
  pathwise_bias,        // |HT_pi - HT_p| <= M_N on every draw
  local_limit,          // P{sum eps = n} sqrt(2 pi d_N) close to 1
  variance_identity,    // poisson_var = sigma2_N + theta_N^2 d_N
  size_distribution,    // sample sizes against the design
  tail_envelope,        // bound curves against empirical and exact tails
  ci_coverage,          // Poisson intervals from the inverted bound
  sufficient_constant,  // smallest C making the rejective bounds hold empirically
  sharpness,            // rejective exponent against the NA exponent
};

const char* to_string(CheckKind kind);
CheckKind check_kind_from_string(const std::string& name);
std::vector<CheckKind> all_checks();

struct ExperimentConfig {
  SchemeSpec scheme;
  Population population;
  std::uint64_t replications = 10'000;
  std::vector<double> thresholds = {};  // ascending, >= 0; empty selects a default grid
  std::uint64_t master_seed = 0;
  std::vector<CheckKind> checks = {};  // empty selects every check
  double confidence_level = 0.95;  // Clopper-Pearson intervals
  double delta = 0.05;             // CI coverage level 1 - delta
  BoundConstants constants = {};
  unsigned workers = 1;
};

struct ReplicationResults {
  std::vector<double> ht_pi;  // HT with first-order weights
  std::vector<double> ht_p;   // HT with canonical weights
  std::vector<std::uint32_t> sizes;
};

/// Draws `reps` samples and stores both HT totals of each.
ReplicationResults run_replications(const SchemeSampler& sampler, const Population& pop,
                                    std::span<const double> p, std::span<const double> pi,
                                    std::uint64_t reps, std::uint64_t master_seed,
                                    unsigned workers);

struct Interval {
  double lower = 0.0;
  double upper = 1.0;
};

/// Exact two-sided binomial interval for `successes` out of `trials`.
Interval clopper_pearson(std::uint64_t successes, std::uint64_t trials, double level);

struct TailEstimate {
  double t = 0.0;
  std::uint64_t exceedances = 0;  // count of deviations > t
  std::uint64_t trials = 0;
  double estimate = 0.0;
  Interval interval;
};

/// Empirical P{deviation > t} for each t.
std::vector<TailEstimate> empirical_tail(std::span<const double> deviations,
                                         std::span<const double> thresholds, double level);
/// Draws `reps` samples and estimates P{HT_w - S_N > t}.
std::vector<TailEstimate> empirical_tail(const SchemeSampler& sampler, const Population& pop,
                                         std::span<const double> weights,
                                         std::span<const double> thresholds, std::uint64_t reps,
                                         std::uint64_t master_seed, double level,
                                         unsigned workers = 1);

struct TailRow {
  std::string check;  // "tail:<bound kind>"
  double t = 0.0;
  double empirical = 0.0;
  Interval interval;
  std::optional<double> exact;
  double bound = 1.0;  // min(1, raw bound)
  bool envelope = true;  // bound above CP upper limit (when resolvable) and exact tail
  bool resolvable = true;  // bound above the CP upper limit of zero exceedances
  bool asserted = false;
};

struct ScalarCheck {
  std::string name;
  double value = 0.0;
  double limit = 0.0;
  bool asserted = false;
  bool passed = true;
  std::string note;
};

struct VerificationReport {
  std::string scheme;
  std::size_t population_size = 0;
  std::optional<std::size_t> sample_size;
  std::uint64_t replications = 0;
  std::uint64_t master_seed = 0;
  double population_total = 0.0;
  VarianceProfile profile;
  BoundConstants constants;
  std::vector<TailRow> rows;
  std::vector<ScalarCheck> scalars;

  /// True when every asserted row and scalar check passed.
  bool passed() const;
};

VerificationReport run_experiment(const ExperimentConfig& config);

/// One row per (check, t); scalar checks follow with an empty t.
/// Columns: check,t,empirical,cp_lower,cp_upper,exact,bound,envelope,asserted.
void write_report_csv(std::ostream& out, const VerificationReport& report);
/// key=value lines.
void write_report_summary(std::ostream& out, const VerificationReport& report);

struct CovarianceProbeRow {
  std::string function;  // "sum", "any" or "indicator"
  std::size_t block_a = 0;
  std::size_t block_b = 0;
  double covariance = 0.0;
  double standard_error = 0.0;
  std::optional<double> exact;
  bool significantly_positive = false;
};

struct CovarianceProbe {
  std::vector<CovarianceProbeRow> rows;
  bool any_significantly_positive() const;
};

/// Empirical covariances of increasing functions (block sums, block maxima)
/// over `partitions` contiguous blocks. For N <= 10, unit-level indicator
/// covariances pi_ij - pi_i pi_j are added from the exact plan.
CovarianceProbe na_covariance_probe(const SchemeSpec& scheme, std::uint64_t reps,
                                    std::size_t partitions, std::uint64_t master_seed,
                                    unsigned workers = 1);

/// Default threshold grid: 0 up to where the loosest constant-free bound of
/// the design reaches 1e-3, in `count` steps.
std::vector<double> default_threshold_grid(const SchemeSpec& scheme, const VarianceProfile& profile,
                                           std::size_t count = 41);

/// Bound families that apply to draws of `kind`.
std::vector<BoundKind> applicable_bounds(SchemeKind kind);
/// True when `kind` bounds HT with canonical weights p, false for weights pi.
bool uses_canonical_weights(BoundKind kind);

/// Profile of a scheme: canonical p and first-order pi resolved per design.
VarianceProfile scheme_profile(const SchemeSpec& scheme, const Population& pop,
                               const DesignPair& design);

}  // namespace survey
