#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "survey/population.hpp"
#include "survey/rng.hpp"

namespace survey {

enum class SchemeKind {
  poisson,
  rejective_rejection,   // redraw Poisson samples until the size is n
  rejective_sequential,  // unit-by-unit draw from suffix pmf tables
  swor,
  rao_sampford,
};

const char* to_string(SchemeKind kind);

/// A sampling design together with the parameters it needs.
class SchemeSpec {
 public:
  /// Independent Bernoulli(w_i) inclusions; any weight kind is used as-is.
  static SchemeSpec poisson(DesignWeights weights);
  /// Conditional Poisson of size n. `weights` must be canonical and sum to n.
  static SchemeSpec rejective(DesignWeights weights, std::size_t n,
                              SchemeKind sampler = SchemeKind::rejective_sequential);
  static SchemeSpec swor(std::size_t population_size, std::size_t n);
  /// First-order pi with sum n and every pi_i < 1.
  static SchemeSpec rao_sampford(DesignWeights first_order, std::size_t n);

  SchemeKind kind() const { return kind_; }
  std::size_t population_size() const { return population_size_; }
  const std::optional<DesignWeights>& weights() const { return weights_; }
  std::optional<std::size_t> sample_size() const { return sample_size_; }
  bool fixed_size() const { return kind_ != SchemeKind::poisson; }
  bool rejective() const {
    return kind_ == SchemeKind::rejective_rejection || kind_ == SchemeKind::rejective_sequential;
  }

 private:
  SchemeSpec(SchemeKind kind, std::size_t population_size, std::optional<DesignWeights> weights,
             std::optional<std::size_t> sample_size);

  SchemeKind kind_;
  std::size_t population_size_;
  std::optional<DesignWeights> weights_;
  std::optional<std::size_t> sample_size_;
};

/// The two weightings the estimators and bounds mix: the Poisson (canonical)
/// parameters p and the design's first-order inclusion probabilities pi.
struct DesignPair {
  std::vector<double> p;
  std::vector<double> pi;
};

/// Poisson: p = pi = weights. Rejective: pi from the canonical p.
/// SWOR: p = pi = n/N. Rao-Sampford: pi = weights, p the canonical
/// parameter of the rejective design with the same pi.
DesignPair resolve_design(const SchemeSpec& spec);

SampleDraw poisson_draw(std::span<const double> p, RandomStream& stream);

struct RejectionDraw {
  SampleDraw draw;
  std::uint64_t rounds = 0;
};

inline constexpr std::uint64_t kDefaultRoundCap = 1'000'000;

RejectionDraw rejective_draw_rejection(std::span<const double> p, std::size_t n,
                                       RandomStream& stream,
                                       std::uint64_t round_cap = kDefaultRoundCap);

/// Suffix tables suffix(i, r) = P{sum_{k >= i} eps_k = r}, r <= n, used by
/// the sequential rejective sampler. Immutable after construction.
class SuffixTables {
 public:
  SuffixTables(std::span<const double> p, std::size_t n);

  std::size_t population_size() const { return p_.size(); }
  std::size_t sample_size() const { return n_; }
  /// Conditional probability of including unit i given r units remain to pick
  /// among units i..N-1.
  double inclusion_given(std::size_t i, std::size_t r) const;
  std::span<const double> probabilities() const { return p_; }

 private:
  double at(std::size_t i, std::size_t r) const { return table_[i * (n_ + 1) + r]; }

  std::vector<double> p_;
  std::size_t n_;
  bool log_space_;
  std::vector<double> table_;  // (N+1) x (n+1), row-major
};

/// Shared, cached tables keyed by a fingerprint of (p, n).
std::shared_ptr<const SuffixTables> suffix_tables(std::span<const double> p, std::size_t n);

SampleDraw rejective_draw_sequential(const SuffixTables& tables, RandomStream& stream);
SampleDraw rejective_draw_sequential(std::span<const double> p, std::size_t n,
                                     RandomStream& stream);

SampleDraw swor_draw(std::size_t population_size, std::size_t n, RandomStream& stream);

RejectionDraw rao_sampford_draw(std::span<const double> pi, std::size_t n, RandomStream& stream,
                                std::uint64_t round_cap = kDefaultRoundCap);

/// Precomputes whatever a scheme needs once, then draws replications.
/// Safe to share between threads; each caller supplies its own stream.
class SchemeSampler {
 public:
  explicit SchemeSampler(SchemeSpec spec);

  const SchemeSpec& spec() const { return spec_; }
  SampleDraw draw(RandomStream& stream) const;
  /// Draw for replication `r` of the stream family rooted at `master_seed`.
  SampleDraw draw(std::uint64_t master_seed, std::uint64_t replication) const;

 private:
  SchemeSpec spec_;
  std::vector<double> probs_;
  std::vector<double> cumulative_first_;  // Rao-Sampford first draw, pi_i / n
  std::vector<double> cumulative_odds_;   // Rao-Sampford later draws, prop. to pi_i/(1-pi_i)
  std::shared_ptr<const SuffixTables> tables_;
};

/// Table size (entries) above which the sequential tables are not built and
/// rejective designs fall back to the rejection sampler.
inline constexpr std::size_t kMaxSuffixTableEntries = 20'000'000;

/// Sampler choice for a rejective design: sequential unless its tables would
/// exceed kMaxSuffixTableEntries.
SchemeKind default_rejective_sampler(std::size_t population_size, std::size_t n);

}  // namespace survey
