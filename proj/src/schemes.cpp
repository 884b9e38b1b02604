#include "survey/schemes.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>

#include "survey/compensated_sum.hpp"
#include "survey/errors.hpp"
#include "survey/poisson_binomial.hpp"

namespace survey {

const char* to_string(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::poisson: return "poisson";
    case SchemeKind::rejective_rejection: return "rejective-rejection";
    case SchemeKind::rejective_sequential: return "rejective-sequential";
    case SchemeKind::swor: return "swor";
    case SchemeKind::rao_sampford: return "rao-sampford";
  }
  return "?";
}

SchemeSpec::SchemeSpec(SchemeKind kind, std::size_t population_size,
                       std::optional<DesignWeights> weights,
                       std::optional<std::size_t> sample_size)
    : kind_(kind),
      population_size_(population_size),
      weights_(std::move(weights)),
      sample_size_(sample_size) {}

SchemeSpec SchemeSpec::poisson(DesignWeights weights) {
  const std::size_t N = weights.size();
  if (N == 0) throw InputError("Poisson design needs at least one unit");
  return SchemeSpec(SchemeKind::poisson, N, std::move(weights), std::nullopt);
}

SchemeSpec SchemeSpec::rejective(DesignWeights weights, std::size_t n, SchemeKind sampler) {
  if (sampler != SchemeKind::rejective_rejection && sampler != SchemeKind::rejective_sequential) {
    throw InputError("rejective designs use the rejection or sequential sampler");
  }
  if (weights.kind() != WeightKind::canonical) {
    throw InputError("rejective designs are parameterized by canonical weights p");
  }
  const std::size_t N = weights.size();
  if (n == 0 || n > N) throw InputError("rejective sample size must satisfy 0 < n <= N");
  if (std::abs(weights.sum() - static_cast<double>(n)) > 1e-9) {
    throw InputError("canonical weights must sum to the sample size n = " + std::to_string(n));
  }
  return SchemeSpec(sampler, N, std::move(weights), n);
}

SchemeSpec SchemeSpec::swor(std::size_t population_size, std::size_t n) {
  if (population_size == 0 || n == 0 || n > population_size) {
    throw InputError("SWOR requires 0 < n <= N");
  }
  return SchemeSpec(SchemeKind::swor, population_size, std::nullopt, n);
}

SchemeSpec SchemeSpec::rao_sampford(DesignWeights first_order, std::size_t n) {
  if (first_order.kind() != WeightKind::first_order) {
    throw InputError("Rao-Sampford designs are parameterized by first-order pi");
  }
  const std::size_t N = first_order.size();
  if (n == 0 || n >= N) throw InputError("Rao-Sampford sample size must satisfy 0 < n < N");
  for (double w : first_order.probs()) {
    if (!(w < 1.0)) throw InputError("Rao-Sampford requires every pi_i < 1");
  }
  if (std::abs(first_order.sum() - static_cast<double>(n)) > 1e-9) {
    throw InputError("Rao-Sampford pi must sum to the sample size n = " + std::to_string(n));
  }
  return SchemeSpec(SchemeKind::rao_sampford, N, std::move(first_order), n);
}

DesignPair resolve_design(const SchemeSpec& spec) {
  DesignPair d;
  const std::size_t N = spec.population_size();
  switch (spec.kind()) {
    case SchemeKind::poisson:
      d.p.assign(spec.weights()->probs().begin(), spec.weights()->probs().end());
      d.pi = d.p;
      break;
    case SchemeKind::rejective_rejection:
    case SchemeKind::rejective_sequential:
      d.p.assign(spec.weights()->probs().begin(), spec.weights()->probs().end());
      d.pi = first_order_inclusion(d.p, *spec.sample_size());
      break;
    case SchemeKind::swor: {
      const double f = static_cast<double>(*spec.sample_size()) / static_cast<double>(N);
      d.p.assign(N, f);
      d.pi.assign(N, f);
      break;
    }
    case SchemeKind::rao_sampford:
      d.pi.assign(spec.weights()->probs().begin(), spec.weights()->probs().end());
      d.p = solve_canonical(d.pi, *spec.sample_size()).p;
      break;
  }
  return d;
}

SampleDraw poisson_draw(std::span<const double> p, RandomStream& stream) {
  std::vector<std::uint8_t> ind(p.size(), 0);
  for (std::size_t i = 0; i < p.size(); ++i) ind[i] = stream.bernoulli(p[i]) ? 1 : 0;
  return SampleDraw::from_indicators(std::move(ind), stream.seed(), stream.replication());
}

RejectionDraw rejective_draw_rejection(std::span<const double> p, std::size_t n,
                                       RandomStream& stream, std::uint64_t round_cap) {
  if (n > p.size()) throw InputError("sample size exceeds population size");
  std::vector<std::uint8_t> ind(p.size(), 0);
  for (std::uint64_t round = 1; round <= round_cap; ++round) {
    std::size_t size = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      ind[i] = stream.bernoulli(p[i]) ? 1 : 0;
      size += ind[i];
    }
    if (size == n) {
      return {SampleDraw::from_indicators(ind, stream.seed(), stream.replication()), round};
    }
  }
  throw CapExceeded("rejection sampler exceeded " + std::to_string(round_cap) +
                    " rounds; the design is degenerate for n = " + std::to_string(n));
}

SuffixTables::SuffixTables(std::span<const double> p, std::size_t n)
    : p_(p.begin(), p.end()), n_(n), log_space_(p.size() > kLogDomainThreshold) {
  const std::size_t N = p_.size();
  if (n_ > N) throw InputError("sample size exceeds population size");
  if (static_cast<double>(N + 1) * static_cast<double>(n_ + 1) >
      static_cast<double>(kMaxSuffixTableEntries)) {
    throw CapExceeded("sequential sampler tables would exceed " +
                      std::to_string(kMaxSuffixTableEntries) + " entries");
  }
  const std::size_t width = n_ + 1;
  const double zero = log_space_ ? -std::numeric_limits<double>::infinity() : 0.0;
  table_.assign((N + 1) * width, zero);
  table_[N * width] = log_space_ ? 0.0 : 1.0;
  for (std::size_t i = N; i-- > 0;) {
    const double* next = &table_[(i + 1) * width];
    double* row = &table_[i * width];
    const double q = p_[i];
    if (!log_space_) {
      row[0] = next[0] * (1.0 - q);
      for (std::size_t r = 1; r < width; ++r) row[r] = next[r] * (1.0 - q) + next[r - 1] * q;
    } else {
      const double lin = std::log(q), lout = std::log1p(-q);
      auto lae = [](double a, double b) {
        if (std::isinf(a) && a < 0) return b;
        if (std::isinf(b) && b < 0) return a;
        return std::max(a, b) + std::log1p(std::exp(-std::abs(a - b)));
      };
      row[0] = next[0] + lout;
      for (std::size_t r = 1; r < width; ++r) row[r] = lae(next[r] + lout, next[r - 1] + lin);
    }
  }
  const double top = at(0, n_);
  if (log_space_ ? std::isinf(top) : !(top > 0.0)) {
    throw DegenerateDesign("the Poisson design cannot produce a sample of size " +
                           std::to_string(n_));
  }
}

double SuffixTables::inclusion_given(std::size_t i, std::size_t r) const {
  if (r == 0) return 0.0;
  const double q = p_[i];
  if (q <= 0.0) return 0.0;
  if (log_space_) return std::exp(std::log(q) + at(i + 1, r - 1) - at(i, r));
  return q * at(i + 1, r - 1) / at(i, r);
}

namespace {

struct CacheKey {
  std::uint64_t fingerprint;
  std::size_t n;
  bool operator<(const CacheKey& o) const {
    return fingerprint != o.fingerprint ? fingerprint < o.fingerprint : n < o.n;
  }
};

std::uint64_t fingerprint(std::span<const double> p) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (double v : p) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::mutex cache_mutex;
std::map<CacheKey, std::shared_ptr<const SuffixTables>> cache;
constexpr std::size_t kCacheCapacity = 16;

}  // namespace

std::shared_ptr<const SuffixTables> suffix_tables(std::span<const double> p, std::size_t n) {
  const CacheKey key{fingerprint(p), n};
  {
    std::lock_guard lock(cache_mutex);
    if (auto it = cache.find(key); it != cache.end()) {
      const auto probs = it->second->probabilities();
      if (std::equal(probs.begin(), probs.end(), p.begin(), p.end())) return it->second;
    }
  }
  auto tables = std::make_shared<const SuffixTables>(p, n);
  std::lock_guard lock(cache_mutex);
  if (cache.size() >= kCacheCapacity) cache.clear();
  cache[key] = tables;
  return tables;
}

SampleDraw rejective_draw_sequential(const SuffixTables& tables, RandomStream& stream) {
  const std::size_t N = tables.population_size();
  std::vector<std::uint8_t> ind(N, 0);
  std::size_t remaining = tables.sample_size();
  for (std::size_t i = 0; i < N && remaining > 0; ++i) {
    double q = 1.0;
    if (remaining < N - i) {
      q = tables.inclusion_given(i, remaining);
      if (q < -1e-9 || q > 1.0 + 1e-9 || std::isnan(q)) {
        throw DegenerateDesign("sequential sampler produced conditional probability " +
                               std::to_string(q) + " at unit " + std::to_string(i + 1));
      }
    }
    if (stream.uniform() < q) {
      ind[i] = 1;
      --remaining;
    }
  }
  return SampleDraw::from_indicators(std::move(ind), stream.seed(), stream.replication());
}

SampleDraw rejective_draw_sequential(std::span<const double> p, std::size_t n,
                                     RandomStream& stream) {
  return rejective_draw_sequential(*suffix_tables(p, n), stream);
}

SampleDraw swor_draw(std::size_t population_size, std::size_t n, RandomStream& stream) {
  if (n > population_size) throw InputError("sample size exceeds population size");
  std::vector<std::size_t> units(population_size);
  std::iota(units.begin(), units.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = i + static_cast<std::size_t>(stream.below(population_size - i));
    std::swap(units[i], units[j]);
  }
  units.resize(n);
  return SampleDraw::from_selected(population_size, std::move(units), stream.seed(),
                                   stream.replication());
}

namespace {

std::vector<double> cumulative(std::span<const double> w) {
  std::vector<double> c(w.size());
  CompensatedSum acc;
  for (std::size_t i = 0; i < w.size(); ++i) {
    acc += w[i];
    c[i] = acc.value();
  }
  return c;
}

std::size_t pick(const std::vector<double>& cum, RandomStream& stream) {
  const double u = stream.uniform() * cum.back();
  const auto it = std::upper_bound(cum.begin(), cum.end(), u);
  return std::min(static_cast<std::size_t>(it - cum.begin()), cum.size() - 1);
}

std::vector<double> rao_sampford_odds(std::span<const double> pi) {
  std::vector<double> odds(pi.size());
  for (std::size_t i = 0; i < pi.size(); ++i) odds[i] = pi[i] / (1.0 - pi[i]);
  return odds;
}

RejectionDraw rao_sampford_loop(const std::vector<double>& first, const std::vector<double>& later,
                                std::size_t n, RandomStream& stream, std::uint64_t round_cap) {
  const std::size_t N = first.size();
  std::vector<std::uint8_t> ind(N, 0);
  for (std::uint64_t round = 1; round <= round_cap; ++round) {
    std::fill(ind.begin(), ind.end(), 0);
    ind[pick(first, stream)] = 1;
    bool duplicate = false;
    for (std::size_t k = 1; k < n; ++k) {
      const std::size_t u = pick(later, stream);
      if (ind[u]) {
        duplicate = true;
        break;
      }
      ind[u] = 1;
    }
    if (!duplicate) {
      return {SampleDraw::from_indicators(ind, stream.seed(), stream.replication()), round};
    }
  }
  throw CapExceeded("Rao-Sampford sampler exceeded " + std::to_string(round_cap) + " rounds");
}

}  // namespace

RejectionDraw rao_sampford_draw(std::span<const double> pi, std::size_t n, RandomStream& stream,
                                std::uint64_t round_cap) {
  if (n == 0 || n >= pi.size()) throw InputError("Rao-Sampford sample size must satisfy 0 < n < N");
  std::vector<double> scaled(pi.begin(), pi.end());
  for (double& v : scaled) v /= static_cast<double>(n);
  return rao_sampford_loop(cumulative(scaled), cumulative(rao_sampford_odds(pi)), n, stream,
                           round_cap);
}

SchemeKind default_rejective_sampler(std::size_t population_size, std::size_t n) {
  const double entries = static_cast<double>(population_size + 1) * static_cast<double>(n + 1);
  return entries > static_cast<double>(kMaxSuffixTableEntries) ? SchemeKind::rejective_rejection
                                                               : SchemeKind::rejective_sequential;
}

SchemeSampler::SchemeSampler(SchemeSpec spec) : spec_(std::move(spec)) {
  if (spec_.weights()) probs_.assign(spec_.weights()->probs().begin(), spec_.weights()->probs().end());
  switch (spec_.kind()) {
    case SchemeKind::rejective_sequential:
      tables_ = suffix_tables(probs_, *spec_.sample_size());
      break;
    case SchemeKind::rao_sampford: {
      std::vector<double> scaled = probs_;
      for (double& v : scaled) v /= static_cast<double>(*spec_.sample_size());
      cumulative_first_ = cumulative(scaled);
      cumulative_odds_ = cumulative(rao_sampford_odds(probs_));
      break;
    }
    default:
      break;
  }
}

SampleDraw SchemeSampler::draw(RandomStream& stream) const {
  switch (spec_.kind()) {
    case SchemeKind::poisson: return poisson_draw(probs_, stream);
    case SchemeKind::rejective_rejection:
      return rejective_draw_rejection(probs_, *spec_.sample_size(), stream).draw;
    case SchemeKind::rejective_sequential: return rejective_draw_sequential(*tables_, stream);
    case SchemeKind::swor: return swor_draw(spec_.population_size(), *spec_.sample_size(), stream);
    case SchemeKind::rao_sampford:
      return rao_sampford_loop(cumulative_first_, cumulative_odds_, *spec_.sample_size(), stream,
                               kDefaultRoundCap)
          .draw;
  }
  throw Error("unknown scheme");
}

SampleDraw SchemeSampler::draw(std::uint64_t master_seed, std::uint64_t replication) const {
  RandomStream stream(master_seed, replication);
  return draw(stream);
}

}  // namespace survey
