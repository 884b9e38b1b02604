#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace survey {

/// Fixed values x_1..x_N of a finite population. Immutable once built.
class Population {
 public:
  /// Throws InputError when `values` is empty or holds a non-finite entry.
  explicit Population(std::vector<double> values);

  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Population total S_N, accumulated with compensated summation.
  double total() const { return total_; }

 private:
  std::vector<double> values_;
  double total_;
};

double total(const Population& pop);

enum class WeightKind {
  first_order,  // inclusion probabilities pi_i of the design, in (0,1]
  canonical,    // Poisson parameters p_i of a rejective design, in (0,1)
};

const char* to_string(WeightKind kind);

/// A probability vector over units, tagged with what it parameterizes.
class DesignWeights {
 public:
  // Validates the domain for `kind`. When `target_size` is given for
  // canonical weights, the entries must sum to it within 1e-9.
  DesignWeights(std::vector<double> probs, WeightKind kind,
                std::optional<std::size_t> target_size = std::nullopt);

  std::span<const double> probs() const { return probs_; }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::size_t size() const { return probs_.size(); }
  WeightKind kind() const { return kind_; }
  std::optional<std::size_t> target_size() const { return target_size_; }

  double sum() const;
  /// sum_i w_i (1 - w_i): d_N for canonical weights, d*_N for first-order.
  double size_variance() const;

 private:
  std::vector<double> probs_;
  WeightKind kind_;
  std::optional<std::size_t> target_size_;
};

/// A realized sample: indicator vector plus the selected indices.
struct SampleDraw {
  std::vector<std::uint8_t> indicators;
  std::vector<std::size_t> selected;  // ascending
  std::uint64_t seed = 0;
  std::uint64_t replication = 0;

  static SampleDraw from_indicators(std::vector<std::uint8_t> indicators,
                                    std::uint64_t seed = 0,
                                    std::uint64_t replication = 0);
  static SampleDraw from_selected(std::size_t population_size,
                                  std::vector<std::size_t> selected,
                                  std::uint64_t seed = 0,
                                  std::uint64_t replication = 0);
  std::size_t size() const { return selected.size(); }
};

struct LoadedPopulation {
  Population population;
  std::optional<DesignWeights> first_order;  // `pi` column
  std::optional<DesignWeights> canonical;    // `p` column
};

/// Parses CSV text with header `x[,pi][,p]` (any column order).
LoadedPopulation load_population(std::istream& in);
LoadedPopulation load_population_file(const std::string& path);

/// Writes the columns present using shortest round-trip decimal formatting.
void save_population(std::ostream& out, const Population& pop,
                     const DesignWeights* first_order = nullptr,
                     const DesignWeights* canonical = nullptr);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace survey
