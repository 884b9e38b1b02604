#include "survey/population.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "survey/compensated_sum.hpp"
#include "survey/errors.hpp"

namespace survey {

Population::Population(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw InputError("population must contain at least one unit");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      throw InputError("population value " + std::to_string(i + 1) + " is not finite");
    }
  }
  total_ = compensated_sum(values_);
}

double total(const Population& pop) { return pop.total(); }

const char* to_string(WeightKind kind) {
  switch (kind) {
    case WeightKind::first_order: return "pi";
    case WeightKind::canonical: return "p";
  }
  return "?";
}

DesignWeights::DesignWeights(std::vector<double> probs, WeightKind kind,
                             std::optional<std::size_t> target_size)
    : probs_(std::move(probs)), kind_(kind), target_size_(target_size) {
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    const double w = probs_[i];
    const std::string unit = std::to_string(i + 1);
    if (!std::isfinite(w)) throw InputError("weight of unit " + unit + " is not finite");
    if (kind_ == WeightKind::first_order && !(w > 0.0 && w <= 1.0)) {
      throw InputError("inclusion probability of unit " + unit + " must lie in (0,1]");
    }
    if (kind_ == WeightKind::canonical && !(w > 0.0 && w < 1.0)) {
      throw InputError("canonical p of unit " + unit + " must lie in (0,1)");
    }
  }
  if (kind_ == WeightKind::canonical && target_size_) {
    const double s = sum();
    if (std::abs(s - static_cast<double>(*target_size_)) > 1e-9) {
      throw InputError("canonical weights sum to " + format_double(s) +
                       ", expected sample size " + std::to_string(*target_size_));
    }
  }
}

double DesignWeights::sum() const { return compensated_sum(probs_); }

double DesignWeights::size_variance() const {
  CompensatedSum acc;
  for (double w : probs_) acc += w * (1.0 - w);
  return acc.value();
}

SampleDraw SampleDraw::from_indicators(std::vector<std::uint8_t> indicators,
                                       std::uint64_t seed, std::uint64_t replication) {
  SampleDraw d;
  d.indicators = std::move(indicators);
  for (std::size_t i = 0; i < d.indicators.size(); ++i) {
    if (d.indicators[i]) d.selected.push_back(i);
  }
  d.seed = seed;
  d.replication = replication;
  return d;
}

SampleDraw SampleDraw::from_selected(std::size_t population_size,
                                     std::vector<std::size_t> selected,
                                     std::uint64_t seed, std::uint64_t replication) {
  std::sort(selected.begin(), selected.end());
  std::vector<std::uint8_t> ind(population_size, 0);
  for (std::size_t i : selected) {
    if (i >= population_size) throw InputError("selected unit index out of range");
    if (ind[i]) throw InputError("selected unit listed twice");
    ind[i] = 1;
  }
  SampleDraw d;
  d.indicators = std::move(ind);
  d.selected = std::move(selected);
  d.seed = seed;
  d.replication = replication;
  return d;
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    cells.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return cells;
}

double parse_cell(const std::string& cell, std::size_t line_no, const std::string& column) {
  double value = 0.0;
  const char* begin = cell.data();
  const char* end = cell.data() + cell.size();
  if (!cell.empty() && *begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (cell.empty() || ec != std::errc() || ptr != end) {
    throw InputError("line " + std::to_string(line_no) + ": column '" + column +
                     "' holds non-numeric value '" + cell + "'");
  }
  if (!std::isfinite(value)) {
    throw InputError("line " + std::to_string(line_no) + ": column '" + column +
                     "' holds non-finite value '" + cell + "'");
  }
  return value;
}

}  // namespace

LoadedPopulation load_population(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_row(line);
      break;
    }
  }
  if (header.empty()) throw InputError("population file is empty");

  constexpr std::array<const char*, 3> known = {"x", "pi", "p"};
  std::array<int, 3> column_of = {-1, -1, -1};
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto it = std::find(known.begin(), known.end(), header[c]);
    if (it == known.end()) throw InputError("unknown column '" + header[c] + "' in header");
    const auto k = static_cast<std::size_t>(it - known.begin());
    if (column_of[k] >= 0) throw InputError("duplicate column '" + header[c] + "' in header");
    column_of[k] = static_cast<int>(c);
  }
  if (column_of[0] < 0) throw InputError("header has no 'x' column");

  std::array<std::vector<double>, 3> data;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_row(line);
    if (cells.size() != header.size()) {
      throw InputError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " cells, found " +
                       std::to_string(cells.size()));
    }
    for (std::size_t k = 0; k < known.size(); ++k) {
      if (column_of[k] < 0) continue;
      const double v = parse_cell(cells[static_cast<std::size_t>(column_of[k])], line_no, known[k]);
      if (k == 1 && !(v > 0.0 && v <= 1.0)) {
        throw InputError("line " + std::to_string(line_no) + ": pi must lie in (0,1]");
      }
      if (k == 2 && !(v > 0.0 && v < 1.0)) {
        throw InputError("line " + std::to_string(line_no) + ": canonical p must lie in (0,1)");
      }
      data[k].push_back(v);
    }
  }
  if (data[0].empty()) throw InputError("population file has a header but no rows");

  LoadedPopulation loaded{Population(std::move(data[0])), std::nullopt, std::nullopt};
  if (column_of[1] >= 0) loaded.first_order.emplace(std::move(data[1]), WeightKind::first_order);
  if (column_of[2] >= 0) loaded.canonical.emplace(std::move(data[2]), WeightKind::canonical);
  return loaded;
}

LoadedPopulation load_population_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open population file '" + path + "'");
  return load_population(in);
}

std::string format_double(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), ptr);
}

void save_population(std::ostream& out, const Population& pop,
                     const DesignWeights* first_order, const DesignWeights* canonical) {
  for (const DesignWeights* w : {first_order, canonical}) {
    if (w && w->size() != pop.size()) throw InputError("weights and population differ in length");
  }
  out << "x";
  if (first_order) out << ",pi";
  if (canonical) out << ",p";
  out << '\n';
  for (std::size_t i = 0; i < pop.size(); ++i) {
    out << format_double(pop[i]);
    if (first_order) out << ',' << format_double((*first_order)[i]);
    if (canonical) out << ',' << format_double((*canonical)[i]);
    out << '\n';
  }
}

}  // namespace survey
