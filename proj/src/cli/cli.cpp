#include "survey/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "survey/bounds.hpp"
#include "survey/compensated_sum.hpp"
#include "survey/errors.hpp"
#include "survey/estimators.hpp"
#include "survey/exact.hpp"
#include "survey/montecarlo.hpp"
#include "survey/poisson_binomial.hpp"
#include "survey/population.hpp"
#include "survey/schemes.hpp"

namespace survey::cli {
namespace {

struct Options {
  std::string pop;
  std::optional<std::size_t> n;
  std::string scheme = "rejective";
  std::uint64_t seed = 0;
  std::uint64_t reps = 0;  // 0: subcommand default
  std::string t_grid;
  double delta = 0.05;
  double constant_C = 1.0;
  std::string out;
  std::string summary;
  std::string pairs_out;
  std::string profile_out;
  std::string tails_out;
  std::string direction = "forward";
  std::string bound;
  std::string against = "rao-sampford";
  std::string checks;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
};

/// Output files collected during a command and committed together at the end.
class Outputs {
 public:
  explicit Outputs(std::ostream& console) : console_(console) {}
  void add(const std::string& path, std::string content) {
    if (path.empty() || path == "-") {
      console_text_ += content;
    } else {
      files_.emplace_back(path, std::move(content));
    }
  }
  void commit() {
    for (const auto& [path, content] : files_) write_atomically(path, content);
    console_ << console_text_;
  }

 private:
  static void write_atomically(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) throw InputError("cannot open '" + tmp + "' for writing");
      f << content;
      f.flush();
      if (!f) {
        std::filesystem::remove(tmp);
        throw InputError("write to '" + tmp + "' failed");
      }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
      std::filesystem::remove(tmp);
      throw InputError("cannot rename output into '" + path + "': " + ec.message());
    }
  }

  std::ostream& console_;
  std::string console_text_;
  std::vector<std::pair<std::string, std::string>> files_;
};

std::string fmt(double v) { return format_double(v); }

double parse_real(const std::string& s, const std::string& what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw InputError("cannot parse " + what + " '" + s + "'");
  }
  return v;
}

std::vector<double> parse_grid(const std::string& spec) {
  const auto a = spec.find(':');
  const auto b = a == std::string::npos ? a : spec.find(':', a + 1);
  if (b == std::string::npos || spec.find(':', b + 1) != std::string::npos) {
    throw InputError("--t-grid expects min:max:count, got '" + spec + "'");
  }
  const double lo = parse_real(spec.substr(0, a), "grid minimum");
  const double hi = parse_real(spec.substr(a + 1, b - a - 1), "grid maximum");
  std::size_t count = 0;
  const std::string c = spec.substr(b + 1);
  const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), count);
  if (ec != std::errc() || ptr != c.data() + c.size() || count == 0) {
    throw InputError("grid count must be a positive integer, got '" + c + "'");
  }
  if (lo < 0.0) throw InputError("grid minimum must be nonnegative");
  return linear_grid(lo, hi, count);
}

std::size_t require_n(const Options& o, std::size_t N) {
  if (!o.n) throw InputError("--n is required for this scheme");
  if (*o.n < 1 || *o.n >= N) {
    throw InputError("--n must satisfy 1 <= n < N = " + std::to_string(N) + ", got " +
                     std::to_string(*o.n));
  }
  return *o.n;
}

std::vector<double> to_vector(std::span<const double> s) { return {s.begin(), s.end()}; }

/// Canonical parameters of a rejective design of size n from whatever the file holds.
std::vector<double> canonical_from(const LoadedPopulation& lp, std::size_t n, std::ostream& err) {
  if (lp.canonical) {
    const double s = lp.canonical->sum();
    if (std::abs(s - static_cast<double>(n)) <= 1e-9) return to_vector(lp.canonical->probs());
    err << "note: p column sums to " << fmt(s) << ", rescaled in odds to sum to n = " << n << '\n';
    return canonicalize(lp.canonical->probs(), n);
  }
  if (lp.first_order) {
    const CanonicalSolution sol = solve_canonical(lp.first_order->probs(), n);
    for (const auto& w : sol.warnings) err << "note: " << w << '\n';
    if (!sol.forced.empty()) {
      throw InputError("pi column has units with pi_i = 1; a rejective design needs pi_i < 1");
    }
    return sol.p;
  }
  throw InputError("population file needs a p or pi column for this scheme");
}

SchemeSpec build_scheme(const Options& o, const LoadedPopulation& lp, std::ostream& err) {
  const std::size_t N = lp.population.size();
  if (o.scheme == "poisson") {
    if (lp.canonical) return SchemeSpec::poisson(*lp.canonical);
    if (lp.first_order) return SchemeSpec::poisson(*lp.first_order);
    throw InputError("poisson scheme needs a p or pi column");
  }
  const std::size_t n = require_n(o, N);
  if (o.scheme == "rejective") {
    return SchemeSpec::rejective(DesignWeights(canonical_from(lp, n, err), WeightKind::canonical, n), n,
                                 default_rejective_sampler(N, n));
  }
  if (o.scheme == "swor") return SchemeSpec::swor(N, n);
  if (o.scheme == "rao-sampford") {
    if (lp.first_order) return SchemeSpec::rao_sampford(*lp.first_order, n);
    if (lp.canonical) {
      // Matched to the rejective design with these canonical parameters.
      return SchemeSpec::rao_sampford(
          DesignWeights(first_order_inclusion(canonical_from(lp, n, err), n), WeightKind::first_order), n);
    }
    throw InputError("rao-sampford scheme needs a pi or p column");
  }
  throw InputError("unknown scheme '" + o.scheme + "'");
}

std::string flag_text(std::uint32_t flags) {
  std::string s;
  auto add = [&](const char* name) {
    if (!s.empty()) s += '|';
    s += name;
  };
  if (flags & kUncalibratedConstant) add("uncalibrated-constant");
  if (flags & kPreconditionViolated) add("precondition-violated");
  if (flags & kBelowBiasRadius) add("below-bias-radius");
  return s;
}

std::string profile_text(const VarianceProfile& p) {
  std::ostringstream s;
  s << "d_N=" << fmt(p.d_N) << "\nd_star_N=" << fmt(p.d_star_N) << "\ntheta_N=" << fmt(p.theta_N)
    << "\nsigma2_N=" << fmt(p.sigma2_N) << "\npoisson_var=" << fmt(p.poisson_var)
    << "\nna_var=" << fmt(p.na_var) << "\nM_N=" << fmt(p.M_N) << "\nc_p=" << fmt(p.c_p)
    << "\nc_pi=" << fmt(p.c_pi) << '\n';
  return s.str();
}

int cmd_inclusion(const Options& o, Outputs& outs, std::ostream&) {
  const LoadedPopulation lp = load_population_file(o.pop);
  const std::size_t N = lp.population.size();
  const std::size_t n = require_n(o, N);
  std::vector<double> p, pi;
  if (o.direction == "forward") {
    if (!lp.canonical) throw InputError("forward direction needs a p column");
    p = to_vector(lp.canonical->probs());
    pi = first_order_inclusion(p, n);
  } else if (o.direction == "inverse") {
    if (!lp.first_order) throw InputError("inverse direction needs a pi column");
    pi = to_vector(lp.first_order->probs());
    p = solve_canonical(pi, n).p;
  } else {
    throw InputError("--direction must be forward or inverse");
  }
  std::ostringstream csv;
  csv << "unit,p,pi\n";
  for (std::size_t i = 0; i < N; ++i) csv << i << ',' << fmt(p[i]) << ',' << fmt(pi[i]) << '\n';
  if (!o.pairs_out.empty()) {
    std::vector<double> forward_p = p;
    for (double& v : forward_p) {
      if (v >= 1.0) throw InputError("pairwise inclusions need every p_i < 1");
    }
    const SymmetricMatrix pij = second_order_inclusion(forward_p, n);
    std::ostringstream pairs;
    pairs << "i,j,pi_ij\n";
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t j = i + 1; j < N; ++j) pairs << i << ',' << j << ',' << fmt(pij(i, j)) << '\n';
    }
    outs.add(o.pairs_out, pairs.str());
  }
  outs.add(o.out, csv.str());
  return kExitOk;
}

int cmd_sample(const Options& o, Outputs& outs, std::ostream& err) {
  const LoadedPopulation lp = load_population_file(o.pop);
  const SchemeSampler sampler(build_scheme(o, lp, err));
  const std::uint64_t reps = o.reps == 0 ? 1 : o.reps;
  std::ostringstream csv;
  csv << "replication,unit\n";
  for (std::uint64_t r = 0; r < reps; ++r) {
    for (std::size_t i : sampler.draw(o.seed, r).selected) csv << r << ',' << i << '\n';
  }
  outs.add(o.out, csv.str());
  return kExitOk;
}

int cmd_estimate(const Options& o, Outputs& outs, std::ostream& err) {
  const LoadedPopulation lp = load_population_file(o.pop);
  const SchemeSpec spec = build_scheme(o, lp, err);
  const DesignPair design = resolve_design(spec);
  const std::uint64_t reps = o.reps == 0 ? 1 : o.reps;
  const ReplicationResults res =
      run_replications(SchemeSampler(spec), lp.population, design.p, design.pi, reps, o.seed, o.workers);
  std::ostringstream csv;
  csv << "replication,size,ht_pi,ht_p\n";
  for (std::uint64_t r = 0; r < reps; ++r) {
    csv << r << ',' << res.sizes[r] << ',' << fmt(res.ht_pi[r]) << ',' << fmt(res.ht_p[r]) << '\n';
  }
  if (!o.profile_out.empty()) {
    outs.add(o.profile_out, "population_total=" + fmt(lp.population.total()) + '\n' +
                                profile_text(scheme_profile(spec, lp.population, design)));
  }
  outs.add(o.out, csv.str());
  return kExitOk;
}

int cmd_bounds(const Options& o, Outputs& outs, std::ostream& err) {
  const LoadedPopulation lp = load_population_file(o.pop);
  const SchemeSpec spec = build_scheme(o, lp, err);
  const VarianceProfile prof = scheme_profile(spec, lp.population, resolve_design(spec));
  const BoundConstants constants{o.constant_C, 1.0};
  const std::vector<double> grid =
      o.t_grid.empty() ? default_threshold_grid(spec, prof) : parse_grid(o.t_grid);
  std::ostringstream csv;
  csv << "bound,t,value,reported,flags\n";
  for (BoundKind kind : applicable_bounds(spec.kind())) {
    const BoundCurve curve = bound_curve(kind, prof, grid, constants);
    for (std::size_t k = 0; k < grid.size(); ++k) {
      csv << to_string(kind) << ',' << fmt(grid[k]) << ',' << fmt(curve.values[k]) << ','
          << fmt(std::min(1.0, curve.values[k])) << ',' << flag_text(curve.flags[k]) << '\n';
    }
  }
  outs.add(o.out, csv.str());
  return kExitOk;
}

int cmd_ci(const Options& o, Outputs& outs, std::ostream& err) {
  if (!(o.delta > 0.0 && o.delta <= 1.0)) throw InputError("--delta must lie in (0, 1]");
  const LoadedPopulation lp = load_population_file(o.pop);
  const SchemeSpec spec = build_scheme(o, lp, err);
  const DesignPair design = resolve_design(spec);
  const VarianceProfile prof = scheme_profile(spec, lp.population, design);
  const std::vector<BoundKind> kinds = applicable_bounds(spec.kind());
  const BoundKind kind = o.bound.empty() ? kinds.front() : bound_kind_from_string(o.bound);
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
    throw InputError(std::string("bound ") + to_string(kind) + " does not apply to scheme " + o.scheme);
  }
  const BoundConstants constants{o.constant_C, 1.0};
  const double radius = two_sided_radius(kind, prof, o.delta, constants);
  const SampleDraw draw = SchemeSampler(spec).draw(o.seed, 0);
  const double estimate =
      ht_total(lp.population, uses_canonical_weights(kind) ? design.p : design.pi, draw);
  std::ostringstream s;
  s << "bound=" << to_string(kind) << "\ndelta=" << fmt(o.delta) << "\nsample_size=" << draw.size()
    << "\nestimate=" << fmt(estimate) << "\nradius=" << fmt(radius)
    << "\nlower=" << fmt(estimate - radius) << "\nupper=" << fmt(estimate + radius) << '\n';
  if (!constant_free(kind)) {
    s << "constant_C=" << fmt(o.constant_C) << " (uncalibrated universal constant)\n";
  }
  outs.add(o.out, s.str());
  return kExitOk;
}

std::vector<CheckKind> parse_checks(const std::string& list) {
  std::vector<CheckKind> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(check_kind_from_string(item));
  }
  return out;
}

int cmd_verify(const Options& o, Outputs& outs, std::ostream& err) {
  const LoadedPopulation lp = load_population_file(o.pop);
  ExperimentConfig cfg{build_scheme(o, lp, err), lp.population};
  cfg.replications = o.reps == 0 ? 10'000 : o.reps;
  if (!o.t_grid.empty()) cfg.thresholds = parse_grid(o.t_grid);
  cfg.master_seed = o.seed;
  cfg.checks = parse_checks(o.checks);
  cfg.delta = o.delta;
  cfg.constants.C = o.constant_C;
  cfg.workers = o.workers;
  const VerificationReport report = run_experiment(cfg);
  std::ostringstream csv, summary;
  write_report_csv(csv, report);
  write_report_summary(summary, report);
  outs.add(o.out, csv.str());
  outs.add(o.summary, summary.str());
  return report.passed() ? kExitOk : kExitCheckFailed;
}

int cmd_compare(const Options& o, Outputs& outs, std::ostream& err) {
  const LoadedPopulation lp = load_population_file(o.pop);
  const std::size_t N = lp.population.size();
  const std::size_t n = require_n(o, N);
  const std::vector<double> p = canonical_from(lp, n, err);
  const SchemeSpec reference = SchemeSpec::rejective(DesignWeights(p, WeightKind::canonical, n), n);
  std::optional<SchemeSpec> approx;
  if (o.against == "poisson") {
    approx = SchemeSpec::poisson(DesignWeights(p, WeightKind::canonical));
  } else if (o.against == "rao-sampford") {
    approx = SchemeSpec::rao_sampford(DesignWeights(first_order_inclusion(p, n), WeightKind::first_order), n);
  } else {
    throw InputError("--against must be poisson or rao-sampford");
  }
  const PlanTable r = enumerate_plan(reference);
  const PlanTable rt = enumerate_plan(*approx);
  const double l1 = tv_distance(r, rt);
  const double kl = kl_divergence(r, rt);
  const double root = std::sqrt(2.0 * kl);
  const bool pinsker = l1 <= root * (1.0 + 1e-12) + 1e-15;

  const DeviationDistribution dr(r, lp.population, p), drt(rt, lp.population, p);
  const std::vector<double> grid =
      o.t_grid.empty() ? linear_grid(dr.min_deviation() - 1.0, dr.max_deviation() + 1.0, 201)
                       : parse_grid(o.t_grid);
  double max_gap = 0.0;
  std::ostringstream tails;
  tails << "t,tail_reference,tail_approximation,gap\n";
  for (double t : grid) {
    const double a = dr.tail(t), b = drt.tail(t);
    max_gap = std::max(max_gap, std::abs(a - b));
    tails << fmt(t) << ',' << fmt(a) << ',' << fmt(b) << ',' << fmt(std::abs(a - b)) << '\n';
  }
  const bool transfer = max_gap <= l1 + 1e-12;
  std::ostringstream csv;
  csv << "reference,approximation,l1,kl,sqrt_2kl,pinsker,max_tail_gap,transfer\n"
      << "rejective," << o.against << ',' << fmt(l1) << ',' << fmt(kl) << ',' << fmt(root) << ','
      << (pinsker ? 1 : 0) << ',' << fmt(max_gap) << ',' << (transfer ? 1 : 0) << '\n';
  if (!o.tails_out.empty()) outs.add(o.tails_out, tails.str());
  outs.add(o.out, csv.str());
  return pinsker && transfer ? kExitOk : kExitCheckFailed;
}

void add_design_flags(CLI::App* sub, Options& o, bool with_scheme) {
  sub->add_option("--pop", o.pop, "population CSV with header x[,pi][,p]")->required();
  sub->add_option("--n", o.n, "sample size n (1 <= n < N)");
  if (with_scheme) {
    sub->add_option("--scheme", o.scheme, "sampling design")
        ->check(CLI::IsMember({"poisson", "rejective", "swor", "rao-sampford"}))
        ->capture_default_str();
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Horvitz-Thompson tail bounds for Poisson, rejective and related sampling designs"};
  app.name("survey");
  app.require_subcommand(1);

  auto* inclusion = app.add_subcommand(
      "inclusion", "first-order (and optional second-order) inclusion probabilities of a rejective design");
  add_design_flags(inclusion, o, false);
  inclusion->add_option("--direction", o.direction, "forward: p -> pi; inverse: pi -> canonical p")
      ->check(CLI::IsMember({"forward", "inverse"}))
      ->capture_default_str();
  inclusion->add_option("--pairs-out", o.pairs_out, "write pi_ij to FILE (columns i,j,pi_ij)");
  inclusion->add_option("--out", o.out, "output CSV (default stdout)");
  inclusion->footer("Output columns: unit,p,pi");

  auto* sample = app.add_subcommand("sample", "draw samples");
  add_design_flags(sample, o, true);
  sample->add_option("--seed", o.seed, "master seed")->capture_default_str();
  sample->add_option("--reps", o.reps, "number of samples (default 1)");
  sample->add_option("--out", o.out, "output CSV (default stdout)");
  sample->footer("Output columns: replication,unit (one row per selected unit)");

  auto* estimate = app.add_subcommand("estimate", "Horvitz-Thompson totals over replicated draws");
  add_design_flags(estimate, o, true);
  estimate->add_option("--seed", o.seed, "master seed")->capture_default_str();
  estimate->add_option("--reps", o.reps, "number of replications (default 1)");
  estimate->add_option("--workers", o.workers, "worker threads");
  estimate->add_option("--profile-out", o.profile_out, "write the variance profile (key=value) to FILE");
  estimate->add_option("--out", o.out, "output CSV (default stdout)");
  estimate->footer("Output columns: replication,size,ht_pi,ht_p");

  auto* bounds = app.add_subcommand("bounds", "tail bound curves of a design");
  add_design_flags(bounds, o, true);
  bounds->add_option("--t-grid", o.t_grid, "thresholds min:max:count");
  bounds->add_option("--constant-C", o.constant_C, "universal constant of the rejective bounds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bounds->add_option("--out", o.out, "output CSV (default stdout)");
  bounds->footer("Output columns: bound,t,value,reported,flags (reported = min(1, value))");

  auto* ci = app.add_subcommand("ci", "confidence interval for S_N from one draw");
  add_design_flags(ci, o, true);
  ci->add_option("--seed", o.seed, "master seed of the draw")->capture_default_str();
  ci->add_option("--delta", o.delta, "miscoverage level in (0, 1]")->capture_default_str();
  ci->add_option("--bound", o.bound, "bound family (default: first applicable)");
  ci->add_option("--constant-C", o.constant_C, "universal constant of the rejective bounds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  ci->add_option("--out", o.out, "output key=value file (default stdout)");
  ci->footer("Output keys: bound,delta,sample_size,estimate,radius,lower,upper");

  auto* verify = app.add_subcommand("verify", "replicated experiment checking the bounds; exit 1 on failure");
  add_design_flags(verify, o, true);
  verify->add_option("--seed", o.seed, "master seed")->capture_default_str();
  verify->add_option("--reps", o.reps, "replications (default 10000)");
  verify->add_option("--t-grid", o.t_grid, "thresholds min:max:count");
  verify->add_option("--delta", o.delta, "CI coverage miscoverage level")->capture_default_str();
  verify->add_option("--constant-C", o.constant_C, "universal constant of the rejective bounds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  verify->add_option("--checks", o.checks, "comma-separated subset of checks (default all)");
  verify->add_option("--workers", o.workers, "worker threads (output does not depend on it)");
  verify->add_option("--out", o.out, "report CSV")->required();
  verify->add_option("--summary", o.summary, "key=value summary (default stdout)");
  verify->footer(
      "Report columns: check,t,empirical,cp_lower,cp_upper,exact,bound,envelope,asserted\n"
      "Scalar checks use empirical = value, bound = limit, envelope = passed, empty t.");

  auto* compare = app.add_subcommand("compare", "distance between a rejective plan and an approximation");
  add_design_flags(compare, o, false);
  compare->add_option("--against", o.against, "approximating design")
      ->check(CLI::IsMember({"poisson", "rao-sampford"}))
      ->capture_default_str();
  compare->add_option("--t-grid", o.t_grid, "thresholds min:max:count for the tail comparison");
  compare->add_option("--tails-out", o.tails_out, "write both tails to FILE (columns t,tail_reference,tail_approximation,gap)");
  compare->add_option("--out", o.out, "output CSV (default stdout)");
  compare->footer("Output columns: reference,approximation,l1,kl,sqrt_2kl,pinsker,max_tail_gap,transfer");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  const std::map<CLI::App*, int (*)(const Options&, Outputs&, std::ostream&)> handlers{
      {inclusion, cmd_inclusion}, {sample, cmd_sample}, {estimate, cmd_estimate},
      {bounds, cmd_bounds},       {ci, cmd_ci},         {verify, cmd_verify},
      {compare, cmd_compare}};
  if (o.workers == 0) o.workers = 1;
  try {
    for (const auto& [sub, handler] : handlers) {
      if (sub->parsed()) {
        Outputs outs(out);
        const int code = handler(o, outs, err);
        outs.commit();
        return code;
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace survey::cli
