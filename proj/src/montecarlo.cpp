#include "survey/montecarlo.hpp"

#include <algorithm>
#include <boost/math/special_functions/beta.hpp>
#include <cmath>
#include <limits>
#include <exception>
#include <numbers>
#include <ostream>
#include <thread>

#include "survey/compensated_sum.hpp"
#include "survey/errors.hpp"
#include "survey/exact.hpp"
#include "survey/poisson_binomial.hpp"

namespace survey {

const char* to_string(CheckKind kind) {
  switch (kind) {
    case CheckKind::unbiasedness: return "unbiasedness";
    case CheckKind::pathwise_bias: return "pathwise-bias";
    case CheckKind::local_limit: return "local-limit";
    case CheckKind::variance_identity: return "variance-identity";
    case CheckKind::size_distribution: return "size-distribution";
    case CheckKind::tail_envelope: return "tail-envelope";
    case CheckKind::ci_coverage: return "ci-coverage";
    case CheckKind::sufficient_constant: return "sufficient-constant";
    case CheckKind::sharpness: return "sharpness";
  }
  return "?";
}

std::vector<CheckKind> all_checks() {
  return {CheckKind::unbiasedness,     CheckKind::pathwise_bias,     CheckKind::local_limit,
          CheckKind::variance_identity, CheckKind::size_distribution, CheckKind::tail_envelope,
          CheckKind::ci_coverage,      CheckKind::sufficient_constant, CheckKind::sharpness};
}

CheckKind check_kind_from_string(const std::string& name) {
  for (CheckKind k : all_checks()) {
    if (name == to_string(k)) return k;
  }
  throw InputError("unknown check '" + name + "'");
}

namespace {

// Runs body(r) for r in [0, reps) on up to `workers` threads, in contiguous
// chunks. The first exception (lowest chunk) is rethrown.
template <typename Body>
void parallel_for(std::uint64_t reps, unsigned workers, Body body) {
  const std::uint64_t w = std::max<std::uint64_t>(1, std::min<std::uint64_t>(workers, reps));
  if (w == 1) {
    for (std::uint64_t r = 0; r < reps; ++r) body(r);
    return;
  }
  std::vector<std::exception_ptr> errors(w);
  std::vector<std::thread> threads;
  threads.reserve(w);
  for (std::uint64_t k = 0; k < w; ++k) {
    threads.emplace_back([&, k] {
      const std::uint64_t lo = reps * k / w, hi = reps * (k + 1) / w;
      try {
        for (std::uint64_t r = lo; r < hi; ++r) body(r);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

ReplicationResults run_replications(const SchemeSampler& sampler, const Population& pop,
                                    std::span<const double> p, std::span<const double> pi,
                                    std::uint64_t reps, std::uint64_t master_seed,
                                    unsigned workers) {
  if (reps == 0) throw InputError("replications must be at least 1");
  ReplicationResults out;
  out.ht_pi.resize(reps);
  out.ht_p.resize(reps);
  out.sizes.resize(reps);
  parallel_for(reps, workers, [&](std::uint64_t r) {
    const SampleDraw d = sampler.draw(master_seed, r);
    out.ht_pi[r] = ht_total(pop, pi, d);
    out.ht_p[r] = ht_total(pop, p, d);
    out.sizes[r] = static_cast<std::uint32_t>(d.size());
  });
  return out;
}

Interval clopper_pearson(std::uint64_t successes, std::uint64_t trials, double level) {
  if (trials == 0) throw InputError("Clopper-Pearson interval needs at least one trial");
  if (successes > trials) throw InputError("successes exceed trials");
  if (!(level > 0.0 && level < 1.0)) throw InputError("confidence level must lie in (0, 1)");
  const double alpha = 1.0 - level;
  const auto k = static_cast<double>(successes);
  const auto n = static_cast<double>(trials);
  Interval ci;
  ci.lower = successes == 0 ? 0.0 : boost::math::ibeta_inv(k, n - k + 1.0, alpha / 2.0);
  ci.upper = successes == trials ? 1.0 : boost::math::ibeta_inv(k + 1.0, n - k, 1.0 - alpha / 2.0);
  return ci;
}

std::vector<TailEstimate> empirical_tail(std::span<const double> deviations,
                                         std::span<const double> thresholds, double level) {
  if (deviations.empty()) throw InputError("empirical tail needs at least one replication");
  std::vector<double> sorted(deviations.begin(), deviations.end());
  std::sort(sorted.begin(), sorted.end());
  const auto trials = static_cast<std::uint64_t>(sorted.size());
  std::vector<TailEstimate> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) {
    const auto above = static_cast<std::uint64_t>(
        sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), t));
    out.push_back({t, above, trials, static_cast<double>(above) / static_cast<double>(trials),
                   clopper_pearson(above, trials, level)});
  }
  return out;
}

std::vector<TailEstimate> empirical_tail(const SchemeSampler& sampler, const Population& pop,
                                         std::span<const double> weights,
                                         std::span<const double> thresholds, std::uint64_t reps,
                                         std::uint64_t master_seed, double level,
                                         unsigned workers) {
  if (reps == 0) throw InputError("replications must be at least 1");
  std::vector<double> dev(reps);
  const double total = pop.total();
  parallel_for(reps, workers, [&](std::uint64_t r) {
    dev[r] = ht_total(pop, weights, sampler.draw(master_seed, r)) - total;
  });
  return empirical_tail(dev, thresholds, level);
}

bool VerificationReport::passed() const {
  for (const auto& r : rows) {
    if (r.asserted && !r.envelope) return false;
  }
  for (const auto& s : scalars) {
    if (s.asserted && !s.passed) return false;
  }
  return true;
}

std::vector<BoundKind> applicable_bounds(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::poisson:
      return {BoundKind::poisson_bennett, BoundKind::poisson_bernstein};
    case SchemeKind::rao_sampford:
      return {BoundKind::na_bennett, BoundKind::na_bernstein};
    default:
      return {BoundKind::na_bennett,        BoundKind::na_bernstein,
              BoundKind::rejective_bennett, BoundKind::rejective_bernstein,
              BoundKind::ht_pi_bennett,     BoundKind::ht_pi_bernstein};
  }
}

bool uses_canonical_weights(BoundKind kind) {
  switch (kind) {
    case BoundKind::poisson_bennett:
    case BoundKind::poisson_bernstein:
    case BoundKind::rejective_bennett:
    case BoundKind::rejective_bernstein:
      return true;
    default:
      return false;
  }
}

VarianceProfile scheme_profile(const SchemeSpec& scheme, const Population& pop,
                               const DesignPair& design) {
  if (scheme.kind() == SchemeKind::poisson) return poisson_profile(pop, design.p);
  return variance_profile(pop, design.p, design.pi, *scheme.sample_size());
}

namespace {

// Bounds asserted for the scheme; the rest are reported.
bool asserted_for(BoundKind kind, SchemeKind scheme) {
  return constant_free(kind) && scheme != SchemeKind::rao_sampford;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_and_se(std::span<const double> v) {
  CompensatedSum s;
  for (double x : v) s += x;
  const double mean = s.value() / static_cast<double>(v.size());
  CompensatedSum q;
  for (double x : v) q += (x - mean) * (x - mean);
  const double n = static_cast<double>(v.size());
  const double var = v.size() > 1 ? q.value() / (n - 1.0) : 0.0;
  return {mean, std::sqrt(var / n)};
}

std::optional<PlanTable> try_enumerate(const SchemeSpec& spec) {
  try {
    return enumerate_plan(spec);
  } catch (const CapExceeded&) {
    return std::nullopt;
  }
}

std::vector<double> deviations(std::span<const double> ht, double total) {
  std::vector<double> d(ht.size());
  for (std::size_t r = 0; r < ht.size(); ++r) d[r] = ht[r] - total;
  return d;
}

std::vector<double> exponent_grid(const VarianceProfile& profile) {
  const double scale = std::sqrt(std::max(profile.poisson_var, profile.na_var)) +
                       std::max(profile.c_p, profile.c_pi);
  std::vector<double> g;
  const std::size_t count = 400;
  const double lo = 1e-3 * scale, hi = 1e4 * scale;
  for (std::size_t k = 0; k < count; ++k) {
    g.push_back(lo * std::pow(hi / lo, static_cast<double>(k) / static_cast<double>(count - 1)));
  }
  return g;
}

}  // namespace

std::vector<double> default_threshold_grid(const SchemeSpec& scheme, const VarianceProfile& profile,
                                           std::size_t count) {
  const BoundKind loosest = scheme.kind() == SchemeKind::poisson ? BoundKind::poisson_bernstein
                                                                 : BoundKind::na_bernstein;
  const double hi = confidence_radius(
      [&](double t) { return evaluate_bound(loosest, profile, t).value; }, 1e-3);
  return linear_grid(0.0, hi, count);
}

VerificationReport run_experiment(const ExperimentConfig& config) {
  const SchemeSpec& scheme = config.scheme;
  const Population& pop = config.population;
  if (config.replications == 0) throw InputError("replications must be at least 1");
  if (pop.size() != scheme.population_size()) {
    throw InputError("population and scheme differ in size");
  }
  if (!std::is_sorted(config.thresholds.begin(), config.thresholds.end())) {
    throw InputError("threshold grid must be sorted ascending");
  }
  if (!config.thresholds.empty() && config.thresholds.front() < 0.0) {
    throw InputError("thresholds must be nonnegative");
  }
  const std::vector<CheckKind> checks = config.checks.empty() ? all_checks() : config.checks;
  auto wanted = [&](CheckKind k) { return std::find(checks.begin(), checks.end(), k) != checks.end(); };

  const DesignPair design = resolve_design(scheme);
  const double total = pop.total();

  VerificationReport rep;
  rep.scheme = to_string(scheme.kind());
  rep.population_size = pop.size();
  rep.sample_size = scheme.sample_size();
  rep.replications = config.replications;
  rep.master_seed = config.master_seed;
  rep.population_total = total;
  rep.profile = scheme_profile(scheme, pop, design);
  rep.constants = config.constants;
  const VarianceProfile& prof = rep.profile;

  const std::vector<double> grid = config.thresholds.empty()
                                       ? default_threshold_grid(scheme, prof)
                                       : config.thresholds;

  const SchemeSampler sampler(scheme);
  const ReplicationResults res = run_replications(sampler, pop, design.p, design.pi,
                                                  config.replications, config.master_seed,
                                                  config.workers);
  const std::vector<double> dev_pi = deviations(res.ht_pi, total);
  const std::vector<double> dev_p = deviations(res.ht_p, total);
  const std::optional<PlanTable> plan = try_enumerate(scheme);
  std::optional<DeviationDistribution> exact_pi, exact_p;
  if (plan) {
    exact_pi.emplace(*plan, pop, design.pi);
    exact_p.emplace(*plan, pop, design.p);
  }
  const std::vector<TailEstimate> tail_pi = empirical_tail(dev_pi, grid, config.confidence_level);
  const std::vector<TailEstimate> tail_p = empirical_tail(dev_p, grid, config.confidence_level);
  const double cp_floor = clopper_pearson(0, config.replications, config.confidence_level).upper;

  if (wanted(CheckKind::unbiasedness)) {
    const MeanSe m = mean_and_se(res.ht_pi);
    const double gap = std::abs(m.mean - total);
    const double limit = m.se > 0.0 ? 4.0 * m.se : 1e-9 * std::max(1.0, std::abs(total));
    rep.scalars.push_back({"unbiasedness", gap, limit, true, gap <= limit,
                           "|mean HT_pi - S_N| against 4 standard errors"});
  }

  if (wanted(CheckKind::pathwise_bias) && scheme.kind() != SchemeKind::poisson &&
      scheme.kind() != SchemeKind::rao_sampford) {
    std::uint64_t violations = 0;
    double worst = 0.0;
    for (std::size_t r = 0; r < res.ht_pi.size(); ++r) {
      const double gap = std::abs(res.ht_pi[r] - res.ht_p[r]);
      worst = std::max(worst, gap);
      if (gap > prof.M_N * (1.0 + 1e-12)) ++violations;
    }
    const bool applies = prof.d_N >= 1.0;
    rep.scalars.push_back({"pathwise-bias", static_cast<double>(violations), 0.0, applies,
                           violations == 0,
                           "draws with |HT_pi - HT_p| > M_N; worst gap " + format_double(worst) +
                               ", M_N " + format_double(prof.M_N) +
                               (applies ? "" : "; d_N < 1, reported only")});
  }

  if (wanted(CheckKind::local_limit)) {
    const double psum = compensated_sum(design.p);
    const double nearest = std::round(psum);
    const auto n = static_cast<std::size_t>(nearest);
    const PmfTable pmf = pmf_table(design.p);
    const double value = n < pmf.probs.size()
                             ? std::abs(pmf.probs[n] * std::sqrt(2.0 * std::numbers::pi * prof.d_N) - 1.0)
                             : 1.0;
    const bool applies = prof.d_N >= 25.0 && std::abs(psum - nearest) <= 1e-9;
    rep.scalars.push_back({"local-limit", value, 0.1, applies, value <= 0.1,
                           "|P{size = n} sqrt(2 pi d_N) - 1|" +
                               std::string(applies ? "" : "; reported only (d_N < 25 or sum p not integral)")});
  }

  if (wanted(CheckKind::variance_identity)) {
    const double r = std::abs(prof.decomposition_residual());
    rep.scalars.push_back({"variance-identity", r, 1e-10, true, r <= 1e-10,
                           "relative residual of poisson_var = sigma2_N + theta_N^2 d_N"});
  }

  if (wanted(CheckKind::size_distribution)) {
    if (scheme.fixed_size()) {
      const auto n = static_cast<std::uint32_t>(*scheme.sample_size());
      const auto off = static_cast<double>(
          std::count_if(res.sizes.begin(), res.sizes.end(), [&](std::uint32_t s) { return s != n; }));
      rep.scalars.push_back({"size-distribution", off, 0.0, true, off == 0.0,
                             "draws whose size differs from n"});
    } else {
      std::vector<double> s(res.sizes.begin(), res.sizes.end());
      const MeanSe m = mean_and_se(s);
      const double var = m.se * m.se * static_cast<double>(s.size());
      const double rel = prof.d_N > 0.0 ? std::abs(var / prof.d_N - 1.0) : std::abs(var);
      const bool applies = config.replications >= 100'000;
      rep.scalars.push_back({"size-distribution", rel, 0.05, applies, rel <= 0.05,
                             std::string("relative gap of empirical size variance to d_N") +
                                 (applies ? "" : "; reported only below 1e5 replications")});
    }
  }

  if (wanted(CheckKind::tail_envelope) || wanted(CheckKind::sufficient_constant)) {
    for (BoundKind kind : applicable_bounds(scheme.kind())) {
      const bool canonical = uses_canonical_weights(kind);
      const auto& tails = canonical ? tail_p : tail_pi;
      const auto& exact = canonical ? exact_p : exact_pi;
      double sufficient = 0.0;
      bool identified = false;
      for (const TailEstimate& te : tails) {
        const BoundValue b = evaluate_bound(kind, prof, te.t, config.constants);
        TailRow row;
        row.check = std::string("tail:") + to_string(kind);
        row.t = te.t;
        row.empirical = te.estimate;
        row.interval = te.interval;
        if (exact) row.exact = exact->tail(te.t);
        row.bound = b.reported();
        row.resolvable = b.value >= cp_floor;
        row.envelope = row.resolvable ? b.value >= te.interval.upper : b.value >= te.interval.lower;
        if (row.exact) row.envelope = row.envelope && b.value >= *row.exact - 1e-12;
        row.asserted = asserted_for(kind, scheme.kind());
        if (wanted(CheckKind::tail_envelope)) rep.rows.push_back(row);

        if (!constant_free(kind) && !(b.flags & kBelowBiasRadius)) {
          const double k = b.value / config.constants.C;
          const double observed = row.exact ? *row.exact : te.estimate;
          if (k > 0.0) {
            sufficient = std::max(sufficient, observed / k);
            identified = true;
          }
        }
      }
      if (wanted(CheckKind::sufficient_constant) && !constant_free(kind)) {
        if (identified) {
          rep.scalars.push_back({std::string("sufficient-constant:") + to_string(kind), sufficient,
                                 config.constants.C, false, sufficient <= config.constants.C,
                                 std::string("smallest C with C*kernel above the ") +
                                     (exact ? "exact" : "empirical") +
                                     " tail on the grid; reported, universal constant unknown"});
        } else {
          rep.scalars.push_back({std::string("sufficient-constant:") + to_string(kind),
                                 std::numeric_limits<double>::quiet_NaN(), config.constants.C, false, true,
                                 "no grid point above the bias radius M_N; not identified"});
        }
      }
    }
  }

  if (wanted(CheckKind::ci_coverage) && scheme.kind() == SchemeKind::poisson) {
    const double radius = two_sided_radius(BoundKind::poisson_bennett, prof, config.delta);
    const auto covered = static_cast<double>(std::count_if(
        dev_p.begin(), dev_p.end(), [&](double d) { return std::abs(d) <= radius; }));
    const double coverage = covered / static_cast<double>(dev_p.size());
    rep.scalars.push_back({"ci-coverage", coverage, 1.0 - config.delta, true,
                           coverage >= 1.0 - config.delta,
                           "share of replications with |HT - S_N| <= radius " + format_double(radius)});
  }

  if (wanted(CheckKind::sharpness) && scheme.kind() != SchemeKind::poisson &&
      scheme.kind() != SchemeKind::rao_sampford) {
    const bool applies = prof.theta_N * prof.theta_N * prof.d_N >= 0.5 * prof.poisson_var;
    const std::vector<double> g = exponent_grid(prof);
    for (auto [rej, na] : {std::pair{BoundKind::rejective_bennett, BoundKind::na_bennett},
                           std::pair{BoundKind::rejective_bernstein, BoundKind::na_bernstein}}) {
      std::optional<double> crossover;
      bool suffix = true;
      for (double t : g) {
        const bool above = bound_exponent(rej, prof, t) > bound_exponent(na, prof, t);
        if (above && !crossover) crossover = t;
        if (!above && crossover) suffix = false;
      }
      const bool ok = crossover.has_value() && suffix;
      rep.scalars.push_back(
          {std::string("sharpness:") + (shape_of(rej) == KernelShape::bennett ? "bennett" : "bernstein"),
           crossover.value_or(std::numeric_limits<double>::infinity()), 0.0, applies, ok,
           std::string("first t where the rejective exponent exceeds the NA exponent and stays above") +
               (applies ? "" : "; reported only (theta_N^2 d_N < poisson_var / 2)")});
    }
  }
  return rep;
}

namespace {

std::string fmt(double v) { return format_double(v); }

}  // namespace

void write_report_csv(std::ostream& out, const VerificationReport& report) {
  out << "check,t,empirical,cp_lower,cp_upper,exact,bound,envelope,asserted\n";
  for (const auto& r : report.rows) {
    out << r.check << ',' << fmt(r.t) << ',' << fmt(r.empirical) << ',' << fmt(r.interval.lower)
        << ',' << fmt(r.interval.upper) << ',' << (r.exact ? fmt(*r.exact) : "") << ','
        << fmt(r.bound) << ',' << (r.envelope ? 1 : 0) << ',' << (r.asserted ? 1 : 0) << '\n';
  }
  for (const auto& s : report.scalars) {
    out << s.name << ",," << fmt(s.value) << ",,,," << fmt(s.limit) << ',' << (s.passed ? 1 : 0)
        << ',' << (s.asserted ? 1 : 0) << '\n';
  }
}

void write_report_summary(std::ostream& out, const VerificationReport& report) {
  const VarianceProfile& p = report.profile;
  out << "scheme=" << report.scheme << '\n'
      << "population_size=" << report.population_size << '\n'
      << "sample_size=" << (report.sample_size ? std::to_string(*report.sample_size) : "random") << '\n'
      << "replications=" << report.replications << '\n'
      << "master_seed=" << report.master_seed << '\n'
      << "population_total=" << fmt(report.population_total) << '\n'
      << "d_N=" << fmt(p.d_N) << '\n'
      << "d_star_N=" << fmt(p.d_star_N) << '\n'
      << "theta_N=" << fmt(p.theta_N) << '\n'
      << "sigma2_N=" << fmt(p.sigma2_N) << '\n'
      << "poisson_var=" << fmt(p.poisson_var) << '\n'
      << "na_var=" << fmt(p.na_var) << '\n'
      << "M_N=" << fmt(p.M_N) << '\n'
      << "constant_C=" << fmt(report.constants.C) << " (uncalibrated universal constant)\n"
      << "constant_D=" << fmt(report.constants.D) << '\n';
  std::size_t asserted_rows = 0, failed_rows = 0;
  for (const auto& r : report.rows) {
    if (!r.asserted) continue;
    ++asserted_rows;
    if (!r.envelope) ++failed_rows;
  }
  out << "tail_rows=" << report.rows.size() << '\n'
      << "tail_rows_asserted=" << asserted_rows << '\n'
      << "tail_rows_failed=" << failed_rows << '\n';
  for (const auto& s : report.scalars) {
    const char* status = !s.asserted ? "reported" : (s.passed ? "pass" : "fail");
    out << s.name << '=' << status << " value=" << fmt(s.value) << " limit=" << fmt(s.limit)
        << " note=\"" << s.note << "\"\n";
  }
  out << "result=" << (report.passed() ? "pass" : "fail") << '\n';
}

bool CovarianceProbe::any_significantly_positive() const {
  return std::any_of(rows.begin(), rows.end(),
                     [](const CovarianceProbeRow& r) { return r.significantly_positive; });
}

CovarianceProbe na_covariance_probe(const SchemeSpec& scheme, std::uint64_t reps,
                                    std::size_t partitions, std::uint64_t master_seed,
                                    unsigned workers) {
  const std::size_t N = scheme.population_size();
  if (reps < 2) throw InputError("covariance probe needs at least two replications");
  if (partitions < 2 || partitions > N) {
    throw InputError("partitions must lie between 2 and the population size");
  }
  const SchemeSampler sampler(scheme);
  std::vector<std::size_t> block_of(N);
  for (std::size_t i = 0; i < N; ++i) block_of[i] = i * partitions / N;

  // Per replication: block sums of indicators.
  std::vector<std::uint32_t> sums(reps * partitions, 0);
  parallel_for(reps, workers, [&](std::uint64_t r) {
    const SampleDraw d = sampler.draw(master_seed, r);
    for (std::size_t i : d.selected) ++sums[r * partitions + block_of[i]];
  });

  CovarianceProbe probe;
  const auto R = static_cast<double>(reps);
  for (const char* fn : {"sum", "any"}) {
    const bool any = std::string(fn) == "any";
    auto value = [&](std::uint64_t r, std::size_t b) {
      const double s = sums[r * partitions + b];
      return any ? (s > 0.0 ? 1.0 : 0.0) : s;
    };
    for (std::size_t a = 0; a < partitions; ++a) {
      for (std::size_t b = a + 1; b < partitions; ++b) {
        CompensatedSum ma, mb;
        for (std::uint64_t r = 0; r < reps; ++r) {
          ma += value(r, a);
          mb += value(r, b);
        }
        const double mean_a = ma.value() / R, mean_b = mb.value() / R;
        CompensatedSum c, c2;
        for (std::uint64_t r = 0; r < reps; ++r) {
          const double z = (value(r, a) - mean_a) * (value(r, b) - mean_b);
          c += z;
          c2 += z * z;
        }
        const double cov = c.value() / (R - 1.0);
        const double mz = c.value() / R;
        const double var_z = std::max(0.0, c2.value() / R - mz * mz);
        const double se = std::sqrt(var_z / R);
        probe.rows.push_back({fn, a, b, cov, se, std::nullopt, cov > 4.0 * se && cov > 0.0});
      }
    }
  }

  if (N <= 10) {
    const PlanTable plan = enumerate_plan(scheme);
    const std::vector<double> pi = marginal_inclusions(plan);
    const SymmetricMatrix pij = marginal_pair_inclusions(plan);
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t j = i + 1; j < N; ++j) {
        const double cov = pij(i, j) - pi[i] * pi[j];
        probe.rows.push_back({"indicator", i, j, cov, 0.0, cov, cov > 1e-12});
      }
    }
  }
  return probe;
}

}  // namespace survey
