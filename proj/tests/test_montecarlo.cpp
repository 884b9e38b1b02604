#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "support/oracles.hpp"
#include "survey/errors.hpp"
#include "survey/exact.hpp"
#include "survey/montecarlo.hpp"
#include "survey/poisson_binomial.hpp"

using namespace survey;

TEST(ClopperPearson, MatchesBinomialCdfOracle) {
  for (auto [k, n] : std::vector<std::pair<std::uint64_t, std::uint64_t>>{{0, 10}, {3, 10}, {10, 10}, {17, 400}, {1, 1}}) {
    const Interval ci = clopper_pearson(k, n, 0.95);
    if (k > 0) EXPECT_NEAR(1.0 - oracle::binomial_cdf(k - 1, n, ci.lower), 0.025, 1e-9);
    else EXPECT_EQ(ci.lower, 0.0);
    if (k < n) EXPECT_NEAR(oracle::binomial_cdf(k, n, ci.upper), 0.025, 1e-9);
    else EXPECT_EQ(ci.upper, 1.0);
    EXPECT_LE(ci.lower, static_cast<double>(k) / n);
    EXPECT_GE(ci.upper, static_cast<double>(k) / n);
  }
}

TEST(ClopperPearson, SingleSuccessHasPositiveLowerLimit) {
  const Interval ci = clopper_pearson(1, 1, 0.95);
  EXPECT_GT(ci.lower, 0.0);
  EXPECT_EQ(ci.upper, 1.0);
  EXPECT_THROW(clopper_pearson(2, 1, 0.95), InputError);
}

TEST(EmpiricalTail, StrictExceedances) {
  const std::vector<double> dev{-1.0, 0.0, 0.0, 2.0};
  const std::vector<double> grid{-2.0, 0.0, 1.9, 2.0};
  const auto t = empirical_tail(dev, grid, 0.95);
  EXPECT_EQ(t[0].estimate, 1.0);
  EXPECT_EQ(t[1].estimate, 0.25);
  EXPECT_EQ(t[2].estimate, 0.25);
  EXPECT_EQ(t[3].estimate, 0.0);
  for (const auto& e : t) EXPECT_GE(e.interval.upper, e.estimate);
}

TEST(EmpiricalTail, AgreesWithExactTailOnSixUnits) {
  const std::vector<double> p{0.15, 0.35, 0.5, 0.55, 0.65, 0.8};
  const auto spec = SchemeSpec::rejective(DesignWeights(p, WeightKind::canonical, 3), 3);
  const Population pop({2.0, -1.0, 3.5, 0.5, 4.0, 1.0});
  const auto pi = first_order_inclusion(p, 3);
  const auto grid = linear_grid(-5.0, 8.0, 27);
  const DeviationDistribution exact(enumerate_plan(spec), pop, pi);
  const auto emp = empirical_tail(SchemeSampler(spec), pop, pi, grid, 100000, 5, 0.999);
  for (const auto& e : emp) {
    EXPECT_LE(e.interval.lower, exact.tail(e.t) + 1e-12) << e.t;
    EXPECT_GE(e.interval.upper, exact.tail(e.t) - 1e-12) << e.t;
  }
}

TEST(Replications, IndependentOfWorkerCount) {
  std::mt19937_64 gen(1);
  const auto p = canonicalize(oracle::random_probs(gen, 50, 0.1, 0.9), 12);
  const auto spec = SchemeSpec::rejective(DesignWeights(p, WeightKind::canonical, 12), 12);
  const Population pop(oracle::random_probs(gen, 50, 0.0, 10.0));
  const auto design = resolve_design(spec);
  const SchemeSampler sampler(spec);
  const auto a = run_replications(sampler, pop, design.p, design.pi, 997, 3, 1);
  const auto b = run_replications(sampler, pop, design.p, design.pi, 997, 3, 4);
  EXPECT_EQ(a.ht_pi, b.ht_pi);
  EXPECT_EQ(a.ht_p, b.ht_p);
  EXPECT_EQ(a.sizes, b.sizes);
}

namespace {

std::string report_text(const ExperimentConfig& cfg) {
  const auto rep = run_experiment(cfg);
  std::ostringstream s;
  write_report_csv(s, rep);
  write_report_summary(s, rep);
  return s.str();
}

}  // namespace

TEST(RunExperiment, SworDesignPassesAndIsDeterministic) {
  std::mt19937_64 gen(2);
  ExperimentConfig cfg{SchemeSpec::swor(100, 20), Population(oracle::random_probs(gen, 100, 0.0, 10.0))};
  cfg.replications = 20000;
  cfg.master_seed = 77;
  const auto rep = run_experiment(cfg);
  EXPECT_TRUE(rep.passed());
  bool saw_unbiased = false;
  for (const auto& s : rep.scalars) saw_unbiased |= s.name == "unbiasedness" && s.passed;
  EXPECT_TRUE(saw_unbiased);
  for (const auto& r : rep.rows) EXPECT_GE(r.interval.upper, r.empirical);
  cfg.workers = 3;
  const std::string a = report_text(cfg);
  cfg.workers = 1;
  EXPECT_EQ(a, report_text(cfg));
}

TEST(RunExperiment, PoissonCoverageAndLocalLimit) {
  std::mt19937_64 gen(3);
  const auto p = canonicalize(oracle::random_probs(gen, 200, 0.1, 0.6), 60);
  ExperimentConfig cfg{SchemeSpec::poisson(DesignWeights(p, WeightKind::canonical)),
                       Population(oracle::random_probs(gen, 200, 0.0, 5.0))};
  cfg.replications = 10000;
  cfg.checks = {CheckKind::ci_coverage, CheckKind::local_limit, CheckKind::tail_envelope};
  const auto rep = run_experiment(cfg);
  EXPECT_TRUE(rep.passed());
  std::size_t asserted = 0;
  for (const auto& s : rep.scalars) asserted += s.asserted;
  EXPECT_EQ(asserted, 2u);
}

TEST(RunExperiment, RejectsInvalidConfig) {
  ExperimentConfig cfg{SchemeSpec::swor(10, 3), Population(std::vector<double>(10, 1.0))};
  cfg.replications = 0;
  EXPECT_THROW(run_experiment(cfg), InputError);
  cfg.replications = 10;
  cfg.thresholds = {2.0, 1.0};
  EXPECT_THROW(run_experiment(cfg), InputError);
  ExperimentConfig mismatch{SchemeSpec::swor(10, 3), Population(std::vector<double>(9, 1.0))};
  EXPECT_THROW(run_experiment(mismatch), InputError);
}

TEST(CovarianceProbe, PoissonCovariancesNearZero) {
  const auto spec = SchemeSpec::poisson(DesignWeights(std::vector<double>(12, 0.4), WeightKind::canonical));
  const auto probe = na_covariance_probe(spec, 50000, 3, 1);
  for (const auto& r : probe.rows) {
    if (r.exact) EXPECT_NEAR(*r.exact, 0.0, 1e-12);
    else EXPECT_LE(std::abs(r.covariance), 4.5 * r.standard_error);
  }
}

TEST(CovarianceProbe, RejectiveIndicatorCovariancesNonPositive) {
  const std::vector<double> p{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.6, 0.3, 0.3};  // sums to 4
  const auto spec = SchemeSpec::rejective(DesignWeights(p, WeightKind::canonical, 4), 4);
  const auto probe = na_covariance_probe(spec, 100000, 4, 2);
  EXPECT_FALSE(probe.any_significantly_positive());
  const auto pij = second_order_inclusion(p, 4);
  const auto pi = first_order_inclusion(p, 4);
  std::size_t exact_rows = 0;
  for (const auto& r : probe.rows) {
    if (r.function != "indicator") continue;
    ++exact_rows;
    EXPECT_LE(*r.exact, 0.0);
    EXPECT_NEAR(*r.exact, pij(r.block_a, r.block_b) - pi[r.block_a] * pi[r.block_b], 1e-12);
  }
  EXPECT_EQ(exact_rows, 45u);
}
