#include <boost/multiprecision/cpp_int.hpp>
#include <gtest/gtest.h>

#include "qdetect/bayes.hpp"

using namespace qdetect;
using boost::multiprecision::cpp_rational;

TEST(Coupling, Examples) {
  EXPECT_DOUBLE_EQ(couple_pi0(0.5, 0.0), 0.5);
  EXPECT_NEAR(couple_pi0(0.001, 2.0) / 0.001, 2.994, 5e-4);
  EXPECT_NEAR(bayes_start_statistic(0.001, couple_pi0(0.001, 2.0)), 2.0, 1e-12);
}

TEST(Coupling, ExactRoundTrip) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const cpp_rational p(uniform(rng, 1e-4, 0.9)), r0(uniform(rng, 0.0, 8.0));
    ASSERT_EQ(bayes_start_statistic(p, couple_pi0(p, r0)), r0);
  }
}

TEST(ChangeTimePrior, Histogram) {
  const double p = 0.3, pi0 = 0.2;
  const ChangeTimePrior prior(p);
  std::array<ScalarAccumulator, 6> freq;
  for (std::uint64_t i = 0; i < 200'000; ++i) {
    Rng rng = derive_stream(12, i);
    const auto nu = prior.sample(pi0, rng);
    ASSERT_GE(nu, 1u);
    for (std::uint64_t n = 1; n <= freq.size(); ++n) freq[n - 1].add({nu == n ? 1.0 : 0.0});
  }
  for (std::uint64_t n = 1; n <= freq.size(); ++n)
    EXPECT_NEAR(freq[n - 1].mean(), prior.probability(pi0, n), 4 * freq[n - 1].std_error()) << n;
  EXPECT_THROW(ChangeTimePrior(0.0), config_error);
  Rng rng(1);
  EXPECT_THROW(prior.sample(1.5, rng), config_error);
}

TEST(BayesRule, ConfigValidation) {
  EXPECT_THROW((BayesConfig{0.0}.validate()), config_error);
  EXPECT_THROW((BayesConfig{1.0}.validate()), config_error);
  EXPECT_THROW((BayesConfig{0.1, -1.0}.validate()), config_error);
  EXPECT_NO_THROW(BayesConfig{}.validate());
}

TEST(BayesRule, HalfProbabilityDoublesGrowth) {
  const ExponentialPair pair;
  BayesConfig cfg{0.5, 0.1, 20.0, HeadStartLaw::point_mass(0.0)};
  for (std::uint64_t i = 0; i < 1000; ++i) {
    Rng a = derive_stream(6, i), b = derive_stream(6, i);
    const auto o = run_bayes_rule_given(cfg, 0.0, 4, a, pair);
    const auto rec = run_sr_rule(pair, 0.0, 20.0, 2.0, ChangeScenario::at(4), b);
    ASSERT_EQ(o.n_stop, rec.n_stop);
  }
}

TEST(BayesRule, VanishingProbabilityRecoversModifiedSr) {
  const ExponentialPair pair;
  BayesConfig cfg{1e-12, 0.1, 1.5, HeadStartLaw::uniform_product(1.5)};
  int same = 0;
  for (std::uint64_t i = 0; i < 10'000; ++i) {
    Rng a = derive_stream(7, i), b = derive_stream(7, i);
    same += run_bayes_rule_given(cfg, 0.3, 3, a, pair).n_stop ==
            run_modified_sr(pair, 0.3, 1.5, ChangeScenario::at(3), b).n_stop;
  }
  EXPECT_GE(same, 9990);
}

TEST(BayesRule, MissAndDelayBookkeeping) {
  const ExponentialPair pair;
  BayesConfig cfg{0.1, 0.1, 1.5, HeadStartLaw::point_mass(2.0)};
  Rng rng(1);
  // head start above A: N = 0, missed iff nu >= 2
  const auto early = run_bayes_rule_given(cfg, 2.0, 5, rng, pair);
  EXPECT_TRUE(early.missed);
  EXPECT_EQ(early.delay_plus, 0u);
  const auto at_one = run_bayes_rule_given(cfg, 2.0, 1, rng, pair);
  EXPECT_FALSE(at_one.missed);
  EXPECT_EQ(at_one.delay_plus, 0u);
}

TEST(BayesRisk, DecompositionExact) {
  BayesConfig cfg{0.02, 0.1, 1.5, HeadStartLaw::uniform_product(1.5)};
  const auto r = estimate_bayes_risk(cfg, 100'000, 3);
  EXPECT_EQ(r.hits + r.misses, r.reps);
  EXPECT_TRUE(risk_decomposition_exact(r));
  EXPECT_NEAR(r.gain_direct(), r.gain_product(), 1e-9);
  EXPECT_NEAR(r.scaled_gain.mean, r.gain_direct(), 1e-9);
}

TEST(Extrapolation, ExactOnPolynomialData) {
  const std::vector<double> x{0.02, 0.01, 0.005};
  std::vector<McEstimate> y(3);
  for (std::size_t i = 0; i < 3; ++i) {
    y[i].mean = 3.0 + 2.0 * x[i] + 50.0 * x[i] * x[i];
    y[i].std_error = 0.01;
  }
  const auto quad = extrapolate_to_zero(x, y, 2);
  ASSERT_TRUE(quad.enabled);
  EXPECT_NEAR(quad.intercept, 3.0, 1e-9);
  const auto lin = extrapolate_to_zero(x, y, 1);
  EXPECT_LT(lin.intercept, 3.0); // convex data biases the line low
  EXPECT_FALSE(extrapolate_to_zero({0.5}, {y[0]}, 1).enabled);
}

TEST(Extrapolation, AllocationSumsToTotal) {
  const auto alloc = intercept_allocation({0.02, 0.01, 0.005}, 6'000'000, 2);
  ASSERT_EQ(alloc.size(), 3u);
  std::uint64_t total = 0;
  for (auto v : alloc) total += v;
  EXPECT_NEAR(static_cast<double>(total), 6e6, 3.0);
  EXPECT_LT(alloc[0], alloc[1]);
  EXPECT_LT(alloc[1], alloc[2]);
}

TEST(LimitDiagnostic, SinglePointWarnsAndCoincideWithoutCost) {
  const auto law = HeadStartLaw::uniform_product(1.5);
  const auto d = limit_diagnostic(1.5, law, 0.1, {0.5}, 1000, 1);
  EXPECT_FALSE(d.gain.enabled);
  EXPECT_FALSE(d.warnings.empty());
  const auto ref = limit_reference(1.5, law, 0.0, 20'000, 2);
  EXPECT_DOUBLE_EQ(ref.with_cross_term, ref.factorized);
  const auto d0 = limit_diagnostic(1.5, law, 0.0, {0.04, 0.02, 0.01}, 20'000, 3);
  EXPECT_EQ(judge_limit(d0, ref).verdict, "coincide");
  EXPECT_EQ(judge_limit(d, ref).verdict, "inconclusive");
  EXPECT_THROW(limit_diagnostic(1.5, law, 0.1, {0.01, 0.02}, 10, 1), config_error);
}
