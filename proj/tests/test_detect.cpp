#include <cmath>

#include <gtest/gtest.h>

#include "qdetect/detect.hpp"
#include "qdetect/stats.hpp"

using namespace qdetect;

TEST(ExponentialPair, LikelihoodRatio) {
  const ExponentialPair pair;
  EXPECT_NEAR(pair.lr(1e-12), 2.0, 1e-11);
  EXPECT_DOUBLE_EQ(pair.lr(std::log(2.0)), 1.0);
  EXPECT_THROW(pair.lr(0.0), domain_error);
  EXPECT_THROW(pair.lr(-1.0), domain_error);
  EXPECT_DOUBLE_EQ(likelihood_ratio(pair, 1.0), 2.0 * std::exp(-1.0));
}

TEST(ExponentialPair, DirectRatioMatchesSampler) {
  // the fast path and sample-then-ratio consume the same uniform
  const ExponentialPair pair;
  Rng a(5), b(5);
  for (int i = 0; i < 1000; ++i) {
    EXPECT_NEAR(pair.lr_under_pre(a), pair.lr(pair.sample_pre(b)), 1e-12);
    EXPECT_NEAR(pair.lr_under_post(a), pair.lr(pair.sample_post(b)), 1e-12);
  }
}

TEST(CustomPair, RejectsBadRatio) {
  CustomPair pair([](Rng&) { return 1.0; }, [](Rng&) { return 1.0; }, [](double) { return -1.0; }, "bad");
  EXPECT_THROW(pair.lr(1.0), domain_error);
  EXPECT_THROW(CustomPair(nullptr, nullptr, nullptr, "x"), config_error);
}

TEST(SrUpdate, Examples) {
  EXPECT_DOUBLE_EQ(sr_update(0.0, 2.0), 2.0);
  EXPECT_DOUBLE_EQ(sr_update(1.0, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(sr_update(3.0, 1.0), 4.0);
  EXPECT_THROW(sr_update(-0.1, 1.0), contract_violation);
  EXPECT_THROW(sr_update(1.0, 0.0), contract_violation);
}

TEST(ChangeScenario, Indexing) {
  EXPECT_THROW(ChangeScenario::at(0), config_error);
  const auto s = ChangeScenario::at(3);
  EXPECT_FALSE(s.post_change(2));
  EXPECT_TRUE(s.post_change(3));
  EXPECT_FALSE(ChangeScenario::never().post_change(1'000'000));
}

TEST(ModifiedSr, HeadStartAtThresholdStopsImmediately) {
  const ExponentialPair pair;
  Rng rng(1);
  const auto rec = run_modified_sr(pair, 1.5, 1.5, ChangeScenario::at(1), rng);
  EXPECT_EQ(rec.n_stop, 0u);
  EXPECT_DOUBLE_EQ(rec.final_stat, 1.5);
  EXPECT_DOUBLE_EQ(rec.overshoot(1.5), 0.0);
  EXPECT_FALSE(rec.truncated);
}

TEST(ModifiedSr, SmallThresholdOneStep) {
  // A = 0.5, R_0 = 0: alarm at n = 1 unless 2 sqrt(U) < 1/2, i.e. with probability 15/16
  const ExponentialPair pair;
  ScalarAccumulator one;
  for (std::uint64_t i = 0; i < 100000; ++i) {
    Rng rng = derive_stream(9, i);
    const auto rec = run_modified_sr(pair, 0.0, 0.5, ChangeScenario::at(1), rng);
    ASSERT_GE(rec.n_stop, 1u);
    one.add({rec.n_stop == 1 ? 1.0 : 0.0});
  }
  EXPECT_NEAR(one.mean(), 15.0 / 16.0, 4 * one.std_error());
}

TEST(ModifiedSr, RejectsBadArguments) {
  const ExponentialPair pair;
  Rng rng(1);
  EXPECT_THROW(run_modified_sr(pair, 0.0, 0.0, ChangeScenario::at(1), rng), config_error);
  EXPECT_THROW(run_modified_sr(pair, -1.0, 1.0, ChangeScenario::at(1), rng), config_error);
  EXPECT_THROW(run_modified_sr(pair, 0.0, 1.0, ChangeScenario::at(1), rng, 0), config_error);
}

TEST(ModifiedSr, TruncationIsReported) {
  const ExponentialPair pair;
  Rng rng(3);
  const auto rec = run_modified_sr(pair, 0.0, 1e9, ChangeScenario::never(), rng, 50);
  EXPECT_TRUE(rec.truncated);
  EXPECT_EQ(rec.n_stop, 50u);
}

TEST(Cusum, ConstantSubunitRatioNeverAlarms) {
  CustomPair half([](Rng&) { return 1.0; }, [](Rng&) { return 1.0; }, [](double) { return 0.5; }, "half");
  Rng rng(1);
  const auto rec = run_cusum(half, 3.0, ChangeScenario::never(), rng, 1000);
  EXPECT_TRUE(rec.truncated);
  EXPECT_EQ(rec.n_stop, 1000u);
  EXPECT_DOUBLE_EQ(rec.final_stat, 0.0);
}

TEST(Cusum, ThresholdAtMostOneAlarmsAtFirstObservation) {
  const ExponentialPair pair;
  Rng rng(1);
  EXPECT_EQ(run_cusum(pair, 1.0, ChangeScenario::never(), rng).n_stop, 1u);
}

TEST(Cusum, DetectsFasterAfterChange) {
  const ExponentialPair pair;
  ScalarAccumulator pre, post;
  for (std::uint64_t i = 0; i < 20000; ++i) {
    Rng a = derive_stream(4, i), b = derive_stream(5, i);
    pre.add({static_cast<double>(run_cusum(pair, 20.0, ChangeScenario::never(), a).n_stop)});
    post.add({static_cast<double>(run_cusum(pair, 20.0, ChangeScenario::at(1), b).n_stop)});
  }
  EXPECT_GT(pre.mean(), 3 * post.mean());
}
