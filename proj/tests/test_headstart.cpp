#include <cmath>

#include <gtest/gtest.h>

#include "qdetect/headstart.hpp"

using namespace qdetect;

TEST(HeadStartClosedForms, KnownValues) {
  EXPECT_NEAR(p0_exact(1.5), 0.541855, 5e-7);
  EXPECT_NEAR(p0_exact(1.7), 0.503374, 5e-7);
  EXPECT_NEAR(p0_exact(1.98), 0.454038, 5e-7);
  EXPECT_DOUBLE_EQ(mu0_exact(1.5), 0.75);
  EXPECT_DOUBLE_EQ(mu0_exact(1.98), 0.99);
  EXPECT_NEAR(p0_unshifted(1.5), 0.797267, 5e-7);
}

TEST(HeadStartClosedForms, DomainIsOpenInterval) {
  for (double a : {0.0, 2.0, -1.0, 2.5}) {
    EXPECT_THROW(p0_exact(a), domain_error);
    EXPECT_THROW(mu0_exact(a), domain_error);
  }
}

TEST(HeadStartClosedForms, MatchQuadrature) {
  for (double a : {0.1, 0.5, 1.0, 1.5, 1.6, 1.7, 1.8, 1.9, 1.98}) {
    EXPECT_NEAR(p0_exact(a), quadrature_p0(a), 1e-10) << a;
    EXPECT_NEAR(mu0_exact(a), quadrature_mu0(a), 1e-10) << a;
  }
}

TEST(HeadStartLaw, UniformProductMoments) {
  const auto law = HeadStartLaw::uniform_product(1.5);
  EXPECT_DOUBLE_EQ(*law.mean(), 1.75);
  EXPECT_NEAR(*law.size_biased_mean(), 2.2121, 5e-5);
  EXPECT_DOUBLE_EQ(*law.upper_bound(), 5.0);
  EXPECT_DOUBLE_EQ(*law.p0(1.5), p0_exact(1.5));
  EXPECT_FALSE(law.p0(1.0).has_value());
  EXPECT_THROW(HeadStartLaw::uniform_product(2.0), config_error);

  Rng rng(1);
  for (int i = 0; i < 10000; ++i) {
    const double x = law.sample(rng);
    ASSERT_GE(x, 0.0);
    ASSERT_LE(x, 5.0);
  }
}

TEST(HeadStartLaw, PointMass) {
  const auto law = HeadStartLaw::point_mass(2.0);
  EXPECT_DOUBLE_EQ(*law.p0(1.5), 1.0);
  EXPECT_THROW(law.mu0(1.5), undefined_conditional);
  EXPECT_DOUBLE_EQ(*HeadStartLaw::point_mass(0.5).mu0(1.5), 0.5);
  EXPECT_THROW(HeadStartLaw::point_mass(-1.0), config_error);
}

TEST(HeadStartLaw, CustomSamplerChecked) {
  auto law = HeadStartLaw::custom({[](Rng&) { return -1.0; }, "neg", std::nullopt, std::nullopt});
  Rng rng(1);
  EXPECT_THROW(law.sample(rng), domain_error);
  EXPECT_FALSE(law.size_biased_mean().has_value());
}

TEST(FunctionalsOracle, AgreesWithClosedForms) {
  const auto law = HeadStartLaw::uniform_product(1.8);
  const auto f = functionals_oracle(law, 1.8, 400'000, 11);
  EXPECT_NEAR(f.p0.mean, p0_exact(1.8), 4 * f.p0.std_error);
  EXPECT_NEAR(f.mu0.mean, mu0_exact(1.8), 4 * f.mu0.std_error);
  EXPECT_NEAR(f.mean.mean, 1.9, 4 * f.mean.std_error);
  EXPECT_NEAR(f.second_moment.mean, *law.second_moment(), 4 * f.second_moment.std_error);
}

TEST(FunctionalsOracle, Guards) {
  EXPECT_THROW(functionals_oracle(HeadStartLaw::uniform_product(1.5), 1.5, 100, 1), config_error);
  EXPECT_THROW(functionals_oracle(HeadStartLaw::point_mass(3.0), 1.5, 10'000, 1), undefined_conditional);
}
