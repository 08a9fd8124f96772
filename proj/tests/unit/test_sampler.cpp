#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include <boost/math/distributions/chi_squared.hpp>

#include "kac/errors.hpp"
#include "kac/sampler.hpp"

using namespace kac;

namespace {

// Law of ε_1 under m^{⊗N}( · | Σ ε = E) by convolution.
std::vector<double> conditional_marginal(const BaseMeasure& m, std::size_t n, Energy e_total) {
  std::vector<double> base(static_cast<std::size_t>(e_total) + 1);
  for (Energy k = 0; k <= e_total; ++k) base[static_cast<std::size_t>(k)] = m.pmf(k);
  std::vector<double> rest(base.size(), 0.0);
  rest[0] = 1.0;
  for (std::size_t p = 1; p < n; ++p) {
    std::vector<double> next(base.size(), 0.0);
    for (std::size_t a = 0; a < base.size(); ++a) {
      for (std::size_t b = 0; a + b < base.size(); ++b) next[a + b] += rest[a] * base[b];
    }
    rest = next;
  }
  std::vector<double> law(base.size());
  double z = 0.0;
  for (std::size_t k = 0; k < base.size(); ++k) {
    law[k] = base[k] * rest[base.size() - 1 - k];
    z += law[k];
  }
  for (double& v : law) v /= z;
  return law;
}

}  // namespace

TEST(PartitionFunction, Examples) {
  EXPECT_NEAR(partition_function(BaseMeasure::geometric(0.5), 0.0), 1.0, 1e-15);
  EXPECT_NEAR(partition_function(BaseMeasure::point_mass(1), 0.7), std::exp(0.7), 1e-14);
  EXPECT_NEAR(partition_function(BaseMeasure::geometric(0.5), std::log(2.0 / 3.0)), 0.75, 1e-15);
  EXPECT_THROW(partition_function(BaseMeasure::geometric(0.5), std::log(2.0)), std::domain_error);
}

TEST(BaseMeasure, GammaStarAndNormalization) {
  EXPECT_NEAR(BaseMeasure::geometric(0.3).gamma_star(), -std::log(0.7), 1e-15);
  EXPECT_TRUE(std::isinf(BaseMeasure::point_mass(2).gamma_star()));
  const auto fin = BaseMeasure::finite_support({1, 2, 3});
  EXPECT_TRUE(std::isinf(fin.gamma_star()));
  double total = 0.0;
  for (Energy k = 0; k <= 2; ++k) total += fin.pmf(k);
  EXPECT_NEAR(total, 1.0, 1e-15);
  EXPECT_THROW(BaseMeasure::finite_support({1, 0, 1}), std::invalid_argument);
}

TEST(BaseMeasure, ParsesSpecs) {
  EXPECT_EQ(BaseMeasure::parse("point:3").atom(), 3);
  EXPECT_NEAR(BaseMeasure::parse("geom:0.25").geometric_p(), 0.25, 0);
  EXPECT_EQ(BaseMeasure::parse("finite:1,1,2").weights().size(), 3u);
  EXPECT_THROW(BaseMeasure::parse("geom:2"), std::invalid_argument);
  EXPECT_THROW(BaseMeasure::parse("poisson:1"), std::invalid_argument);
  EXPECT_THROW(BaseMeasure::parse("point:1x"), std::invalid_argument);
}

TEST(GammaForMean, Examples) {
  const auto g = BaseMeasure::geometric(0.5);
  EXPECT_NEAR(gamma_for_mean(g, 1.0), 0.0, 1e-10);
  EXPECT_NEAR(gamma_for_mean(g, 0.5), std::log(2.0 / 3.0), 1e-10);
  EXPECT_NEAR(tilted_mean(g, gamma_for_mean(g, 0.5)), 0.5, 1e-12);
  EXPECT_EQ(gamma_for_mean(BaseMeasure::point_mass(1), 1.0), 0.0);
  EXPECT_THROW(gamma_for_mean(BaseMeasure::point_mass(1), 2.0), std::domain_error);
  EXPECT_THROW(gamma_for_mean(BaseMeasure::finite_support({1, 1}), 1.5), std::domain_error);
}

TEST(TiltedMean, StrictlyIncreasing) {
  for (const auto& m : {BaseMeasure::geometric(0.4), BaseMeasure::finite_support({1, 3, 0, 2})}) {
    const double top = std::isinf(m.gamma_star()) ? 5.0 : m.gamma_star() - 1e-3;
    double prev = tilted_mean(m, -5.0);
    for (int k = 1; k <= 200; ++k) {
      const double g = -5.0 + (top + 5.0) * k / 200.0;
      const double cur = tilted_mean(m, g);
      EXPECT_GT(cur, prev);
      prev = cur;
    }
  }
}

TEST(SampleMicrocanonical, PointMassIsDeterministic) {
  Rng rng(1);
  EXPECT_EQ(sample_microcanonical(BaseMeasure::point_mass(1), 5, 1.0, rng), Configuration({1, 1, 1, 1, 1}));
}

TEST(SampleMicrocanonical, TotalIsExact) {
  Rng rng(2);
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 2 + static_cast<std::size_t>(k % 40);
    EXPECT_EQ(sample_microcanonical(BaseMeasure::geometric(0.3), n, 1.7, rng).total(), microcanonical_total(n, 1.7));
    EXPECT_EQ(sample_microcanonical(BaseMeasure::finite_support({2, 1, 1}), n, 0.9, rng).total(),
              microcanonical_total(n, 0.9));
  }
}

TEST(SampleMicrocanonical, TwoParticlesUniformOverPatterns) {
  Rng rng(3);
  std::map<Energy, int> counts;
  const int draws = 100000;
  for (int k = 0; k < draws; ++k) ++counts[sample_microcanonical(BaseMeasure::geometric(0.5), 2, 1.0, rng)[0]];
  double chi2 = 0.0;
  for (Energy v = 0; v <= 2; ++v) {
    const double expect = draws / 3.0;
    chi2 += (counts[v] - expect) * (counts[v] - expect) / expect;
  }
  const boost::math::chi_squared law(2);
  EXPECT_GT(boost::math::cdf(boost::math::complement(law, chi2)), 1e-3);
}

TEST(SampleMicrocanonical, MatchesConvolutionOracle) {
  struct Case {
    BaseMeasure m;
    std::size_t n;
    double e;
  };
  const std::vector<Case> cases = {{BaseMeasure::geometric(0.5), 6, 2.0},
                                   {BaseMeasure::geometric(0.2), 4, 5.0},
                                   {BaseMeasure::finite_support({1, 2, 0, 1}), 5, 1.4},
                                   {BaseMeasure::finite_support({3, 1}), 6, 0.5}};
  Rng rng(4);
  for (const auto& c : cases) {
    const Energy e_total = microcanonical_total(c.n, c.e);
    ASSERT_LE(e_total, 20);
    const auto law = conditional_marginal(c.m, c.n, e_total);
    std::vector<double> freq(law.size(), 0.0);
    const int draws = 100000;
    for (int k = 0; k < draws; ++k) {
      const auto cfg = sample_microcanonical(c.m, c.n, c.e, rng);
      for (Index i = 0; i < cfg.size(); ++i) freq[static_cast<std::size_t>(cfg[i])] += 1.0 / (draws * c.n);
    }
    double tv = 0.0;
    for (std::size_t k = 0; k < law.size(); ++k) tv += 0.5 * std::abs(freq[k] - law[k]);
    EXPECT_LT(tv, 0.01) << c.m.spec();
  }
}

TEST(SampleMicrocanonical, ImpossibleTotal) {
  Rng rng(5);
  EXPECT_THROW(sample_microcanonical(BaseMeasure::point_mass(1), 4, 2.0, rng), std::domain_error);
}
