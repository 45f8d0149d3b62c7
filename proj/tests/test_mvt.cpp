#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "forage/error.hpp"
#include "forage/mvt.hpp"

using namespace forage;
using namespace forage::mvt;

namespace {

// Closed form of sum_{i=1..n} N e^{-l i}, valid for real n.
long double geometric_gain(long double peak, long double decay, long double n) {
  const long double q = std::exp(-decay);
  return peak * q * (1.0L - std::exp(-decay * n)) / (1.0L - q);
}

long double geometric_gain_slope(long double peak, long double decay, long double n) {
  const long double q = std::exp(-decay);
  return peak * q * decay * std::exp(-decay * n) / (1.0L - q);
}

// Root of G'(n)(x + n) - G(n) = 0 by bisection on [lo, hi].
long double foc_root(long double peak, long double decay, long double x) {
  auto f = [&](long double n) {
    return geometric_gain_slope(peak, decay, n) * (x + n) - geometric_gain(peak, decay, n);
  };
  long double lo = 1e-6L;
  long double hi = 1500.0L;
  for (int i = 0; i < 200; ++i) {
    const long double mid = 0.5L * (lo + hi);
    (f(lo) > 0) == (f(mid) > 0) ? lo = mid : hi = mid;
  }
  return 0.5L * (lo + hi);
}

}  // namespace

TEST(RewardAt, MatchesExponentialDecay) {
  const RewardParams p;
  EXPECT_DOUBLE_EQ(reward_at(p, 0), 30.0);
  EXPECT_NEAR(reward_at(p, 1), 30.0 * std::exp(-0.01), 1e-12);
  EXPECT_NEAR(reward_at(p, 100), 30.0 * std::exp(-1.0), 1e-12);
}

TEST(RewardAt, StrictlyDecreasing) {
  const RewardParams p;
  for (std::size_t n = 0; n < 1500; ++n) EXPECT_GT(reward_at(p, n), reward_at(p, n + 1));
}

TEST(RewardParams, RejectsNonPositive) {
  EXPECT_THROW(reward_at({0.0, 0.01}, 1), ParameterError);
  EXPECT_THROW(reward_at({30.0, 0.0}, 1), ParameterError);
  EXPECT_THROW(reward_at({30.0, -1.0}, 1), ParameterError);
}

TEST(CumulativeGain, ZeroAtOriginAndGeometricClosedForm) {
  const RewardParams p;
  EXPECT_EQ(cumulative_gain(p, 0), 0.0);
  for (std::size_t n : {1u, 2u, 10u, 24u, 100u, 1500u}) {
    EXPECT_NEAR(cumulative_gain(p, n), static_cast<double>(geometric_gain(30, 0.01, n)), 1e-9)
        << "n=" << n;
  }
}

TEST(GainTable, AgreesWithCumulativeGain) {
  const RewardParams p{12.5, 0.03};
  const auto table = gain_table(p, 200);
  ASSERT_EQ(table.size(), 201u);
  for (std::size_t n = 0; n <= 200; ++n) EXPECT_EQ(table[n], cumulative_gain(p, n));
}

TEST(NetIntakeRate, DividesGainByCycleLength) {
  const RewardParams p;
  EXPECT_DOUBLE_EQ(net_intake_rate(p, 5, 10), cumulative_gain(p, 10) / 15.0);
  EXPECT_THROW(net_intake_rate(p, 0, 10), ParameterError);
}

TEST(OptimalResidence, DefaultParamsKnownOptima) {
  const RewardParams p;
  const std::size_t expected[] = {24, 30, 35, 40};
  const int distances[] = {3, 5, 7, 9};
  for (int i = 0; i < 4; ++i) {
    const auto sol = optimal_residence(p, distances[i]);
    EXPECT_EQ(sol.optimal_steps, expected[i]) << "x=" << distances[i];
    EXPECT_TRUE(marginal_condition_check(p, distances[i], sol.optimal_steps));
  }
}

TEST(OptimalResidence, AgreesWithIndependentBruteForce) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> peak(1.0, 100.0);
  std::uniform_real_distribution<double> decay(0.002, 0.2);
  std::uniform_int_distribution<int> dist(1, 40);
  for (int trial = 0; trial < 50; ++trial) {
    const RewardParams p{peak(rng), decay(rng)};
    const int x = dist(rng);
    const auto sol = optimal_residence(p, x);
    std::size_t best = 1;
    long double best_rate = -1;
    for (std::size_t n = 1; n <= 1500; ++n) {
      const long double rate = geometric_gain(p.peak, p.decay, n) / (x + n);
      if (rate > best_rate * (1 + 1e-12L)) {
        best_rate = rate;
        best = n;
      }
    }
    EXPECT_NEAR(static_cast<double>(sol.optimal_steps), static_cast<double>(best), 1.0);
    EXPECT_NEAR(sol.optimal_rate, static_cast<double>(best_rate), 1e-9 * sol.optimal_rate);
  }
}

TEST(OptimalResidence, WithinOneStepOfContinuousRoot) {
  const RewardParams p;
  for (int x : {3, 5, 7, 9}) {
    const long double root = foc_root(30, 0.01, x);
    const auto n = optimal_residence(p, x).optimal_steps;
    EXPECT_LE(std::abs(static_cast<long double>(n) - root), 1.0L) << "x=" << x;
  }
}

TEST(OptimalResidence, NondecreasingInDistance) {
  const RewardParams p;
  std::size_t prev = 0;
  for (int x = 1; x <= 60; ++x) {
    const auto n = optimal_residence(p, x).optimal_steps;
    EXPECT_GE(n, prev) << "x=" << x;
    prev = n;
  }
}

TEST(OptimalResidence, RateCurveMatchesNetIntakeRate) {
  const RewardParams p;
  const auto sol = optimal_residence(p, 7, 300);
  ASSERT_EQ(sol.rate_curve.size(), 300u);
  for (std::size_t n = 1; n <= 300; ++n) EXPECT_EQ(sol.rate_at(n), net_intake_rate(p, 7, n));
}

TEST(OptimalResidence, ScanBoundOneReturnsOne) {
  EXPECT_EQ(optimal_residence({}, 3, 1).optimal_steps, 1u);
  EXPECT_THROW(optimal_residence({}, 3, 0), ParameterError);
}

TEST(GeneralNetRate, ReducesToAdaptedRate) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> peak(1.0, 100.0);
  std::uniform_real_distribution<double> decay(0.001, 0.5);
  std::uniform_int_distribution<int> dist(1, 50);
  std::uniform_int_distribution<std::size_t> steps(0, 400);
  for (int trial = 0; trial < 200; ++trial) {
    const RewardParams p{peak(rng), decay(rng)};
    const int x = dist(rng);
    const std::size_t t = steps(rng);
    Habitat h;
    h.patch_types.push_back({1.0, 0.0, gain_table(p, t)});
    h.travel_time = x;
    const double general = general_net_rate(h, {{t}});
    const double adapted = t == 0 ? 0.0 : net_intake_rate(p, x, t);
    EXPECT_NEAR(general, adapted, 1e-12);
  }
}

TEST(GeneralNetRate, TwoPatchTypesByHand) {
  Habitat h;
  h.patch_types.push_back({0.25, 1.0, {0, 10, 18, 24}});
  h.patch_types.push_back({0.75, 0.0, {0, 4, 7}});
  h.travel_time = 2.0;
  h.travel_cost_rate = 0.5;
  // (0.25*(18 - 2) + 0.75*7 - 2*0.5) / (2 + 0.25*2 + 0.75*2) = 8.25 / 4
  EXPECT_DOUBLE_EQ(general_net_rate(h, {{2, 2}}), 8.25 / 4.0);
}

TEST(GeneralNetRate, RejectsMismatchedShapes) {
  Habitat h;
  h.patch_types.push_back({1.0, 0.0, {0, 1, 2}});
  EXPECT_THROW(general_net_rate(h, {{1, 1}}), ShapeError);
  EXPECT_THROW(general_net_rate(h, {{5}}), ShapeError);
  h.patch_types[0].proportion = 0.5;
  EXPECT_THROW(general_net_rate(h, {{1}}), ParameterError);
}

TEST(VerifyGainProperties, ExponentialGainIsAdmissibleFromOrigin) {
  const auto table = gain_table({}, 1500);
  const auto report = verify_gain_properties(table);
  EXPECT_TRUE(report.zero_at_origin);
  EXPECT_TRUE(report.increasing_at_origin);
  ASSERT_TRUE(report.concavity_threshold.has_value());
  EXPECT_EQ(*report.concavity_threshold, 0u);
  EXPECT_TRUE(report.admissible());
}

TEST(VerifyGainProperties, SigmoidGainHasLateThreshold) {
  // Convex up to 3, concave from there on.
  const std::vector<double> g{0, 1, 3, 6, 8, 9, 9.5};
  const auto report = verify_gain_properties(g);
  ASSERT_TRUE(report.concavity_threshold.has_value());
  EXPECT_EQ(*report.concavity_threshold, 2u);
}

TEST(VerifyGainProperties, ConvexGainHasNoThreshold) {
  const std::vector<double> g{0, 1, 4, 9, 16};
  EXPECT_FALSE(verify_gain_properties(g).concavity_threshold.has_value());
  EXPECT_FALSE(verify_gain_properties(g).admissible());
}

TEST(VerifyGainProperties, FlagsOffsetAndFlatStart) {
  EXPECT_FALSE(verify_gain_properties(std::vector<double>{1, 2, 2.5, 2.7}).zero_at_origin);
  EXPECT_FALSE(verify_gain_properties(std::vector<double>{0, 0, 1, 1.5}).increasing_at_origin);
  EXPECT_THROW(verify_gain_properties(std::vector<double>{0, 1, 2}), InsufficientDataError);
}

TEST(MarginalCondition, FailsAwayFromOptimum) {
  const RewardParams p;
  EXPECT_FALSE(marginal_condition_check(p, 5, 10));
  EXPECT_FALSE(marginal_condition_check(p, 5, 60));
  EXPECT_THROW(marginal_condition_check(p, 5, 0), ParameterError);
}
