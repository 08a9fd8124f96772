#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "kac/event_io.hpp"
#include "kac/tilt.hpp"

using namespace kac;

namespace {

TiltParams default_tilt() { return TiltParams{0.5, 0.1, 1.0, false}; }

Scenario point_scenario() {
  Scenario sc;
  sc.m = BaseMeasure::point_mass(1);
  sc.e = 1.0;
  sc.tilt = default_tilt();
  return sc;
}

}  // namespace

TEST(PathLogRn, FrozenPairClosedForm) {
  const EventLog empty(2, 2, 1.0, 0, "tilted");
  const LogRn r = path_log_rn(empty, Configuration({1, 1}), default_tilt());
  EXPECT_NEAR(r.value, -2.0 / 3.0, 1e-14);
  EXPECT_FALSE(r.impossible);
}

TEST(PathLogRn, OneMergeClosedForm) {
  // (1,1) merges at s; afterwards (0,2) has base rate 1/6 and tilted rate 0
  const double s = 0.2;
  EventLog log(2, 2, 1.0, 0, "tilted");
  log.append({s, 0, 1, EnergyPair(1, 1), EnergyPair(0, 2)});
  const LogRn r = path_log_rn(log, Configuration({1, 1}), default_tilt());
  const double expect = std::log(alpha_dot(s, 0.5) * 1.5) - (0.5 * alpha(s, 0.5) - s / 3.0) + (1.0 - s) / 6.0;
  EXPECT_NEAR(r.value, expect, 1e-13);
}

TEST(PathLogRn, ImpossiblePaths) {
  EventLog late(2, 2, 1.0, 0, "base");
  late.append({0.45, 0, 1, EnergyPair(1, 1), EnergyPair(0, 2)});
  EXPECT_TRUE(path_log_rn(late, Configuration({1, 1}), default_tilt()).impossible);
  EventLog split(2, 2, 1.0, 0, "base");
  split.append({0.1, 0, 1, EnergyPair(0, 2), EnergyPair(1, 1)});
  EXPECT_TRUE(path_log_rn(split, Configuration({0, 2}), default_tilt()).impossible);
}

TEST(PathLogRn, SelfTestIsIdenticallyZero) {
  auto sc = point_scenario();
  const auto stats = run_replicas(sc, 30, 50, 9, ReplicaLaw::SelfTest, NeighborhoodSpec::everything());
  for (const auto& r : stats.records) {
    EXPECT_EQ(r.log_rn.value, 0.0);
    EXPECT_FALSE(r.log_rn.impossible);
  }
  EXPECT_EQ(entropy_estimate(stats).mean, 0.0);
  const auto est = estimate_rare_probability(stats, NeighborhoodSpec::everything());
  EXPECT_DOUBLE_EQ(est.p_hat, 1.0);
  EXPECT_DOUBLE_EQ(est.hit_rate, 1.0);
}

TEST(PathLogRn, IncrementalEqualsReplayOfSerializedLog) {
  const Configuration cfg0(std::vector<Energy>(40, 1));
  LogRnAccumulator acc(cfg0, default_tilt());
  Rng rng(3);
  const auto log = simulate_tilted(cfg0, 1.0, 0.5, 0.1, rng, 3, [&](const Event& ev) { acc.observe(ev); });
  const LogRn live = acc.finish();
  std::ostringstream os;
  write_event_log(os, log, &cfg0);
  std::istringstream is(os.str());
  const auto back = read_event_log(is);
  const LogRn replayed = path_log_rn(back.log, *back.initial, default_tilt());
  EXPECT_EQ(live.value, replayed.value);
  EXPECT_EQ(live.diagonal, replayed.diagonal);
}

TEST(UnitMass, BaseLawLikelihoodRatioHasMeanOne) {
  for (std::size_t n : {2u, 4u, 8u}) {
    auto sc = point_scenario();
    const auto stats = run_replicas(sc, n, 40000, 17, ReplicaLaw::Base, NeighborhoodSpec::everything(), 4);
    const auto m = likelihood_ratio_mass(stats);
    EXPECT_LT(std::abs(m.mean - 1.0), 3.0 * m.std_error) << n << ": " << m.mean << " ± " << m.std_error;
  }
}

TEST(UnitMass, TiltedWeightsMeasureTheTiltedSupport) {
  // N = 2 from (1,1): the tilted law charges "no event" and "one merge before t*-δ, then nothing".
  // Under the base law that has probability e^{-T/3} + 2 e^{-T/6} (1 - e^{-(t*-δ)/6}).
  auto sc = point_scenario();
  const auto stats = run_replicas(sc, 2, 40000, 23, ReplicaLaw::Tilted, NeighborhoodSpec::everything(), 4);
  const double exact = std::exp(-1.0 / 3.0) + 2.0 * std::exp(-1.0 / 6.0) * (1.0 - std::exp(-0.4 / 6.0));
  const auto w = weight_mass(stats);
  EXPECT_LT(std::abs(w.mean - exact), 3.0 * w.std_error) << w.mean << " vs " << exact;
  const auto est = estimate_rare_probability(stats, NeighborhoodSpec::everything());
  EXPECT_NEAR(est.p_hat, w.mean, 1e-12);
}

TEST(RareProbability, AgreesWithDirectBaseFrequencyAtTinyN) {
  // p̂ estimates the base probability of {in O} ∩ {path the tilted law can produce}
  auto sc = point_scenario();
  const std::size_t n = 6;
  NeighborhoodSpec nbhd;
  nbhd.checkpoints = {0.4};
  nbhd.mean_targets = {0.8};
  nbhd.mean_tolerance = 0.2;
  nbhd.mean_cap = 2;
  const auto tilted = run_replicas(sc, n, 40000, 29, ReplicaLaw::Tilted, nbhd, 4);
  const auto base = run_replicas(sc, n, 400000, 31, ReplicaLaw::Base, nbhd, 4);
  std::size_t hits = 0;
  for (const auto& r : base.records) hits += (!r.log_rn.impossible && nbhd.contains(r.observables)) ? 1 : 0;
  const double freq = static_cast<double>(hits) / static_cast<double>(base.records.size());
  const double freq_se = std::sqrt(freq * (1.0 - freq) / static_cast<double>(base.records.size()));
  const auto est = estimate_rare_probability(tilted, nbhd);
  ASSERT_GT(est.hits, 0u);
  EXPECT_LT(std::abs(est.p_hat - freq), 3.0 * std::hypot(est.std_error, freq_se)) << est.p_hat << " vs " << freq;
}

TEST(RareProbability, NoHitsGivesBound) {
  auto sc = point_scenario();
  NeighborhoodSpec nbhd;
  nbhd.checkpoints = {1.0};
  nbhd.mean_targets = {5.0};
  nbhd.mean_tolerance = 0.1;
  const auto stats = run_replicas(sc, 20, 100, 37, ReplicaLaw::Tilted, nbhd);
  const auto est = estimate_rare_probability(stats, nbhd);
  EXPECT_EQ(est.hits, 0u);
  EXPECT_EQ(est.p_hat, 0.0);
  EXPECT_GT(est.upper_bound, 0.0);
  EXPECT_TRUE(std::isinf(est.log_p_hat));
}

TEST(Replicas, IndependentOfThreadCount) {
  auto sc = point_scenario();
  const auto nbhd = default_neighborhood(sc.m, sc.e, sc.tilt);
  const auto one = run_replicas(sc, 50, 64, 41, ReplicaLaw::Tilted, nbhd, 1);
  const auto many = run_replicas(sc, 50, 64, 41, ReplicaLaw::Tilted, nbhd, 4);
  ASSERT_EQ(one.records.size(), many.records.size());
  for (std::size_t k = 0; k < one.records.size(); ++k) {
    EXPECT_EQ(one.records[k].seed, many.records[k].seed);
    EXPECT_EQ(one.records[k].log_rn.value, many.records[k].log_rn.value);
    EXPECT_EQ(one.records[k].observables, many.records[k].observables);
  }
  // resuming from an offset reproduces the tail
  const auto tail = run_replicas(sc, 50, 32, 41, ReplicaLaw::Tilted, nbhd, 2, 32);
  for (std::size_t k = 0; k < tail.records.size(); ++k) EXPECT_EQ(tail.records[k].seed, one.records[32 + k].seed);
  auto head = run_replicas(sc, 50, 32, 41, ReplicaLaw::Tilted, nbhd, 2);
  head.merge(tail);
  EXPECT_EQ(estimate_rare_probability(head, nbhd).log_p_hat, estimate_rare_probability(one, nbhd).log_p_hat);
}

TEST(Entropy, GrowsAsDeltaShrinks) {
  auto sc = point_scenario();
  const auto a = entropy_estimate(run_replicas(sc, 1000, 20, 43, ReplicaLaw::Tilted, NeighborhoodSpec::everything(), 4));
  sc.tilt.delta = 0.05;
  const auto b = entropy_estimate(run_replicas(sc, 1000, 20, 43, ReplicaLaw::Tilted, NeighborhoodSpec::everything(), 4));
  EXPECT_GT(b.mean, a.mean + 3.0 * std::hypot(a.std_error, b.std_error));
}

TEST(Neighborhood, DefaultShape) {
  auto sc = point_scenario();
  const auto nbhd = default_neighborhood(sc.m, sc.e, sc.tilt);
  EXPECT_EQ(nbhd.checkpoints, (std::vector<double>{0.25, 0.4, 0.75, 1.0}));
  EXPECT_NEAR(nbhd.mean_tolerance, 0.1, 1e-15);
  ASSERT_EQ(nbhd.flows.size(), 2u);
  EXPECT_NEAR(nbhd.flow_rel_tolerance, 0.1, 1e-15);
  // the state is frozen after t*-δ
  EXPECT_NEAR(nbhd.mean_targets[1], nbhd.mean_targets[3], 1e-12);
  // F tables depend on the pair only through its sum, so they are symmetric
  const auto& f = nbhd.flows[1];
  EXPECT_DOUBLE_EQ(f(0.1, CollisionQuad(3, 3, 0, 6)), std::log(3.5));
  EXPECT_DOUBLE_EQ(f(0.45, CollisionQuad(3, 3, 0, 6)), 0.0);
  std::vector<double> obs(nbhd.mean_targets);
  obs.insert(obs.end(), nbhd.flow_targets.begin(), nbhd.flow_targets.end());
  EXPECT_TRUE(nbhd.contains(obs));
  obs.back() *= 1.2;
  EXPECT_FALSE(nbhd.contains(obs));
}

TEST(Martingale, ZeroFunctionGivesZero) {
  const Configuration cfg0(std::vector<Energy>(20, 1));
  Rng rng(47);
  const auto log = simulate_tilted(cfg0, 1.0, 0.5, 0.1, rng);
  const auto m = martingale_diagnostic(log, cfg0, FlowFunctional::constant("zero", 0.0), KernelSpec::tilted(0.5, 0.1));
  EXPECT_EQ(m.m_t, 0.0);
  EXPECT_EQ(m.quadratic_variation, 0.0);
}

TEST(Martingale, MeanZeroAndSecondMomentUnderBothLaws) {
  for (const bool tilted : {true, false}) {
    const int reps = 1000;
    std::vector<double> m;
    double qv = 0.0;
    const auto f = tilted ? FlowFunctional::constant("collisions", 1.0) : FlowFunctional::log_pair(1.0);
    for (int r = 0; r < reps; ++r) {
      Rng rng = make_rng(53, static_cast<std::uint64_t>(r));
      const Configuration cfg0(std::vector<Energy>(100, 1));
      const auto log = tilted ? simulate_tilted(cfg0, 1.0, 0.5, 0.1, rng) : simulate_base(cfg0, 1.0, rng);
      const auto v = martingale_diagnostic(log, cfg0, f, tilted ? KernelSpec::tilted(0.5, 0.1) : KernelSpec::base());
      m.push_back(v.m_t);
      qv += v.quadratic_variation / reps;
    }
    double mean = 0.0;
    for (double x : m) mean += x / reps;
    double var = 0.0;
    for (double x : m) var += (x - mean) * (x - mean) / (reps - 1);
    EXPECT_LT(std::abs(mean), 3.0 * std::sqrt(var / reps)) << tilted;
    EXPECT_GT(var / qv, 0.8) << tilted;
    EXPECT_LT(var / qv, 1.2) << tilted;
  }
}
