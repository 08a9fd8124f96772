#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>

#include <boost/math/distributions/chi_squared.hpp>

#include "kac/event_io.hpp"
#include "kac/kinetics.hpp"
#include "kac/oracle.hpp"
#include "kac/simulator.hpp"

using namespace kac;

namespace {

std::string serialize(const EventLog& log) {
  std::ostringstream os;
  write_event_log(os, log);
  return os.str();
}

double p_value(double chi2, int dof) {
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), chi2));
}

}  // namespace

TEST(SimulateBase, ConservesEnergyAndLogsOnlyEffectiveEvents) {
  Rng rng(11);
  const Configuration cfg0({3, 0, 1, 1, 5, 2});
  const auto log = simulate_base(cfg0, 5.0, rng);
  Configuration cur = cfg0;
  double last = 0.0;
  for (const auto& ev : log.events()) {
    EXPECT_GT(ev.t, last);
    EXPECT_LE(ev.t, 5.0);
    last = ev.t;
    EXPECT_NE(ev.in, ev.out);
    EXPECT_EQ(ev.in.sum(), ev.out.sum());
    EXPECT_EQ(EnergyPair(cur[ev.i], cur[ev.j]), ev.in);
    cur.set_pair(ev.i, ev.j, ev.out.lo, ev.out.hi);
    EXPECT_EQ(cur.total(), cfg0.total());
  }
  EXPECT_EQ(replay(cfg0, log), cur);
}

TEST(SimulateBase, SameSeedSameBytes) {
  const Configuration cfg0(std::vector<Energy>(50, 2));
  Rng a(77);
  Rng b(77);
  EXPECT_EQ(serialize(simulate_base(cfg0, 3.0, a, 77)), serialize(simulate_base(cfg0, 3.0, b, 77)));
}

TEST(SimulateBase, MeanEventCountMatchesGenerator) {
  // E[# logged events on [0,1]] = ∫ Σ_x p_t(x) q(x) dt, q(x) the rate of leaving the unordered state of x
  const auto space = enumerate_states(2, 2);
  const Eigen::MatrixXd g = to_double(generator_matrix<Rational>(space));
  Eigen::RowVectorXd init = Eigen::RowVectorXd::Zero(3);
  init(static_cast<Eigen::Index>(space.index_of({1, 1}))) = 1.0;
  Eigen::VectorXd exit = Eigen::VectorXd::Zero(3);
  for (std::size_t x = 0; x < space.size(); ++x) {
    for (std::size_t y = 0; y < space.size(); ++y) {
      if (y == x || (space[x][0] == space[y][1] && space[x][1] == space[y][0])) continue;  // x or its swap
      exit(static_cast<Eigen::Index>(x)) += g(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
    }
  }
  const int pieces = 200;
  double expect = 0.0;
  for (int k = 0; k <= pieces; ++k) {
    const double w = (k == 0 || k == pieces) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    expect += w * transient_distribution(g, static_cast<double>(k) / pieces, init).dot(exit);
  }
  expect /= 3.0 * pieces;

  const int reps = 10000;
  double sum = 0.0;
  double sq = 0.0;
  for (int r = 0; r < reps; ++r) {
    Rng rng = make_rng(21, static_cast<std::uint64_t>(r));
    const double c = static_cast<double>(simulate_base(Configuration({1, 1}), 1.0, rng).size());
    sum += c;
    sq += c * c;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sq / reps - mean * mean) / reps);
  EXPECT_LT(std::abs(mean - expect), 3.0 * se) << mean << " vs " << expect;
}

TEST(SimulateBase, JumpChainAndHoldingTimesMatchGenerator) {
  const auto space = enumerate_states(2, 2);
  const Eigen::MatrixXd g = to_double(generator_matrix<Rational>(space));
  Rng rng(31);
  std::vector<Energy> cur = {1, 1};

  std::map<std::size_t, std::map<std::size_t, int>> jumps;
  std::map<std::size_t, std::pair<double, int>> holding;
  double entered = 0.0;
  simulate_base_labeled(Configuration(cur), 60000.0, rng, [&](double t, Index i, Index j, Energy ei, Energy ej) {
    const std::size_t from = space.index_of(cur);
    cur[i] = ei;
    cur[j] = ej;
    const std::size_t to = space.index_of(cur);
    ++jumps[from][to];
    holding[from].first += t - entered;
    ++holding[from].second;
    entered = t;
  });
  for (const auto& [from, row] : jumps) {
    const double exit = -g(static_cast<Eigen::Index>(from), static_cast<Eigen::Index>(from));
    int total = 0;
    for (const auto& kv : row) total += kv.second;
    double chi2 = 0.0;
    int cells = 0;
    for (std::size_t to = 0; to < space.size(); ++to) {
      if (to == from) continue;
      const double p = g(static_cast<Eigen::Index>(from), static_cast<Eigen::Index>(to)) / exit;
      if (p == 0.0) {
        EXPECT_EQ(row.count(to), 0u);
        continue;
      }
      const double expect = p * total;
      const double seen = row.count(to) ? row.at(to) : 0;
      chi2 += (seen - expect) * (seen - expect) / expect;
      ++cells;
    }
    EXPECT_GT(p_value(chi2, cells - 1), 1e-3);
    // holding times are exponential with mean 1/exit: the sample mean has sd (1/exit)/√n
    const auto [time, n] = holding[from];
    EXPECT_LT(std::abs(time / n - 1.0 / exit), 4.0 / exit / std::sqrt(n));
  }
}

TEST(SimulateBase, LongRunOccupationIsUniform) {
  const auto space = enumerate_states(3, 4);
  Rng rng(41);
  const Configuration cfg0({4, 0, 0});
  const double horizon = 400000.0;
  std::vector<double> occupation(space.size(), 0.0);
  std::vector<Energy> cur(cfg0.energies().begin(), cfg0.energies().end());
  double last = 0.0;
  simulate_base_labeled(cfg0, horizon, rng, [&](double t, Index i, Index j, Energy ei, Energy ej) {
    occupation[space.index_of(cur)] += t - last;
    cur[i] = ei;
    cur[j] = ej;
    last = t;
  });
  occupation[space.index_of(cur)] += horizon - last;
  double tv = 0.0;
  for (double v : occupation) tv += 0.5 * std::abs(v / horizon - 1.0 / space.size());
  EXPECT_LT(tv, 0.01);
}

TEST(EventLog, SpillRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "kac_spill_test";
  std::filesystem::create_directories(dir);
  const Configuration cfg0(std::vector<Energy>(30, 1));
  Rng a(5);
  Rng b(5);
  const auto plain = simulate_base(cfg0, 4.0, a, 5);

  EventLog spilled(cfg0.size(), cfg0.total(), 4.0, 5, "base");
  spilled.set_spill((dir / "events.jsonl").string(), 16);
  simulate_base(cfg0, 4.0, b, 5, [&](const Event& ev) { spilled.append(ev); });
  EXPECT_TRUE(spilled.spilled());
  EXPECT_EQ(spilled.size(), plain.size());
  std::vector<Event> back;
  spilled.for_each([&](const Event& ev) { back.push_back(ev); });
  EXPECT_EQ(back, plain.events());
  EXPECT_THROW(spilled.events(), std::logic_error);
  std::filesystem::remove_all(dir);
}

TEST(SimulateTilted, FirstMergeIsAFairCoin) {
  // the pair merges before t*-δ with probability 1 - e^{-α(t*-δ)/2}
  int first_wins = 0;
  int merges = 0;
  const int reps = 20000;
  for (int r = 0; r < reps; ++r) {
    Rng rng = make_rng(51, static_cast<std::uint64_t>(r));
    const auto log = simulate_tilted(Configuration({1, 1}), 1.0, 0.5, 0.1, rng);
    if (log.empty()) continue;
    ++merges;
    ASSERT_EQ(log.size(), 1u);
    const Event& ev = log.events().front();
    EXPECT_EQ(ev.out, EnergyPair(0, 2));
    // particle i holds out.lo after the event
    if (ev.i == 1) ++first_wins;
  }
  const double p = 1.0 - std::exp(-0.5 * alpha(0.4, 0.5));
  EXPECT_LT(std::abs(merges - p * reps), 4.0 * std::sqrt(p * (1.0 - p) * reps));
  EXPECT_LT(std::abs(first_wins - merges / 2.0), 4.0 * std::sqrt(merges / 4.0));
}

TEST(SimulateTilted, NothingAfterCutAndZerosOnlyGrow) {
  for (int r = 0; r < 50; ++r) {
    Rng rng = make_rng(61, static_cast<std::uint64_t>(r));
    const Configuration cfg0({1, 1, 1, 1, 2, 2, 3, 1, 1, 4});
    const auto log = simulate_tilted(cfg0, 1.0, 0.5, 0.1, rng);
    Configuration cur = cfg0;
    auto zeros = [](const Configuration& c) {
      return std::count(c.energies().begin(), c.energies().end(), Energy{0});
    };
    auto prev = zeros(cur);
    for (const auto& ev : log.events()) {
      EXPECT_LT(ev.t, 0.4);
      EXPECT_EQ(ev.in.lo, ev.in.hi);
      EXPECT_EQ(ev.out, EnergyPair(0, ev.in.sum()));
      cur.set_pair(ev.i, ev.j, ev.out.lo, ev.out.hi);
      EXPECT_GE(zeros(cur), prev);
      prev = zeros(cur);
    }
    EXPECT_EQ(cur.total(), cfg0.total());
  }
}

TEST(SimulateTilted, ZeroFractionFollowsModifiedEquation) {
  const std::vector<double> at = {alpha(0.4, 0.5)};
  const auto mbe = solve_mbe(KineticState::delta(1, 64), at);
  const double predicted = mbe.states.back().mass(0);
  double mean = 0.0;
  const int reps = 40;
  for (int r = 0; r < reps; ++r) {
    Rng rng = make_rng(71, static_cast<std::uint64_t>(r));
    const Configuration cfg0(std::vector<Energy>(100, 1));
    const auto fin = replay(cfg0, simulate_tilted(cfg0, 1.0, 0.5, 0.1, rng));
    mean += static_cast<double>(std::count(fin.energies().begin(), fin.energies().end(), Energy{0})) / 100.0 / reps;
  }
  EXPECT_NEAR(mean, predicted, 0.05);
}

TEST(Replay, DetectsCorruption) {
  EventLog log(2, 2, 1.0, 0, "base");
  log.append({0.5, 0, 1, EnergyPair(0, 2), EnergyPair(1, 1)});
  EXPECT_THROW(replay(Configuration({1, 1}), log), CorruptionError);
}

TEST(StateAt, IsCadlag) {
  EventLog log(2, 2, 1.0, 0, "base");
  log.append({0.3, 0, 1, EnergyPair(1, 1), EnergyPair(0, 2)});
  EXPECT_EQ(state_at(Configuration({1, 1}), log, 0.29), Configuration({1, 1}));
  EXPECT_EQ(state_at(Configuration({1, 1}), log, 0.3), Configuration({0, 2}));
}
