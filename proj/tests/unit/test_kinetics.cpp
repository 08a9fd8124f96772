#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "kac/errors.hpp"
#include "kac/kinetics.hpp"

using namespace kac;

namespace {

Eigen::VectorXd stationary(double p, Energy cutoff) {
  Eigen::VectorXd f(cutoff + 1);
  for (Energy e = 0; e <= cutoff; ++e) f(e) = p * std::pow(1.0 - p, static_cast<double>(e));
  return f;
}

Eigen::VectorXd point(Energy level, Energy cutoff) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(cutoff + 1);
  f(level) = 1.0;
  return f;
}

std::vector<double> uniform_grid(double t1, std::size_t cells) {
  std::vector<double> g(cells + 1);
  for (std::size_t k = 0; k <= cells; ++k) g[k] = t1 * static_cast<double>(k) / static_cast<double>(cells);
  return g;
}

}  // namespace

TEST(BeRhs, StationaryFamily) {
  for (double p : {0.3, 0.5, 0.7}) {
    const Eigen::VectorXd rhs = be_rhs(stationary(p, 200));
    EXPECT_LT(rhs.head(101).cwiseAbs().maxCoeff(), 1e-10) << p;
  }
}

TEST(BeRhs, PointMasses) {
  EXPECT_EQ(be_rhs(point(0, 10)).cwiseAbs().maxCoeff(), 0.0);
  const Eigen::VectorXd r = be_rhs(point(1, 10));
  EXPECT_NEAR(r(0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(r(1), -2.0 / 3.0, 1e-15);
  EXPECT_NEAR(r(2), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.tail(8).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(BeRhs, LeakRatesAtTheCutoff) {
  // cutoff 1: the (1,1) pair sends 1/3 of its rate to level 2
  const BeRates r = be_rates(point(1, 1));
  EXPECT_NEAR(r.leak_mass_rate, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.leak_energy_rate, 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(r.rhs.sum() + r.leak_mass_rate, 0.0, 1e-15);
}

TEST(SolveBe, StationaryStaysPut) {
  const Eigen::VectorXd f0 = stationary(0.5, 120);
  const std::vector<double> at = {1.0};
  const auto path = solve_be(f0, at);
  EXPECT_LT((path.states.back().dense() - f0).lpNorm<1>(), 1e-8);
}

TEST(SolveBe, ShortTimeExpansion) {
  const std::vector<double> at = {1e-3, 2e-3};
  const auto path = solve_be(point(1, 64), at, 1e-4);
  for (std::size_t k = 0; k < at.size(); ++k) {
    EXPECT_NEAR(path.states[k].mass(1), 1.0 - 2.0 / 3.0 * at[k], 2.0 * at[k] * at[k]);
  }
}

TEST(SolveBe, MassBookkeeping) {
  const std::vector<double> at = uniform_grid(2.0, 20);
  for (Energy cutoff : {6, 40}) {
    const auto path = solve_be(point(2, cutoff), at);
    for (const auto& s : path.states) {
      EXPECT_NEAR(s.total_mass() + s.leak.mass, 1.0, 1e-10);
      EXPECT_NEAR(s.energy() + s.leak.energy, 2.0, 1e-10);
      EXPECT_GE(s.leak.mass, 0.0);
    }
  }
}

TEST(SolveBe, FourthOrderUnderStepHalving) {
  const std::vector<double> at = {1.0};
  const Eigen::VectorXd f0 = point(3, 60);
  const Eigen::VectorXd ref = solve_be(f0, at, 1e-3).states.back().dense();
  const double e1 = (solve_be(f0, at, 0.1).states.back().dense() - ref).lpNorm<1>();
  const double e2 = (solve_be(f0, at, 0.05).states.back().dense() - ref).lpNorm<1>();
  EXPECT_GT(e1 / e2, 12.0);
}

TEST(SolveBe, RejectsOversizedSteps) {
  const std::vector<double> at = {5.0};
  EXPECT_THROW(solve_be(point(1, 40), at, 5.0), NumericalError);
}

TEST(SolveMbe, OddLevelsFollowClosedForm) {
  const std::vector<double> at = log_time_grid(100.0, 201);
  const auto pd = solve_mbe(KineticState::delta(1, 8), at);
  const auto pg = solve_mbe(initial_state(BaseMeasure::geometric(0.4)), at);
  const KineticState g0 = initial_state(BaseMeasure::geometric(0.4));
  double worst = 0.0;
  for (std::size_t k = 0; k < at.size(); ++k) {
    worst = std::max(worst, std::abs(pd.states[k].mass(1) - 1.0 / (1.0 + at[k])));
    for (Energy e = 1; e <= 41; e += 2) {
      const double f0 = g0.mass(e);
      worst = std::max(worst, std::abs(pg.states[k].mass(e) - f0 / (1.0 + at[k] * f0)));
    }
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(SolveMbe, EnergyConservedWithAdaptiveCutoff) {
  const std::vector<double> at = log_time_grid(1000.0, 101);
  const auto path = solve_mbe(KineticState::delta(1, 8), at);
  for (const auto& s : path.states) {
    EXPECT_NEAR(s.energy() + s.leak.energy, 1.0, 1e-9);
    EXPECT_LT(s.leak.energy, 1e-6);
    EXPECT_NEAR(s.total_mass() + s.leak.mass, 1.0, 1e-9);
  }
  EXPECT_GT(path.states.back().cutoff(), 8);
}

TEST(SolveMbe, InsufficientCutoffIsReported) {
  MbeOptions opts;
  opts.adaptive = false;
  opts.cutoff = 16;
  const std::vector<double> at = {1000.0};
  EXPECT_THROW(solve_mbe(KineticState::delta(1, 16), at, opts), NumericalError);
  opts.adaptive = true;
  opts.max_cutoff = 64;
  EXPECT_THROW(solve_mbe(KineticState::delta(1, 16), at, opts), NumericalError);
}

TEST(EvaporationBounds, BoundsForPointMass) {
  const auto path = solve_mbe(KineticState::delta(1, 8), log_time_grid(1000.0, 301));
  const auto r = check_evaporation_bounds(path);
  EXPECT_TRUE(r.level_bound_holds);
  EXPECT_LE(r.max_xi, 2.0 + 1e-12);
  EXPECT_TRUE(r.zero_level_monotone);
  EXPECT_TRUE(std::isfinite(r.c_mass));
  EXPECT_TRUE(std::isfinite(r.c_log));
  EXPECT_TRUE(r.c_mass_stable);
  EXPECT_TRUE(r.c_log_stable);
}

TEST(EvaporationBounds, BoundsForGeometricWithoutZero) {
  const KineticState g = initial_state(BaseMeasure::geometric(0.5));
  Eigen::VectorXd f = g.dense();
  f(0) = 0.0;
  f /= f.sum();
  const auto path = solve_mbe(KineticState::from_dense(f), log_time_grid(1000.0, 301));
  const auto r = check_evaporation_bounds(path);
  EXPECT_TRUE(r.level_bound_holds);
  EXPECT_TRUE(r.zero_level_monotone);
  EXPECT_TRUE(std::isfinite(r.c_mass));
  EXPECT_TRUE(std::isfinite(r.c_log));
}

TEST(EvaporationBounds, DyadicEnergyIdentity) {
  const auto path = solve_mbe(KineticState::delta(1, 8), log_time_grid(1000.0, 2001));
  for (int n = 0; n <= 10; ++n) EXPECT_LT(dyadic_energy_residual(path, n), 1e-8) << n;
}

TEST(BarPath, EnergyBeforeAndAfterTheCut) {
  const auto path = build_bar_path(BaseMeasure::point_mass(1), 1.0, 0.5, 1.0);
  for (std::size_t k = 0; k < path.size(); ++k) {
    const double energy = path.states[k].energy() + path.states[k].leak.energy;
    if (path.grid[k] < 0.5) {
      EXPECT_NEAR(energy, 1.0, 1e-6);
    } else {
      EXPECT_EQ(path.states[k].energy(), 0.0);
    }
  }
  EXPECT_THROW(build_bar_path(BaseMeasure::point_mass(1), 2.0, 0.5, 1.0), std::invalid_argument);
}

TEST(BarPath, LowLevelsEmptyNearTheCut) {
  const auto path = build_bar_path(BaseMeasure::point_mass(1), 1.0, 0.5, 1.0);
  double prev = 1.0;
  for (std::size_t k = 0; k < path.size(); ++k) {
    if (path.grid[k] < 0.25 || path.grid[k] >= 0.5) continue;
    double low = 0.0;
    for (Energy e = 1; e <= 16; ++e) low += path.states[k].mass(e);
    EXPECT_LE(low, prev + 1e-12);
    prev = low;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(BarPath, BalanceForTabulatedTestFunction) {
  std::vector<double> table(9);
  for (std::size_t e = 0; e < table.size(); ++e) table[e] = std::sin(static_cast<double>(e));
  const auto phi = TestFunction::constant_in_time(table, 0.3);
  BarGridOptions coarse;
  BarGridOptions fine;
  fine.uniform_points = 256;
  fine.points_per_halving = 32;
  fine.tail_points = 64;
  const double r1 = kinetic_balance_residual(build_bar_path_delta(BaseMeasure::point_mass(1), 1.0, 0.5, 0.1, 1.0, coarse), phi);
  const double r2 = kinetic_balance_residual(build_bar_path_delta(BaseMeasure::point_mass(1), 1.0, 0.5, 0.1, 1.0, fine), phi);
  EXPECT_LT(std::abs(r1), 1e-2);
  EXPECT_LT(std::abs(r2), std::abs(r1) / 4.0);
}

TEST(BarPathDelta, FrozenTailAndConservedEnergy) {
  const auto path = build_bar_path_delta(BaseMeasure::point_mass(1), 1.0, 0.5, 0.1, 1.0);
  const auto at_cut = std::find(path.grid.begin(), path.grid.end(), 0.4);
  ASSERT_NE(at_cut, path.grid.end());
  const auto k_cut = static_cast<std::size_t>(at_cut - path.grid.begin());
  EXPECT_LT((path.states.back().dense() - path.states[k_cut].dense()).cwiseAbs().maxCoeff(), 1e-15);
  for (const auto& s : path.states) EXPECT_NEAR(s.energy() + s.leak.energy, 1.0, 1e-6);
  // flux switches off at the cut
  EXPECT_TRUE(std::holds_alternative<std::monostate>(path.flux.back()));
  EXPECT_THROW(build_bar_path_delta(BaseMeasure::point_mass(1), 1.0, 0.5, 0.5, 1.0), std::invalid_argument);
}

TEST(BarPathDelta, ApproachesBarPathAsDeltaShrinks) {
  const auto bar = build_bar_path(BaseMeasure::point_mass(1), 1.0, 0.5, 1.0);
  const std::vector<double> probe = {0.3, 0.45, 0.49};
  auto state_at = [](const KineticPath& p, double t) {
    const auto it = std::upper_bound(p.grid.begin(), p.grid.end(), t);
    return p.states[static_cast<std::size_t>(it - p.grid.begin()) - 1];
  };
  double prev = std::numeric_limits<double>::infinity();
  for (double delta : {0.1, 0.05, 0.02, 0.005}) {
    const auto pd = build_bar_path_delta(BaseMeasure::point_mass(1), 1.0, 0.5, delta, 1.0);
    double dist = 0.0;
    for (double t : probe) {
      const auto a = state_at(pd, t);
      const auto b = state_at(bar, t);
      double tv = 0.0;
      for (Energy e = 0; e <= 8; ++e) tv += 0.5 * std::abs(a.mass(e) - b.mass(e));
      dist = std::max(dist, tv);
    }
    EXPECT_LE(dist, prev);
    prev = dist;
  }
  EXPECT_LT(prev, 0.05);
}

TEST(KineticBalance, SecondOrderOnBoltzmannPair) {
  // φ is tabulated on the coarsest grid so every refinement sees the same function
  const std::size_t base_cells = 8;
  const std::vector<double> coarse = uniform_grid(1.0, base_cells);
  Eigen::MatrixXd values(static_cast<Eigen::Index>(coarse.size()), 7);
  Eigen::VectorXd tail(static_cast<Eigen::Index>(coarse.size()));
  for (std::size_t k = 0; k < coarse.size(); ++k) {
    for (int e = 0; e < 7; ++e) values(static_cast<Eigen::Index>(k), e) = std::sin(3.0 * coarse[k]) * e;
    tail(static_cast<Eigen::Index>(k)) = 6.0 * std::sin(3.0 * coarse[k]);
  }
  const TestFunction phi(coarse, values, tail);
  const Eigen::VectorXd f0 = point(3, 80);
  std::vector<double> errs;
  for (std::size_t mult : {1, 2, 4, 8}) {
    const auto path = solve_be(f0, uniform_grid(1.0, base_cells * mult), 1e-3);
    errs.push_back(std::abs(kinetic_balance_residual(path, phi)));
  }
  for (std::size_t k = 1; k < errs.size(); ++k) EXPECT_GT(errs[k - 1] / errs[k], 3.5) << k;
}

TEST(KineticPathCsv, RoundTrip) {
  const auto path = build_bar_path_delta(BaseMeasure::point_mass(1), 1.0, 0.5, 0.1, 1.0);
  std::ostringstream s;
  std::ostringstream q;
  write_kinetic_path_csv(s, path);
  write_flux_csv(q, path);
  std::istringstream si(s.str());
  std::istringstream qi(q.str());
  const auto back = read_kinetic_path_csv(si, &qi);
  ASSERT_EQ(back.size(), path.size());
  for (std::size_t k = 0; k < path.size(); ++k) {
    EXPECT_DOUBLE_EQ(back.grid[k], path.grid[k]);
    EXPECT_DOUBLE_EQ(back.states[k].energy(), path.states[k].energy());
  }
}
