#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "kac/oracle.hpp"
#include "kac/simulator.hpp"

using namespace kac;

using RationalMatrix = Eigen::Matrix<Rational, Eigen::Dynamic, Eigen::Dynamic>;

TEST(StateSpace, EnumeratesCompositions) {
  const auto s = enumerate_states(3, 4);
  EXPECT_EQ(s.size(), 15u);
  EXPECT_EQ(s[0], (std::vector<Energy>{0, 0, 4}));
  EXPECT_EQ(s[14], (std::vector<Energy>{4, 0, 0}));
  for (std::size_t k = 0; k < s.size(); ++k) EXPECT_EQ(s.index_of(s[k]), k);
  EXPECT_THROW(s.index_of({1, 1, 1}), std::out_of_range);
  EXPECT_THROW(enumerate_states(30, 30), ResourceError);
}

TEST(Generator, TwoParticleRates) {
  const auto s = enumerate_states(2, 2);
  const RationalMatrix g = generator_matrix<Rational>(s);
  const auto i11 = static_cast<Eigen::Index>(s.index_of({1, 1}));
  const auto i02 = static_cast<Eigen::Index>(s.index_of({0, 2}));
  const auto i20 = static_cast<Eigen::Index>(s.index_of({2, 0}));
  EXPECT_EQ(g(i11, i02), Rational(1, 6));
  EXPECT_EQ(g(i11, i20), Rational(1, 6));
  EXPECT_EQ(g(i02, i11), Rational(1, 6));
}

TEST(Generator, ExactRowSumsSymmetryAndUniformNullVector) {
  for (const auto& [n, e] : std::vector<std::pair<std::size_t, Energy>>{{2, 2}, {3, 4}, {4, 4}, {3, 7}, {5, 3}}) {
    const auto s = enumerate_states(n, e);
    const RationalMatrix g = generator_matrix<Rational>(s);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      Rational row(0);
      Rational col(0);
      for (Eigen::Index c = 0; c < g.cols(); ++c) {
        row += g(r, c);
        col += g(c, r);
        EXPECT_EQ(g(r, c), g(c, r));
      }
      EXPECT_EQ(row, Rational(0));
      EXPECT_EQ(col, Rational(0));  // uniform vector is a left null vector
    }
  }
}

TEST(Transient, IdentityAtZeroAndUniformInTheLongRun) {
  const auto s = enumerate_states(2, 2);
  const Eigen::MatrixXd g = to_double(generator_matrix<Rational>(s));
  Eigen::RowVectorXd init = Eigen::RowVectorXd::Zero(3);
  init(static_cast<Eigen::Index>(s.index_of({1, 1}))) = 1.0;
  EXPECT_EQ(transient_distribution(g, 0.0, init), init);
  const Eigen::RowVectorXd late = transient_distribution(g, 400.0, init);
  EXPECT_LT((late.array() - 1.0 / 3.0).abs().maxCoeff(), 1e-10);
  const Eigen::RowVectorXd mid = transient_distribution(g, 1.3, init);
  EXPECT_NEAR(mid.sum(), 1.0, 1e-12);
  EXPECT_GE(mid.minCoeff(), 0.0);
}

TEST(Transient, MatchesMatrixExponentialSeries) {
  const auto s = enumerate_states(3, 3);
  const Eigen::MatrixXd g = to_double(generator_matrix<Rational>(s));
  Eigen::RowVectorXd init = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(s.size()));
  init(0) = 1.0;
  // scaling and squaring with a Taylor series
  const double t = 2.0;
  Eigen::MatrixXd a = g * (t / 1024.0);
  Eigen::MatrixXd e = Eigen::MatrixXd::Identity(g.rows(), g.cols());
  Eigen::MatrixXd term = e;
  for (int k = 1; k < 20; ++k) {
    term = term * a / k;
    e += term;
  }
  for (int k = 0; k < 10; ++k) e = e * e;
  EXPECT_LT((transient_distribution(g, t, init) - init * e).cwiseAbs().sum(), 1e-12);
}

TEST(Transient, MarginalsMatchSimulatedOccupation) {
  const auto s = enumerate_states(3, 4);
  const Eigen::MatrixXd g = to_double(generator_matrix<Rational>(s));
  const std::vector<Energy> start = {2, 2, 0};
  Eigen::RowVectorXd init = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(s.size()));
  init(static_cast<Eigen::Index>(s.index_of(start))) = 1.0;
  const Eigen::RowVectorXd exact = transient_distribution(g, 1.0, init);
  Eigen::RowVectorXd freq = Eigen::RowVectorXd::Zero(exact.size());
  const int reps = 100000;
  for (int r = 0; r < reps; ++r) {
    Rng rng = make_rng(5, static_cast<std::uint64_t>(r));
    std::vector<Energy> cur = start;
    simulate_base_labeled(Configuration(start), 1.0, rng, [&](double, Index i, Index j, Energy ei, Energy ej) {
      cur[i] = ei;
      cur[j] = ej;
    });
    freq(static_cast<Eigen::Index>(s.index_of(cur))) += 1.0 / reps;
  }
  EXPECT_LT(0.5 * (freq - exact).cwiseAbs().sum(), 0.01);
}

TEST(Generator, DenseLimitAndCsv) {
  EXPECT_THROW(generator_matrix<double>(enumerate_states(6, 12)), ResourceError);
  const auto s = enumerate_states(2, 1);
  std::ostringstream os;
  write_generator_csv(os, s, generator_matrix<Rational>(s));
  EXPECT_EQ(os.str(), "from,to,rate,rate_exact\n0 1,0 1,-0.25,-1/4\n0 1,1 0,0.25,1/4\n1 0,0 1,0.25,1/4\n1 0,1 0,-0.25,-1/4\n");
}
