#include "kac/oracle.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace kac {

StateSpace::StateSpace(std::size_t n, Energy e_total, std::vector<std::vector<Energy>> states)
    : n_(n), e_total_(e_total), states_(std::move(states)) {
  for (std::size_t k = 0; k < states_.size(); ++k) index_.emplace(states_[k], k);
}

std::size_t StateSpace::index_of(const std::vector<Energy>& state) const {
  auto it = index_.find(state);
  if (it == index_.end()) throw std::out_of_range("state outside the enumerated space");
  return it->second;
}

namespace {

void compose(std::size_t slot, Energy left, std::vector<Energy>& cur, std::vector<std::vector<Energy>>& out) {
  if (slot + 1 == cur.size()) {
    cur[slot] = left;
    out.push_back(cur);
    return;
  }
  for (Energy v = 0; v <= left; ++v) {
    cur[slot] = v;
    compose(slot + 1, left - v, cur, out);
  }
}

}  // namespace

StateSpace enumerate_states(std::size_t n, Energy e_total, std::size_t cap) {
  if (n == 0 || e_total < 0) throw std::invalid_argument("need N >= 1 and E >= 0");
  // C(E+N-1, N-1), stopping as soon as it passes the cap
  long double count = 1.0L;
  for (std::size_t k = 1; k < n; ++k) {
    count = count * static_cast<long double>(e_total + static_cast<Energy>(k)) / static_cast<long double>(k);
    if (count > static_cast<long double>(cap) + 0.5L) {
      throw ResourceError("|Σ_{N,E}| exceeds the cap of " + std::to_string(cap) + " states");
    }
  }
  std::vector<std::vector<Energy>> states;
  states.reserve(static_cast<std::size_t>(std::llround(count)));
  std::vector<Energy> cur(n, 0);
  compose(0, e_total, cur, states);
  return StateSpace(n, e_total, std::move(states));
}

Eigen::MatrixXd to_double(const Eigen::Matrix<Rational, Eigen::Dynamic, Eigen::Dynamic>& g) {
  Eigen::MatrixXd d(g.rows(), g.cols());
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    for (Eigen::Index c = 0; c < g.cols(); ++c) d(r, c) = boost::rational_cast<double>(g(r, c));
  }
  return d;
}

Eigen::RowVectorXd transient_distribution(const Eigen::MatrixXd& gen, double t, const Eigen::RowVectorXd& init,
                                          double tol) {
  if (gen.rows() != gen.cols() || gen.rows() != init.size()) throw std::invalid_argument("shape mismatch");
  if (!(t >= 0.0)) throw std::invalid_argument("t must be non-negative");
  const double lambda = gen.diagonal().cwiseAbs().maxCoeff();
  if (t == 0.0 || lambda == 0.0) return init;

  const Eigen::MatrixXd p = Eigen::MatrixXd::Identity(gen.rows(), gen.cols()) + gen / lambda;
  // chunks with Λτ ≤ 50 keep e^{-Λτ} far from underflow
  const auto chunks = static_cast<long>(std::ceil(lambda * t / 50.0));
  const double tau = t / static_cast<double>(chunks);
  const double rate = lambda * tau;
  const double chunk_tol = tol / static_cast<double>(chunks);

  Eigen::RowVectorXd v = init;
  for (long c = 0; c < chunks; ++c) {
    Eigen::RowVectorXd term = v;
    double weight = std::exp(-rate);
    double covered = weight;
    Eigen::RowVectorXd acc = weight * term;
    for (long k = 1; 1.0 - covered > chunk_tol; ++k) {
      term = term * p;
      weight *= rate / static_cast<double>(k);
      covered += weight;
      acc += weight * term;
      if (k > 100000) throw std::runtime_error("uniformization failed to converge");
    }
    v = acc / covered;
  }
  return v;
}

void write_generator_csv(std::ostream& os, const StateSpace& space,
                         const Eigen::Matrix<Rational, Eigen::Dynamic, Eigen::Dynamic>& g) {
  auto state = [&](std::size_t k) {
    std::string s;
    for (std::size_t i = 0; i < space.n(); ++i) {
      if (i > 0) s += ' ';
      s += std::to_string(space[k][i]);
    }
    return s;
  };
  os << "from,to,rate,rate_exact\n";
  os.precision(17);
  for (Eigen::Index r = 0; r < g.rows(); ++r) {
    for (Eigen::Index c = 0; c < g.cols(); ++c) {
      if (g(r, c) == Rational(0)) continue;
      os << state(static_cast<std::size_t>(r)) << ',' << state(static_cast<std::size_t>(c)) << ','
         << boost::rational_cast<double>(g(r, c)) << ',' << g(r, c).numerator() << '/' << g(r, c).denominator()
         << '\n';
    }
  }
}

}  // namespace kac
