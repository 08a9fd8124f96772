// Exact finite-state description of the base chain on Σ_{N,E} for small N, E.

#ifndef KAC_ORACLE_HPP
#define KAC_ORACLE_HPP

#include <cstddef>
#include <iosfwd>
#include <map>
#include <vector>

#include <Eigen/Dense>

#include "kac/errors.hpp"
#include "kac/model.hpp"
#include "kac/rational_eigen.hpp"

namespace kac {

/// All compositions of E into N non-negative parts, in lexicographic order.
class StateSpace {
 public:
  StateSpace(std::size_t n, Energy e_total, std::vector<std::vector<Energy>> states);

  std::size_t n() const { return n_; }
  Energy e_total() const { return e_total_; }
  std::size_t size() const { return states_.size(); }
  const std::vector<Energy>& operator[](std::size_t k) const { return states_[k]; }
  const std::vector<std::vector<Energy>>& states() const { return states_; }
  /// Throws std::out_of_range for a vector outside the space.
  std::size_t index_of(const std::vector<Energy>& state) const;

 private:
  std::size_t n_;
  Energy e_total_;
  std::vector<std::vector<Energy>> states_;
  std::map<std::vector<Energy>, std::size_t> index_;
};

/// Throws ResourceError when C(E+N-1, N-1) exceeds `cap`.
StateSpace enumerate_states(std::size_t n, Energy e_total, std::size_t cap = 200000);

/// Dense generators are limited to this many states.
inline constexpr std::size_t kDenseGeneratorLimit = 5000;

/// Rate x -> y = Σ_{pairs {i,j}, ℓ : T_ij^ℓ x = y} 1/(N(ε_i+ε_j+1)); diagonal = -row sum.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> generator_matrix(const StateSpace& space) {
  if (space.size() > kDenseGeneratorLimit) {
    throw ResourceError("state space of size " + std::to_string(space.size()) + " is too large for a dense generator");
  }
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  const auto m = static_cast<Eigen::Index>(space.size());
  Matrix g = Matrix::Constant(m, m, Scalar(0));
  const auto n = static_cast<std::int64_t>(space.n());
  for (std::size_t x = 0; x < space.size(); ++x) {
    std::vector<Energy> y = space[x];
    for (std::size_t i = 0; i < space.n(); ++i) {
      for (std::size_t j = i + 1; j < space.n(); ++j) {
        const Energy s = space[x][i] + space[x][j];
        for (Energy l = 0; l <= s; ++l) {
          if (l == space[x][i]) continue;  // T_ij^ℓ x = x
          y[i] = l;
          y[j] = s - l;
          const auto target = static_cast<Eigen::Index>(space.index_of(y));
          g(static_cast<Eigen::Index>(x), target) += Scalar(1) / Scalar(n * (s + 1));
        }
        y[i] = space[x][i];
        y[j] = space[x][j];
      }
    }
    Scalar row(0);
    for (Eigen::Index c = 0; c < m; ++c) {
      if (c != static_cast<Eigen::Index>(x)) row += g(static_cast<Eigen::Index>(x), c);
    }
    g(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(x)) = -row;
  }
  return g;
}

Eigen::MatrixXd to_double(const Eigen::Matrix<Rational, Eigen::Dynamic, Eigen::Dynamic>& g);

/// init · exp(t G) by uniformization; the truncation error in total variation is below `tol`.
Eigen::RowVectorXd transient_distribution(const Eigen::MatrixXd& gen, double t, const Eigen::RowVectorXd& init,
                                          double tol = 1e-13);

/// CSV: from,to,rate,rate_exact with states written as space-separated energies.
void write_generator_csv(std::ostream& os, const StateSpace& space,
                         const Eigen::Matrix<Rational, Eigen::Dynamic, Eigen::Dynamic>& g);

}  // namespace kac

#endif  // KAC_ORACLE_HPP
