// Empirical measure path π^N, empirical flow Q^N and the balance equation
// that links them.

#ifndef KAC_EMPIRICS_HPP
#define KAC_EMPIRICS_HPP

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "kac/model.hpp"
#include "kac/simulator.hpp"

namespace kac {

using Histogram = std::vector<std::int64_t>;

/// π^N(ε) = (number of particles with energy ε) / N, kept as integer counts.
struct EmpiricalMeasure {
  std::size_t n = 0;
  Histogram counts;

  Rational mass_exact(Energy e) const;
  double mass(Energy e) const;
  Rational mean_exact() const;
  double mean() const;
};

EmpiricalMeasure empirical_measure(const Configuration& cfg);

/// Snapshots of π^N_t on a time grid (càdlàg: events at time <= t included).
struct MeasurePath {
  std::size_t n = 0;
  std::vector<double> grid;
  std::vector<Histogram> counts;

  double mass(std::size_t k, Energy e) const;
  /// π_{t_k}(φ) for a per-level function.
  double expect(std::size_t k, const std::function<double(Energy)>& phi) const;
};

MeasurePath measure_path(const EventLog& log, const Configuration& cfg0, std::span<const double> grid);

/// Q^N: mass 1/N per logged collision at (t; in, out).
///
/// Atoms are kept individually up to `atom_cap`; a larger log is stored as counts
/// per (time bin, quad) on `bins` equal bins of [0, horizon], and integrals then
/// evaluate test functions at bin midpoints.
class FlowMeasure {
 public:
  struct Atom {
    double t;
    CollisionQuad quad;
  };

  FlowMeasure() = default;
  FlowMeasure(std::size_t n, double horizon) : n_(n), horizon_(horizon) {}

  std::size_t n() const { return n_; }
  double horizon() const { return horizon_; }
  bool binned() const { return !bin_counts_.empty() || bins_ > 0; }
  std::size_t bins() const { return bins_; }
  std::int64_t event_count() const { return events_; }
  double total_mass() const { return static_cast<double>(events_) / static_cast<double>(n_); }

  void add(double t, const CollisionQuad& q);
  void rebin(std::size_t bins);

  /// Visits every atom as (t_lo, t_hi, quad, count); unbinned atoms have t_lo == t_hi.
  void for_each(const std::function<void(double, double, const CollisionQuad&, std::int64_t)>& fn) const;

  /// Q^N(F) = Σ F(t; quad) / N.
  double integrate(const std::function<double(double, const CollisionQuad&)>& f) const;

 private:
  std::size_t n_ = 0;
  double horizon_ = 0.0;
  std::int64_t events_ = 0;
  std::vector<Atom> atoms_;
  std::size_t bins_ = 0;
  std::map<std::pair<std::size_t, CollisionQuad>, std::int64_t> bin_counts_;
};

FlowMeasure empirical_flow(const EventLog& log, std::size_t atom_cap = 1'000'000, std::size_t bins = 1000);

/// Bounded test function φ_t(ε) tabulated on a time grid × {0..cap} plus a tail
/// value for ε > cap, linear in t between grid points and constant outside.
class TestFunction {
 public:
  /// Time-independent φ(ε).
  static TestFunction constant_in_time(std::vector<double> table, double tail);

  /// values(k, ε) = φ_{grid[k]}(ε); tail(k) = φ_{grid[k]}(ε > cap).
  TestFunction(std::vector<double> grid, Eigen::MatrixXd values, Eigen::VectorXd tail);

  double value(double t, Energy e) const;
  /// ∂_t φ on the grid cell containing t (zero outside the grid).
  double time_derivative(double t, Energy e) const;
  bool time_independent() const { return grid_.size() == 1; }

 private:
  double at_row(std::size_t k, Energy e) const;

  std::vector<double> grid_;
  Eigen::MatrixXd values_;
  Eigen::VectorXd tail_;
};

/// π_T(φ_T) − π_0(φ_0) − ∫ π_t(∂_tφ_t) dt + ∫ Σ Q(dt; ·)[φ(ε)+φ(ε*)−φ(ε')−φ(ε*')].
/// The π-integral uses the trapezoid rule on the path grid, with ∂_tφ taken at
/// each cell midpoint; the flow term is evaluated at the atoms.
double balance_residual(const MeasurePath& path, const FlowMeasure& flow, const TestFunction& phi);

/// Same residual for an integer-valued time-independent φ, in exact arithmetic.
Rational balance_residual_exact(const MeasurePath& path, const FlowMeasure& flow,
                                const std::vector<std::int64_t>& table, std::int64_t tail);

/// CSV: t,epsilon,mass (zero masses omitted).
void write_measure_path_csv(std::ostream& os, const MeasurePath& path);
/// CSV: t_bin_lo,t_bin_hi,e1,e2,e1p,e2p,mass.
void write_flow_csv(std::ostream& os, const FlowMeasure& flow);

}  // namespace kac

#endif  // KAC_EMPIRICS_HPP
