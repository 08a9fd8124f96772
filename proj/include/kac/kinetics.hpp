// Deterministic kinetic equations: the discrete Boltzmann equation with kernel
// B, the modified equation with kernel B̃, and the evaporating pair (f̄, q̄)
// together with its δ-regularization.

#ifndef KAC_KINETICS_HPP
#define KAC_KINETICS_HPP

#include <functional>
#include <iosfwd>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "kac/empirics.hpp"
#include "kac/model.hpp"
#include "kac/sampler.hpp"

namespace kac {

/// Mass and energy pushed above the truncation level.
struct Leak {
  double mass = 0.0;
  double energy = 0.0;
};

/// Mass function on {0, ..., cutoff}. Stored sparse because the evaporating
/// solutions live on dyadic chains reaching levels near 2^20.
struct KineticState {
  Eigen::SparseVector<double> f;
  Leak leak;

  KineticState() = default;
  KineticState(Eigen::SparseVector<double> masses, Leak l) : f(std::move(masses)), leak(l) {}
  static KineticState from_dense(const Eigen::VectorXd& masses, Leak l = {});
  static KineticState delta(Energy level, Energy cutoff);

  Energy cutoff() const { return static_cast<Energy>(f.size()) - 1; }
  double mass(Energy e) const { return (e >= 0 && e <= cutoff()) ? f.coeff(static_cast<Eigen::Index>(e)) : 0.0; }
  double total_mass() const { return f.sum(); }
  double energy() const;
  /// Σ_ε f(ε) g(ε) over stored levels.
  double expect(const std::function<double(Energy)>& g) const;
  Eigen::VectorXd dense() const { return Eigen::VectorXd(f); }
};

/// Canonical quad with its density, ordered representatives summed.
struct QuadDensity {
  CollisionQuad quad;
  double density = 0.0;
};

/// q_t = multiplier · ½ f_t ⊗ f_t · kernel, summed over ordered representatives.
struct KernelFlux {
  KernelKind kind = KernelKind::Base;
  double multiplier = 1.0;
};

/// Flux density at one grid time: none, kernel form, or explicit atoms.
using FluxSlice = std::variant<std::monostate, KernelFlux, std::vector<QuadDensity>>;

/// States on a non-decreasing time grid. A repeated time marks a jump: the
/// first copy is the left limit, the second the right limit.
struct KineticPath {
  std::vector<double> grid;
  std::vector<KineticState> states;
  std::vector<FluxSlice> flux;  // empty, or one slice per grid time

  bool has_flux() const { return !flux.empty(); }
  std::size_t size() const { return grid.size(); }
};

/// Visits every canonical quad carrying positive density under the slice.
void for_each_flux_atom(const KineticState& state, const FluxSlice& slice,
                        const std::function<void(const CollisionQuad&, double)>& fn);

/// Right-hand side of the Boltzmann equation truncated at f.size() - 1, with
/// the mass and energy rates of outcomes landing above the cutoff.
struct BeRates {
  Eigen::VectorXd rhs;
  double leak_mass_rate = 0.0;
  double leak_energy_rate = 0.0;
};

BeRates be_rates(const Eigen::VectorXd& f);
inline Eigen::VectorXd be_rhs(const Eigen::VectorXd& f) { return be_rates(f).rhs; }

/// Smallest cutoff with a tail of the initial datum below 1e-16, doubled, and at least 8 × mean.
Energy default_be_cutoff(const BaseMeasure& m);
/// m tabulated on {0..cutoff}.
Eigen::VectorXd tabulate(const BaseMeasure& m, Energy cutoff);

/// RK4 with steps of at most dt, landing exactly on each record time. Throws
/// NumericalError if a mass falls below -1e-12.
KineticPath solve_be(const Eigen::VectorXd& f0, std::span<const double> record_times, double dt = 1e-3);

struct MbeOptions {
  /// Step in τ = log(1 + t).
  double dtau = 1e-3;
  /// Cutoff; 0 picks twice the next power of two above the support.
  Energy cutoff = 0;
  /// Double the cutoff until the final energy leak is below the tolerance.
  bool adaptive = true;
  double energy_leak_tolerance = 1e-6;
  Energy max_cutoff = Energy{1} << 40;
};

/// Modified Boltzmann equation. Odd levels follow f0/(1 + t f0); each even
/// level is driven by its half. Even levels are integrated as ξ = (1+t) f in
/// τ = log(1+t). Throws NumericalError when the cutoff cannot hold the energy.
KineticPath solve_mbe(const KineticState& f0, std::span<const double> record_times, const MbeOptions& opts = {});

/// Uniform grid in τ = log(1+t) on [0, t_max] with `points` points.
std::vector<double> log_time_grid(double t_max, std::size_t points);

struct EvaporationReport {
  bool level_bound_holds = true;   // f_t(ε) ≤ 2/(1+t), ε ≥ 1
  double worst_level_ratio = 0.0;  // max (1+t) f_t(ε) / 2
  double max_xi = 0.0;             // max (1+t) f_t(ε)
  double c_mass = 0.0;             // smallest c in Σ_{ε≥1} f ≤ c/√(1+t)
  double c_log = 0.0;              // smallest c in Σ_{ε≥1} f log ε ≤ c(1+log(1+t))/√(1+t)
  bool c_mass_stable = false;      // the last quarter of the grid does not raise c
  bool c_log_stable = false;
  bool zero_level_monotone = true;
};

EvaporationReport check_evaporation_bounds(const KineticPath& path);

/// Worst |E_n(t) - E_n(0) + ∫_0^t Σ_{2^{n-1} < ε ≤ 2^n} ε f_s² ds| over the grid, where E_n is the
/// energy on {0..2^n}. Needs a grid uniform in log(1+t) with an odd number of points (Simpson).
double dyadic_energy_residual(const KineticPath& path, int n);

struct BarGridOptions {
  std::size_t uniform_points = 64;   // on [0, t*/2]
  std::size_t points_per_halving = 8;
  int depth = 20;                    // last point before t* is t*(1 - 2^-depth)
  std::size_t tail_points = 16;      // on [t*, T] or [t*-δ, T]
  MbeOptions mbe;
};

/// Time grid for f̄: uniform on [0, t*/2], geometric towards t*, uniform after.
std::vector<double> bar_time_grid(double t_star, double horizon, const BarGridOptions& opts);

/// f̄_t = f_{α(t)} for t < t*, δ_0 afterwards; q̄_t = ½ f̄ f̄ α̇ B̃ before t*, 0 after.
KineticPath build_bar_path(const BaseMeasure& m, double e, double t_star, double horizon,
                           const BarGridOptions& opts = {});

/// f̄^δ: f̄ on [0, t*-δ), frozen at f̄_{t*-δ} afterwards; flux switched off at t*-δ.
KineticPath build_bar_path_delta(const BaseMeasure& m, double e, double t_star, double delta, double horizon,
                                 const BarGridOptions& opts = {});

/// f(ε) as a point mass or a truncated pmf (tail below 1e-17 dropped).
KineticState initial_state(const BaseMeasure& m);

/// Balance residual of a kinetic pair: trapezoid in t for both integrals.
double kinetic_balance_residual(const KineticPath& path, const TestFunction& phi);

/// ∫ Σ q_t(quad) F(t, quad) dt by the trapezoid rule on the path grid.
double flow_functional(const KineticPath& path, const std::function<double(double, const CollisionQuad&)>& fn);

/// CSV: t,epsilon,mass.
void write_kinetic_path_csv(std::ostream& os, const KineticPath& path);
/// CSV: t,e1,e2,e1p,e2p,density. Atoms below `floor` are left out; a reader
/// takes them as zero, which changes J by at most their total density.
void write_flux_csv(std::ostream& os, const KineticPath& path, double floor = 0.0);

/// Reads a path from the two CSV formats above; the flux stream may be null.
KineticPath read_kinetic_path_csv(std::istream& states, std::istream* flux);

}  // namespace kac

#endif  // KAC_KINETICS_HPP
