// Static cost H_e, dynamical cost J and the total rate I = H_e + J.

#ifndef KAC_LDP_HPP
#define KAC_LDP_HPP

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "kac/kinetics.hpp"
#include "kac/sampler.hpp"

namespace kac {

/// Non-negative cost or a tagged +∞ carrying the reason it is infinite.
class Cost {
 public:
  static Cost finite(double v) { return Cost(v, {}); }
  static Cost infinite(std::string witness) { return Cost(std::numeric_limits<double>::infinity(), std::move(witness)); }

  bool is_finite() const { return witness_.empty(); }
  double value() const { return value_; }
  const std::string& witness() const { return witness_; }

  friend Cost operator+(const Cost& a, const Cost& b) {
    if (!a.is_finite()) return a;
    if (!b.is_finite()) return b;
    return finite(a.value_ + b.value_);
  }

 private:
  Cost(double v, std::string w) : value_(v), witness_(std::move(w)) {}
  double value_;
  std::string witness_;
};

/// r log r - r + 1, with a series near r = 1.
double entropy_integrand(double r);

/// q^π(quad) = ½ π(ε) π(ε*) B summed over the ordered representatives of each canonical quad.
std::vector<QuadDensity> reference_flow_density(const KineticState& pi);
/// Σ_quads q^π = ½ Σ π(a) π(b) Σ_outcomes B(a, b, ·).
double reference_flow_total(const KineticState& pi);

/// Ent(π | m_e) + (γ* - γ_e)(e - Σ ε π), with the point-mass and γ* = ∞ clauses.
/// Throws std::invalid_argument when the mean of π exceeds e.
Cost static_cost(const KineticState& pi, const BaseMeasure& m, double e, double energy_tolerance = 1e-9);

using Diagnostics = std::vector<std::pair<std::string, double>>;

struct DynamicalCost {
  Cost j = Cost::finite(0.0);
  Diagnostics diagnostics;
};

/// ∫ Σ dQ^π (r log r - r + 1), trapezoid rule on the path grid.
DynamicalCost dynamical_cost(const KineticPath& path);

struct BarCostOptions {
  std::size_t points = 4001;  // odd, uniform in log(1+α)
  int depth = 20;             // α_max = α(t*(1 - 2^-depth)) when delta = 0
  double delta = 0.0;         // > 0 evaluates the regularized pair instead
  MbeOptions mbe;
};

struct BarCost {
  double first_term = 0.0;   // entropy part
  double second_term = 0.0;  // ∫ Σ q^f̄ dt
  double total = 0.0;
  double tail_bound = 0.0;   // bound on what the truncation at α_max leaves out
  double second_term_bound_form = 0.0;  // ½∫(Σ_{ε≥1} f̄)² dt, which dominates the second term
  double alpha_max = 0.0;
  double max_cutoff = 0.0;
};

/// J(f̄, Q̄) (or J(f̄^δ, Q̄^δ)) computed in α-time: the entropy part as an
/// α-integral with Simpson's rule on a log(1+α) grid, the exit part through dt = dα/α̇.
BarCost bar_cost_direct(const BaseMeasure& m, double e, double t_star, double horizon,
                        const BarCostOptions& opts = {});

struct RateBreakdown {
  Cost h_static = Cost::finite(0.0);
  Cost j_dynamic = Cost::finite(0.0);
  Cost total = Cost::finite(0.0);
  Diagnostics diagnostics;
};

RateBreakdown total_cost(const KineticState& pi0, const KineticPath& path, const BaseMeasure& m, double e);

/// {"H": x|"inf", "J": ..., "I": ..., "diagnostics": {...}}
std::string to_json(const RateBreakdown& r);

}  // namespace kac

#endif  // KAC_LDP_HPP
