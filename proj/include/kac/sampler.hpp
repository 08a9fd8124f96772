// Base measures on the energy lattice, exponential tilting and sampling of the
// microcanonical initial law m^{⊗N}( · | Σ ε_i = ⌊N e⌋ ).

#ifndef KAC_SAMPLER_HPP
#define KAC_SAMPLER_HPP

#include <string>
#include <string_view>
#include <vector>

#include "kac/model.hpp"
#include "kac/rng.hpp"

namespace kac {

class BaseMeasure {
 public:
  enum class Family { PointMass, Geometric, FiniteSupport };

  static BaseMeasure point_mass(Energy e0);
  static BaseMeasure geometric(double p);
  /// Weights on {0, ..., K}; normalized on construction.
  static BaseMeasure finite_support(std::vector<double> weights);
  /// "point:e0", "geom:p" or "finite:w0,w1,...,wK".
  static BaseMeasure parse(std::string_view spec);

  Family family() const { return family_; }
  std::string spec() const;
  double pmf(Energy e) const;
  double mean() const;
  /// Radius of convergence of Z_γ; +inf for point masses and finite supports.
  double gamma_star() const;
  /// True when the measure is concentrated on one energy.
  bool is_degenerate() const;
  Energy atom() const;  // only for degenerate measures
  Energy support_min() const;
  /// +inf encoded as -1 for the geometric family.
  Energy support_max() const;
  double geometric_p() const { return p_; }
  const std::vector<double>& weights() const { return weights_; }

 private:
  Family family_ = Family::PointMass;
  Energy e0_ = 1;
  double p_ = 0.5;
  std::vector<double> weights_;
};

double partition_function(const BaseMeasure& m, double gamma);
double tilted_pmf(const BaseMeasure& m, double gamma, Energy e);
double tilted_mean(const BaseMeasure& m, double gamma);
double tilted_variance(const BaseMeasure& m, double gamma);

/// γ_e with mean(m_γ) = e, by bisection on the increasing mean map (|Δmean| ≤ 1e-12).
/// Returns 0 for degenerate measures, whose only admissible mean is the atom.
double gamma_for_mean(const BaseMeasure& m, double e);

/// ⌊N e⌋, robust to e carrying representation error just below an integer multiple.
Energy microcanonical_total(std::size_t n, double e);

/// One draw from m^{⊗N} conditioned on total energy ⌊N e⌋, by tilting to the
/// target mean and rejecting until the sum matches. Throws ResourceError when
/// the attempt cap 1000·√N·max(1, σ) is exceeded.
Configuration sample_microcanonical(const BaseMeasure& m, std::size_t n, double e, Rng& rng);

}  // namespace kac

#endif  // KAC_SAMPLER_HPP
