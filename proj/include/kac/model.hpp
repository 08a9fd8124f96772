// Configurations, the pair collision map and the three collision kernels of
// the discrete-energy Kac walk.

#ifndef KAC_MODEL_HPP
#define KAC_MODEL_HPP

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <boost/rational.hpp>

namespace kac {

using Energy = std::int64_t;
using Index = std::size_t;
using Rational = boost::rational<std::int64_t>;

/// N non-negative integer energies with their cached total.
class Configuration {
 public:
  Configuration() = default;
  explicit Configuration(std::vector<Energy> energies);

  std::size_t size() const { return energies_.size(); }
  Energy total() const { return total_; }
  Energy operator[](Index i) const { return energies_[i]; }
  std::span<const Energy> energies() const { return energies_; }
  Energy max_energy() const;

  /// Overwrite the energies of particles i and j. The pair sum must be preserved.
  void set_pair(Index i, Index j, Energy ei, Energy ej);

  friend bool operator==(const Configuration&, const Configuration&) = default;

 private:
  std::vector<Energy> energies_;
  Energy total_ = 0;
};

/// Unordered pair of energies, stored ascending.
struct EnergyPair {
  Energy lo = 0;
  Energy hi = 0;

  EnergyPair() = default;
  EnergyPair(Energy a, Energy b) : lo(a < b ? a : b), hi(a < b ? b : a) {}

  Energy sum() const { return lo + hi; }
  /// Number of ordered pairs represented.
  int multiplicity() const { return lo == hi ? 1 : 2; }

  friend bool operator==(const EnergyPair&, const EnergyPair&) = default;
  friend auto operator<=>(const EnergyPair&, const EnergyPair&) = default;
};

/// (ε, ε*) -> (ε', ε*') with both pairs in canonical order.
struct CollisionQuad {
  EnergyPair in;
  EnergyPair out;

  CollisionQuad() = default;
  CollisionQuad(EnergyPair in_pair, EnergyPair out_pair) : in(in_pair), out(out_pair) {}
  CollisionQuad(Energy e, Energy e_star, Energy e_prime, Energy e_star_prime)
      : in(e, e_star), out(e_prime, e_star_prime) {}

  bool conserves_energy() const { return in.sum() == out.sum(); }
  bool is_identity() const { return in == out; }
  /// On the support set {ε+ε* = ε'+ε*'} minus the identity.
  bool is_effective() const { return conserves_energy() && !is_identity(); }
  /// Number of ordered quadruples this canonical quad stands for.
  int multiplicity() const { return in.multiplicity() * out.multiplicity(); }
  CollisionQuad reversed() const { return {out, in}; }

  friend bool operator==(const CollisionQuad&, const CollisionQuad&) = default;
  friend auto operator<=>(const CollisionQuad&, const CollisionQuad&) = default;
};

/// T_ij^ℓ: particle i receives ℓ, particle j the remainder of the pair energy.
Configuration collision_outcome(const Configuration& cfg, Index i, Index j, Energy ell);

// Kernel values are per ordered outcome; every ordered representative of a
// canonical quad has the same value.

Rational kernel_base_exact(const CollisionQuad& q);
double kernel_base(const CollisionQuad& q);

Rational kernel_modified_exact(const CollisionQuad& q);
double kernel_modified(const CollisionQuad& q);

/// Sum over ordered outcomes of B(a, b, ·, ·): (outcomes that change the pair)/(a+b+1).
Rational base_exit_rate_exact(Energy a, Energy b);
double base_exit_rate(Energy a, Energy b);

/// Sum over ordered outcomes of B̃(a, b, ·, ·): 1 when a = b ≥ 1, else 0.
double modified_exit_rate(Energy a, Energy b);

/// Time change α(t) = t / (1 - t/t*) mapping [0, t*) onto [0, ∞).
double alpha(double t, double t_star);
double alpha_inv(double s, double t_star);
double alpha_dot(double t, double t_star);

/// B̄^δ_t = α̇(t) B̃ on [0, t* - δ), zero afterwards.
double kernel_tilted(double t, const CollisionQuad& q, double t_star, double delta);

enum class KernelKind { Base, Modified, TiltedBarDelta };

struct KernelSpec {
  KernelKind kind = KernelKind::Base;
  double t_star = 0.0;
  double delta = 0.0;

  static KernelSpec base() { return {}; }
  static KernelSpec modified() { return {KernelKind::Modified, 0.0, 0.0}; }
  static KernelSpec tilted(double t_star, double delta);

  bool time_homogeneous() const { return kind != KernelKind::TiltedBarDelta; }
  double rate(double t, const CollisionQuad& q) const;
  /// Time multiplier of the kernel: α̇(t) on [0, t*-δ) for the tilted kernel, 1 otherwise.
  double time_factor(double t) const;
  std::string to_string() const;
};

}  // namespace kac

#endif  // KAC_MODEL_HPP
