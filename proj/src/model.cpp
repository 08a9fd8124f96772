#include "kac/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace kac {

Configuration::Configuration(std::vector<Energy> energies) : energies_(std::move(energies)) {
  if (energies_.size() < 2) {
    throw std::invalid_argument("configuration needs at least two particles");
  }
  for (Energy e : energies_) {
    if (e < 0) throw std::invalid_argument("energies must be non-negative");
  }
  total_ = std::accumulate(energies_.begin(), energies_.end(), Energy{0});
}

Energy Configuration::max_energy() const {
  return *std::max_element(energies_.begin(), energies_.end());
}

void Configuration::set_pair(Index i, Index j, Energy ei, Energy ej) {
  if (i == j || i >= size() || j >= size()) {
    throw std::invalid_argument("set_pair: bad particle indices");
  }
  if (ei < 0 || ej < 0 || ei + ej != energies_[i] + energies_[j]) {
    throw std::invalid_argument("set_pair: pair energy not conserved");
  }
  energies_[i] = ei;
  energies_[j] = ej;
}

Configuration collision_outcome(const Configuration& cfg, Index i, Index j, Energy ell) {
  if (i == j || i >= cfg.size() || j >= cfg.size()) {
    throw std::invalid_argument("collision_outcome: need distinct valid indices");
  }
  const Energy s = cfg[i] + cfg[j];
  if (ell < 0 || ell > s) {
    throw std::invalid_argument("collision_outcome: ell outside [0, e_i + e_j]");
  }
  Configuration out = cfg;
  out.set_pair(i, j, ell, s - ell);
  return out;
}

Rational kernel_base_exact(const CollisionQuad& q) {
  if (!q.is_effective()) return Rational(0);
  return Rational(1, q.in.sum() + 1);
}

double kernel_base(const CollisionQuad& q) {
  return boost::rational_cast<double>(kernel_base_exact(q));
}

Rational kernel_modified_exact(const CollisionQuad& q) {
  if (!q.is_effective() || q.in.lo != q.in.hi) return Rational(0);
  // Exactly one of the two outgoing energies carries the whole pair energy.
  const Energy s = q.in.sum();
  int hits = (q.out.lo == s) + (q.out.hi == s);
  return Rational(hits, 2);
}

double kernel_modified(const CollisionQuad& q) {
  return boost::rational_cast<double>(kernel_modified_exact(q));
}

Rational base_exit_rate_exact(Energy a, Energy b) {
  const Energy s = a + b;
  const Energy unchanged = (a == b) ? 1 : 2;
  return Rational(s + 1 - unchanged, s + 1);
}

double base_exit_rate(Energy a, Energy b) {
  const Energy s = a + b;
  const Energy unchanged = (a == b) ? 1 : 2;
  return static_cast<double>(s + 1 - unchanged) / static_cast<double>(s + 1);
}

double modified_exit_rate(Energy a, Energy b) { return (a == b && a >= 1) ? 1.0 : 0.0; }

namespace {
void check_t_star(double t_star) {
  if (!(t_star > 0.0)) throw std::domain_error("t_star must be positive");
}
}  // namespace

double alpha(double t, double t_star) {
  check_t_star(t_star);
  if (t < 0.0 || t >= t_star) throw std::domain_error("alpha: t outside [0, t_star)");
  return t / (1.0 - t / t_star);
}

double alpha_inv(double s, double t_star) {
  check_t_star(t_star);
  if (s < 0.0) throw std::domain_error("alpha_inv: negative argument");
  return s / (1.0 + s / t_star);
}

double alpha_dot(double t, double t_star) {
  check_t_star(t_star);
  if (t < 0.0 || t >= t_star) throw std::domain_error("alpha_dot: t outside [0, t_star)");
  const double u = 1.0 - t / t_star;
  return 1.0 / (u * u);
}

double kernel_tilted(double t, const CollisionQuad& q, double t_star, double delta) {
  if (t >= t_star - delta) return 0.0;
  return alpha_dot(t, t_star) * kernel_modified(q);
}

KernelSpec KernelSpec::tilted(double t_star, double delta) {
  if (!(t_star > 0.0) || !(delta > 0.0) || !(delta < t_star)) {
    throw std::invalid_argument("tilted kernel needs 0 < delta < t_star");
  }
  return {KernelKind::TiltedBarDelta, t_star, delta};
}

double KernelSpec::time_factor(double t) const {
  if (kind != KernelKind::TiltedBarDelta) return 1.0;
  if (t >= t_star - delta) return 0.0;
  return alpha_dot(t, t_star);
}

double KernelSpec::rate(double t, const CollisionQuad& q) const {
  switch (kind) {
    case KernelKind::Base:
      return kernel_base(q);
    case KernelKind::Modified:
      return kernel_modified(q);
    case KernelKind::TiltedBarDelta:
      return kernel_tilted(t, q, t_star, delta);
  }
  return 0.0;
}

std::string KernelSpec::to_string() const {
  switch (kind) {
    case KernelKind::Base:
      return "base";
    case KernelKind::Modified:
      return "modified";
    case KernelKind::TiltedBarDelta: {
      std::ostringstream os;
      os.precision(17);
      os << "tilted:" << t_star << "," << delta;
      return os.str();
    }
  }
  return "unknown";
}

}  // namespace kac
