#include "kac/ldp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "kac/model.hpp"

namespace kac {

double entropy_integrand(double r) {
  if (!(r >= 0.0)) throw std::domain_error("flow ratio must be non-negative");
  if (r == 0.0) return 1.0;
  const double u = r - 1.0;
  if (std::abs(u) < 1e-4) return u * u * (0.5 - u * (1.0 / 6.0 - u * (1.0 / 12.0 - u / 20.0)));
  return r * std::log(r) - r + 1.0;
}

namespace {

double reference_quad_density(const KineticState& pi, const CollisionQuad& q) {
  if (!q.is_effective()) return 0.0;
  return 0.5 * pi.mass(q.in.lo) * pi.mass(q.in.hi) * q.multiplicity() * kernel_base(q);
}

std::vector<std::pair<Energy, double>> support_of(const KineticState& s) {
  std::vector<std::pair<Energy, double>> out;
  for (Eigen::SparseVector<double>::InnerIterator it(s.f); it; ++it) {
    if (it.value() > 0.0) out.emplace_back(it.index(), it.value());
  }
  return out;
}

// Σ_quads q(quad) (ε+ε*): the incoming pair energy carried by the flow.
double pair_energy_density(const KineticState& pi, const FluxSlice& slice) {
  if (std::holds_alternative<std::monostate>(slice)) return 0.0;
  if (const auto* kf = std::get_if<KernelFlux>(&slice); kf != nullptr && kf->kind == KernelKind::Base) {
    // pairwise, so the O(cutoff) outcomes per pair are never enumerated
    const auto s = support_of(pi);
    double acc = 0.0;
    for (std::size_t x = 0; x < s.size(); ++x) {
      acc += 0.5 * s[x].second * s[x].second * base_exit_rate(s[x].first, s[x].first) * 2.0 *
             static_cast<double>(s[x].first);
      for (std::size_t y = x + 1; y < s.size(); ++y) {
        acc += s[x].second * s[y].second * base_exit_rate(s[x].first, s[y].first) *
               static_cast<double>(s[x].first + s[y].first);
      }
    }
    return kf->multiplier * acc;
  }
  double acc = 0.0;
  for_each_flux_atom(pi, slice, [&](const CollisionQuad& q, double d) { acc += d * static_cast<double>(q.in.sum()); });
  return acc;
}

std::string describe(const CollisionQuad& q) {
  std::ostringstream os;
  os << "(" << q.in.lo << "," << q.in.hi << " -> " << q.out.lo << "," << q.out.hi << ")";
  return os.str();
}

}  // namespace

std::vector<QuadDensity> reference_flow_density(const KineticState& pi) {
  std::vector<QuadDensity> out;
  for_each_flux_atom(pi, KernelFlux{KernelKind::Base, 1.0},
                     [&](const CollisionQuad& q, double d) { out.push_back({q, d}); });
  return out;
}

double reference_flow_total(const KineticState& pi) {
  const auto s = support_of(pi);
  double acc = 0.0;
  for (std::size_t x = 0; x < s.size(); ++x) {
    acc += 0.5 * s[x].second * s[x].second * base_exit_rate(s[x].first, s[x].first);
    for (std::size_t y = x + 1; y < s.size(); ++y) {
      acc += s[x].second * s[y].second * base_exit_rate(s[x].first, s[y].first);
    }
  }
  return acc;
}

Cost static_cost(const KineticState& pi, const BaseMeasure& m, double e, double energy_tolerance) {
  const double mean = pi.energy();
  if (mean > e + energy_tolerance) {
    throw std::invalid_argument("initial profile has mean " + std::to_string(mean) + " above e = " + std::to_string(e));
  }
  if (m.is_degenerate()) {
    if (static_cast<double>(m.atom()) != e) throw std::invalid_argument("point mass base measure must sit at e");
    if (std::abs(pi.mass(m.atom()) - 1.0) <= 1e-12) return Cost::finite(0.0);
    return Cost::infinite("point-mass base: profile differs from the point mass at " + std::to_string(m.atom()));
  }
  const double gamma_e = gamma_for_mean(m, e);
  double ent = 0.0;
  for (const auto& [level, p] : support_of(pi)) {
    const double ref = tilted_pmf(m, gamma_e, level);
    if (ref <= 0.0) {
      return Cost::infinite("profile charges energy " + std::to_string(level) + " outside the support of m_e");
    }
    ent += p * std::log(p / ref);
  }
  ent = std::max(ent, 0.0);
  const double gap = e - mean;
  const double gamma_star = m.gamma_star();
  if (std::isinf(gamma_star)) {
    if (std::abs(gap) > energy_tolerance) {
      return Cost::infinite("energy deficit " + std::to_string(gap) + " with unbounded tilting radius");
    }
    return Cost::finite(ent);
  }
  return Cost::finite(ent + (gamma_star - gamma_e) * std::max(gap, 0.0));
}

DynamicalCost dynamical_cost(const KineticPath& path) {
  if (!path.has_flux()) throw std::invalid_argument("path carries no flux");
  DynamicalCost out;
  double max_leak = 0.0;
  Energy max_cutoff = 0;

  std::vector<double> j(path.size(), 0.0);
  std::vector<double> pair_energy(path.size(), 0.0);
  for (std::size_t k = 0; k < path.size(); ++k) {
    const KineticState& pi = path.states[k];
    max_leak = std::max(max_leak, pi.leak.energy);
    max_cutoff = std::max(max_cutoff, pi.cutoff());
    const double ref_total = reference_flow_total(pi);
    const FluxSlice& slice = path.flux[k];
    pair_energy[k] = pair_energy_density(pi, slice);

    if (std::holds_alternative<std::monostate>(slice)) {
      j[k] = ref_total;
      continue;
    }
    if (const auto* kf = std::get_if<KernelFlux>(&slice); kf != nullptr && kf->kind == KernelKind::Base) {
      // q = c q^π everywhere
      j[k] = ref_total * entropy_integrand(kf->multiplier);
      continue;
    }
    if (const auto* kf = std::get_if<KernelFlux>(&slice)) {
      // (ε,ε) -> (0,2ε): q^π = f²/(2ε+1) and r = c(2ε+1)/2, so no ratio of tiny numbers is formed
      double acc = ref_total;
      for (const auto& [level, v] : support_of(pi)) {
        if (level == 0) continue;
        const double width = 2.0 * static_cast<double>(level) + 1.0;
        acc += v * v / width * (entropy_integrand(kf->multiplier * width / 2.0) - 1.0);
      }
      j[k] = acc;
      continue;
    }
    // collect q per canonical quad, then compare with q^π atom by atom
    std::map<CollisionQuad, double> q;
    for_each_flux_atom(pi, slice, [&](const CollisionQuad& quad, double d) { q[quad] += d; });
    double acc = ref_total;
    for (const auto& [quad, density] : q) {
      const double ref = reference_quad_density(pi, quad);
      const bool charged = pi.mass(quad.in.lo) > 0.0 && pi.mass(quad.in.hi) > 0.0;
      if (ref <= 0.0 && charged && quad.is_effective()) continue;  // both sides underflow
      if (ref <= 0.0) {
        out.j = Cost::infinite("flow charges " + describe(quad) + " at t=" + std::to_string(path.grid[k]) +
                               " where the reference flow vanishes");
        out.diagnostics = {{"grid_points", static_cast<double>(path.size())}};
        return out;
      }
      acc += ref * (entropy_integrand(density / ref) - 1.0);
    }
    j[k] = acc;
  }

  double total = 0.0;
  double pair_energy_total = 0.0;
  for (std::size_t k = 1; k < path.size(); ++k) {
    const double dt = path.grid[k] - path.grid[k - 1];
    if (dt <= 0.0) continue;
    total += 0.5 * dt * (j[k - 1] + j[k]);
    pair_energy_total += 0.5 * dt * (pair_energy[k - 1] + pair_energy[k]);
  }
  out.j = Cost::finite(std::max(total, 0.0));
  out.diagnostics = {{"grid_points", static_cast<double>(path.size())},
                     {"max_cutoff", static_cast<double>(max_cutoff)},
                     {"max_energy_leak", max_leak},
                     {"pair_energy_flux", pair_energy_total}};
  return out;
}

BarCost bar_cost_direct(const BaseMeasure& m, double e, double t_star, double horizon, const BarCostOptions& opts) {
  if (std::abs(m.mean() - e) > 1e-12 * std::max(1.0, e)) throw std::invalid_argument("base measure mean differs from e");
  if (!(t_star > 0.0) || !(horizon > t_star)) throw std::invalid_argument("need 0 < t* < T");
  if (opts.points < 3 || opts.points % 2 == 0) throw std::invalid_argument("alpha grid needs an odd number of points");
  if (opts.delta < 0.0 || opts.delta >= t_star) throw std::invalid_argument("need 0 <= delta < t*");
  const bool regularized = opts.delta > 0.0;
  const double t_last = regularized ? t_star - opts.delta : t_star * (1.0 - std::exp2(-opts.depth));

  BarCost out;
  out.alpha_max = alpha(t_last, t_star);
  const std::vector<double> alphas = log_time_grid(out.alpha_max, opts.points);
  const KineticPath path = solve_mbe(initial_state(m), alphas, opts.mbe);

  const double h = std::log1p(out.alpha_max) / static_cast<double>(opts.points - 1);
  std::vector<double> first(opts.points);
  std::vector<double> second(opts.points);
  std::vector<double> bound(opts.points);
  for (std::size_t k = 0; k < opts.points; ++k) {
    const double a = alphas[k];
    const KineticState& f = path.states[k];
    const double log_rate = 2.0 * std::log1p(a / t_star);
    double ent = 0.0;
    double live = 0.0;
    for (Eigen::SparseVector<double>::InnerIterator it(f.f); it; ++it) {
      if (it.index() == 0) continue;
      const double v = it.value();
      live += v;
      ent += 0.5 * v * v * (log_rate + std::log((2.0 * static_cast<double>(it.index()) + 1.0) / 2.0) - 1.0);
    }
    const double rate = (1.0 + a / t_star) * (1.0 + a / t_star);
    // dα = (1+α) dτ; dt = dα / α̇
    first[k] = ent * (1.0 + a);
    second[k] = reference_flow_total(f) / rate * (1.0 + a);
    bound[k] = 0.5 * live * live / rate * (1.0 + a);
    out.max_cutoff = std::max(out.max_cutoff, static_cast<double>(f.cutoff()));
  }
  auto simpson = [h](const std::vector<double>& v) {
    double acc = 0.0;
    for (std::size_t k = 2; k < v.size(); k += 2) acc += h / 3.0 * (v[k - 2] + 4.0 * v[k - 1] + v[k]);
    return acc;
  };
  out.first_term = simpson(first);
  out.second_term = simpson(second);
  out.second_term_bound_form = simpson(bound);

  if (regularized) {
    const double frozen = reference_flow_total(path.states.back()) * (horizon - t_last);
    out.second_term += frozen;
    const double live = path.states.back().total_mass() - path.states.back().mass(0);
    out.second_term_bound_form += 0.5 * live * live * (horizon - t_last);
  } else {
    // entropy tail beyond α_max from the decay (1+log(1+α))/(1+α)^{3/2}
    double c = 0.0;
    for (std::size_t k = 0; k < opts.points; ++k) {
      const double a = alphas[k];
      if (a < out.alpha_max / 4.0) continue;
      const double integrand = first[k] / (1.0 + a);
      c = std::max(c, std::abs(integrand) * std::pow(1.0 + a, 1.5) / (1.0 + std::log1p(a)));
    }
    const double u = 1.0 + out.alpha_max;
    out.tail_bound = c * 2.0 * (3.0 + std::log(u)) / std::sqrt(u);
    // exit part on [t_last, t*): the exit rate is at most ½
    out.tail_bound += 0.5 * (t_star - t_last);
  }
  out.total = out.first_term + out.second_term;
  return out;
}

RateBreakdown total_cost(const KineticState& pi0, const KineticPath& path, const BaseMeasure& m, double e) {
  RateBreakdown r;
  r.h_static = static_cost(pi0, m, e);
  DynamicalCost d = dynamical_cost(path);
  r.j_dynamic = d.j;
  r.total = r.h_static + r.j_dynamic;
  r.diagnostics = std::move(d.diagnostics);
  return r;
}

std::string to_json(const RateBreakdown& r) {
  auto cost = [](const Cost& c) -> nlohmann::ordered_json {
    if (c.is_finite()) return c.value();
    return "inf";
  };
  nlohmann::ordered_json j;
  j["H"] = cost(r.h_static);
  j["J"] = cost(r.j_dynamic);
  j["I"] = cost(r.total);
  nlohmann::ordered_json diag = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.diagnostics) diag[k] = v;
  if (!r.h_static.is_finite()) diag["H_witness"] = r.h_static.witness();
  if (!r.j_dynamic.is_finite()) diag["J_witness"] = r.j_dynamic.witness();
  j["diagnostics"] = diag;
  return j.dump(2);
}

}  // namespace kac
