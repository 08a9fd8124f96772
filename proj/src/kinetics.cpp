#include "kac/kinetics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "kac/errors.hpp"

namespace kac {

KineticState KineticState::from_dense(const Eigen::VectorXd& masses, Leak l) {
  return KineticState(masses.sparseView(), l);
}

KineticState KineticState::delta(Energy level, Energy cutoff) {
  if (level < 0 || level > cutoff) throw std::invalid_argument("point mass outside the truncated lattice");
  Eigen::SparseVector<double> f(cutoff + 1);
  f.insert(level) = 1.0;
  return KineticState(std::move(f), {});
}

double KineticState::energy() const {
  double acc = 0.0;
  for (Eigen::SparseVector<double>::InnerIterator it(f); it; ++it) acc += static_cast<double>(it.index()) * it.value();
  return acc;
}

double KineticState::expect(const std::function<double(Energy)>& g) const {
  double acc = 0.0;
  for (Eigen::SparseVector<double>::InnerIterator it(f); it; ++it) acc += it.value() * g(it.index());
  return acc;
}

void for_each_flux_atom(const KineticState& state, const FluxSlice& slice,
                        const std::function<void(const CollisionQuad&, double)>& fn) {
  if (const auto* atoms = std::get_if<std::vector<QuadDensity>>(&slice)) {
    for (const QuadDensity& a : *atoms) {
      if (a.density > 0.0) fn(a.quad, a.density);
    }
    return;
  }
  const auto* kf = std::get_if<KernelFlux>(&slice);
  if (kf == nullptr || kf->multiplier == 0.0) return;

  std::vector<std::pair<Energy, double>> support;
  for (Eigen::SparseVector<double>::InnerIterator it(state.f); it; ++it) {
    if (it.value() > 0.0) support.emplace_back(it.index(), it.value());
  }

  if (kf->kind == KernelKind::Base) {
    for (std::size_t x = 0; x < support.size(); ++x) {
      for (std::size_t y = x; y < support.size(); ++y) {
        const auto [a, fa] = support[x];
        const auto [b, fb] = support[y];
        const EnergyPair in(a, b);
        const Energy s = a + b;
        const double w = kf->multiplier * 0.5 * fa * fb * in.multiplicity() / static_cast<double>(s + 1);
        for (Energy l = 0; 2 * l <= s; ++l) {
          const EnergyPair out(l, s - l);
          if (out == in) continue;
          fn({in, out}, w * out.multiplicity());
        }
      }
    }
    return;
  }
  // B̃: (ε, ε) -> (0, 2ε) with total rate 1 per unordered outcome
  for (const auto& [a, fa] : support) {
    if (a == 0) continue;
    fn({EnergyPair(a, a), EnergyPair(0, 2 * a)}, kf->multiplier * 0.5 * fa * fa);
  }
}

BeRates be_rates(const Eigen::VectorXd& f) {
  const Eigen::Index k = f.size() - 1;
  if (k < 0) throw std::invalid_argument("empty kinetic state");
  // pair-sum weights C(s) = Σ_{a+b=s} f(a) f(b) on 0..2k
  Eigen::VectorXd c = Eigen::VectorXd::Zero(2 * k + 1);
  for (Eigen::Index a = 0; a <= k; ++a) {
    if (f(a) == 0.0) continue;
    c.segment(a, k + 1) += f(a) * f;
  }
  // gain at ε collects C(s)/(s+1) for every s ≥ ε: suffix sums
  Eigen::VectorXd gain(2 * k + 1);
  double running = 0.0;
  for (Eigen::Index s = 2 * k; s >= 0; --s) {
    running += c(s) / static_cast<double>(s + 1);
    gain(s) = running;
  }
  BeRates r;
  const double m = f.sum();
  r.rhs = gain.head(k + 1) - m * f;
  for (Eigen::Index e = k + 1; e <= 2 * k; ++e) {
    r.leak_mass_rate += gain(e);
    r.leak_energy_rate += static_cast<double>(e) * gain(e);
  }
  return r;
}

KineticState initial_state(const BaseMeasure& m) {
  if (m.is_degenerate()) return KineticState::delta(m.atom(), m.atom());
  Energy top = m.support_max();
  if (top < 0) {
    top = static_cast<Energy>(std::ceil(std::log(1e-17) / std::log(1.0 - m.geometric_p())));
  }
  Eigen::VectorXd f(top + 1);
  for (Energy e = 0; e <= top; ++e) f(e) = m.pmf(e);
  return KineticState::from_dense(f);
}

Eigen::VectorXd tabulate(const BaseMeasure& m, Energy cutoff) {
  Eigen::VectorXd f(cutoff + 1);
  for (Energy e = 0; e <= cutoff; ++e) f(e) = m.pmf(e);
  return f;
}

Energy default_be_cutoff(const BaseMeasure& m) {
  // the flow relaxes towards the geometric law with the same mean
  const double mean = std::max(m.mean(), 1e-3);
  const double ratio = mean / (1.0 + mean);
  auto stationary_tail = static_cast<Energy>(std::ceil(std::log(1e-16) / std::log(ratio)));
  Energy top = initial_state(m).cutoff();
  return std::max<Energy>({2 * stationary_tail, 2 * top, 8 * static_cast<Energy>(std::ceil(mean)), 16});
}

namespace {

void check_record_times(std::span<const double> times) {
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!(times[k] >= 0.0) || !std::isfinite(times[k])) throw std::invalid_argument("record times must be finite and >= 0");
    if (k > 0 && times[k] < times[k - 1]) throw std::invalid_argument("record times must be non-decreasing");
  }
}

}  // namespace

KineticPath solve_be(const Eigen::VectorXd& f0, std::span<const double> record_times, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  check_record_times(record_times);
  if ((f0.array() < 0.0).any()) throw std::invalid_argument("initial masses must be non-negative");

  const Eigen::Index k = f0.size();
  Eigen::VectorXd y(k + 2);
  y << f0, 0.0, 0.0;

  auto deriv = [k](const Eigen::VectorXd& v) {
    BeRates r = be_rates(v.head(k));
    Eigen::VectorXd d(k + 2);
    d << r.rhs, r.leak_mass_rate, r.leak_energy_rate;
    return d;
  };

  KineticPath path;
  double t = 0.0;
  for (double target : record_times) {
    const double span = target - t;
    if (span > 0.0) {
      const auto steps = static_cast<long>(std::ceil(span / dt - 1e-9));
      const double h = span / static_cast<double>(steps);
      for (long s = 0; s < steps; ++s) {
        const Eigen::VectorXd k1 = deriv(y);
        const Eigen::VectorXd k2 = deriv(y + 0.5 * h * k1);
        const Eigen::VectorXd k3 = deriv(y + 0.5 * h * k2);
        const Eigen::VectorXd k4 = deriv(y + h * k3);
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        const double low = y.head(k).minCoeff();
        if (low < -1e-12) {
          throw NumericalError("Boltzmann step produced mass " + std::to_string(low) + " at t=" +
                               std::to_string(t + static_cast<double>(s + 1) * h) + "; reduce dt");
        }
      }
      t = target;
    }
    path.grid.push_back(target);
    path.states.push_back(KineticState::from_dense(y.head(k).cwiseMax(0.0), {y(k), y(k + 1)}));
    path.flux.emplace_back(KernelFlux{KernelKind::Base, 1.0});
  }
  return path;
}

namespace {

// One dyadic chain o, 2o, 4o, ... ≤ cutoff; the odd root is solved in closed form.
struct Chain {
  Energy root;
  double root_mass;
  std::size_t offset;  // first even level in the state vector
  std::size_t length;  // number of even levels
};

struct MbeRun {
  KineticPath path;
  double final_energy_leak = 0.0;
};

MbeRun run_mbe(const KineticState& f0, std::span<const double> record_times, Energy cutoff, double dtau) {
  std::map<Energy, bool> roots;
  for (Eigen::SparseVector<double>::InnerIterator it(f0.f); it; ++it) {
    const Energy e = it.index();
    if (e >= 1 && it.value() != 0.0) roots[e >> std::countr_zero(static_cast<std::uint64_t>(e))] = true;
  }

  std::vector<Chain> chains;
  std::vector<Energy> levels;  // even level of each state slot
  std::vector<double> init;
  for (const auto& [o, unused] : roots) {
    Chain c{o, f0.mass(o), levels.size(), 0};
    for (Energy l = 2 * o; l <= cutoff; l *= 2) {
      levels.push_back(l);
      init.push_back(f0.mass(l));
      ++c.length;
    }
    chains.push_back(c);
  }
  const std::size_t ne = levels.size();
  // slots: even ξ values, then f(0), leaked mass, leaked energy
  Eigen::VectorXd y(ne + 3);
  for (std::size_t s = 0; s < ne; ++s) y(s) = init[s];
  y(ne) = f0.mass(0);
  y(ne + 1) = f0.leak.mass;
  y(ne + 2) = f0.leak.energy;

  auto root_xi = [](double m0, double t) { return (1.0 + t) * m0 / (1.0 + t * m0); };
  auto leaks = [cutoff](Energy level) { return 2 * level > cutoff; };

  auto deriv = [&](double tau, const Eigen::VectorXd& v) {
    const double t = std::expm1(tau);
    const double damp = std::exp(-tau);
    Eigen::VectorXd d = Eigen::VectorXd::Zero(ne + 3);
    double sq_sum = 0.0;
    double leak_mass = 0.0;
    double leak_energy = 0.0;
    for (const Chain& c : chains) {
      double prev = root_xi(c.root_mass, t);
      sq_sum += prev * prev;
      if (leaks(c.root)) {
        leak_mass += 0.5 * prev * prev;
        leak_energy += static_cast<double>(c.root) * prev * prev;
      }
      for (std::size_t s = c.offset; s < c.offset + c.length; ++s) {
        const double xi = v(s);
        d(s) = xi - xi * xi + 0.5 * prev * prev;
        sq_sum += xi * xi;
        if (leaks(levels[s])) {
          leak_mass += 0.5 * xi * xi;
          leak_energy += static_cast<double>(levels[s]) * xi * xi;
        }
        prev = xi;
      }
    }
    d(ne) = 0.5 * damp * sq_sum;
    d(ne + 1) = damp * leak_mass;
    d(ne + 2) = damp * leak_energy;
    return d;
  };

  auto snapshot = [&](double t) {
    std::vector<std::pair<Energy, double>> entries;
    entries.emplace_back(0, y(ne));
    for (const Chain& c : chains) {
      entries.emplace_back(c.root, c.root_mass / (1.0 + t * c.root_mass));
      for (std::size_t s = c.offset; s < c.offset + c.length; ++s) {
        entries.emplace_back(levels[s], std::max(0.0, y(s)) / (1.0 + t));
      }
    }
    std::sort(entries.begin(), entries.end());
    Eigen::SparseVector<double> f(cutoff + 1);
    f.reserve(static_cast<Eigen::Index>(entries.size()));
    for (const auto& [e, v] : entries) {
      if (v != 0.0) f.insert(e) = v;
    }
    return KineticState(std::move(f), {y(ne + 1), y(ne + 2)});
  };

  MbeRun run;
  double tau = 0.0;
  for (double target : record_times) {
    const double tau_target = std::log1p(target);
    const double span = tau_target - tau;
    if (span > 0.0) {
      const auto steps = static_cast<long>(std::ceil(span / dtau - 1e-9));
      const double h = span / static_cast<double>(steps);
      for (long s = 0; s < steps; ++s) {
        const double t0 = tau + static_cast<double>(s) * h;
        const Eigen::VectorXd k1 = deriv(t0, y);
        const Eigen::VectorXd k2 = deriv(t0 + 0.5 * h, y + 0.5 * h * k1);
        const Eigen::VectorXd k3 = deriv(t0 + 0.5 * h, y + 0.5 * h * k2);
        const Eigen::VectorXd k4 = deriv(t0 + h, y + h * k3);
        y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      if (!y.allFinite()) throw NumericalError("modified Boltzmann integration diverged");
      tau = tau_target;
    }
    run.path.grid.push_back(target);
    run.path.states.push_back(snapshot(target));
    run.path.flux.emplace_back(KernelFlux{KernelKind::Modified, 1.0});
  }
  run.final_energy_leak = y(ne + 2) - f0.leak.energy;
  return run;
}

Energy required_cutoff_estimate(Energy support, double t) {
  // the front of a dyadic chain sits near level (support · t / 4); allow a few octaves beyond it
  const double front = static_cast<double>(std::max<Energy>(support, 1)) * std::max(1.0, t);
  return Energy{1} << std::min(62, static_cast<int>(std::ceil(std::log2(front))) + 4);
}

}  // namespace

KineticPath solve_mbe(const KineticState& f0, std::span<const double> record_times, const MbeOptions& opts) {
  check_record_times(record_times);
  if (!(opts.dtau > 0.0)) throw std::invalid_argument("dtau must be positive");
  Energy support = 0;
  for (Eigen::SparseVector<double>::InnerIterator it(f0.f); it; ++it) {
    if (it.value() < 0.0) throw std::invalid_argument("initial masses must be non-negative");
    if (it.value() > 0.0) support = std::max<Energy>(support, it.index());
  }
  Energy cutoff = opts.cutoff;
  if (cutoff == 0) cutoff = 2 * static_cast<Energy>(std::bit_ceil(static_cast<std::uint64_t>(std::max<Energy>(support, 1))));
  if (cutoff < support) throw std::invalid_argument("cutoff below the support of the initial datum");
  const double t_end = record_times.empty() ? 0.0 : record_times.back();

  for (;;) {
    MbeRun run = run_mbe(f0, record_times, cutoff, opts.dtau);
    if (run.final_energy_leak < opts.energy_leak_tolerance) return std::move(run.path);
    if (!opts.adaptive || 2 * cutoff > opts.max_cutoff) {
      throw NumericalError("cutoff " + std::to_string(cutoff) + " leaks energy " +
                           std::to_string(run.final_energy_leak) + " by t=" + std::to_string(t_end) +
                           "; a cutoff near " + std::to_string(required_cutoff_estimate(support, t_end)) +
                           " is needed");
    }
    cutoff *= 2;
  }
}

std::vector<double> log_time_grid(double t_max, std::size_t points) {
  if (points < 2 || !(t_max > 0.0)) throw std::invalid_argument("log grid needs t_max > 0 and two points");
  std::vector<double> g(points);
  const double tau_max = std::log1p(t_max);
  for (std::size_t k = 0; k < points; ++k) {
    g[k] = std::expm1(tau_max * static_cast<double>(k) / static_cast<double>(points - 1));
  }
  g.back() = t_max;
  return g;
}

EvaporationReport check_evaporation_bounds(const KineticPath& path) {
  EvaporationReport r;
  const std::size_t n = path.size();
  double c_mass_early = 0.0;
  double c_log_early = 0.0;
  double c_mass_late = 0.0;
  double c_log_late = 0.0;
  double prev_zero = -1.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double t = path.grid[k];
    const KineticState& s = path.states[k];
    double mass = 0.0;
    double logs = 0.0;
    for (Eigen::SparseVector<double>::InnerIterator it(s.f); it; ++it) {
      if (it.index() == 0) continue;
      const double xi = (1.0 + t) * it.value();
      r.max_xi = std::max(r.max_xi, xi);
      r.worst_level_ratio = std::max(r.worst_level_ratio, xi / 2.0);
      mass += it.value();
      logs += it.value() * std::log(static_cast<double>(it.index()));
    }
    const double root = std::sqrt(1.0 + t);
    const double cm = mass * root;
    const double cl = logs * root / (1.0 + std::log1p(t));
    if (4 * k < 3 * n) {
      c_mass_early = std::max(c_mass_early, cm);
      c_log_early = std::max(c_log_early, cl);
    } else {
      c_mass_late = std::max(c_mass_late, cm);
      c_log_late = std::max(c_log_late, cl);
    }
    const double zero = s.mass(0);
    if (zero < prev_zero) r.zero_level_monotone = false;
    prev_zero = zero;
  }
  r.level_bound_holds = r.worst_level_ratio <= 1.0;
  r.c_mass = std::max(c_mass_early, c_mass_late);
  r.c_log = std::max(c_log_early, c_log_late);
  r.c_mass_stable = c_mass_late <= c_mass_early;
  r.c_log_stable = c_log_late <= c_log_early;
  return r;
}

double dyadic_energy_residual(const KineticPath& path, int n) {
  const std::size_t count = path.size();
  if (count < 3 || count % 2 == 0) throw std::invalid_argument("Simpson quadrature needs an odd number of points");
  std::vector<double> tau(count);
  for (std::size_t k = 0; k < count; ++k) tau[k] = std::log1p(path.grid[k]);
  const double h = tau[1] - tau[0];
  for (std::size_t k = 1; k < count; ++k) {
    if (std::abs((tau[k] - tau[k - 1]) - h) > 1e-9 * std::max(1.0, h)) {
      throw std::invalid_argument("grid must be uniform in log(1+t)");
    }
  }
  const Energy top = Energy{1} << n;
  const Energy bottom = n == 0 ? 0 : top / 2;
  auto block_energy = [&](std::size_t k) {
    double acc = 0.0;
    for (Eigen::SparseVector<double>::InnerIterator it(path.states[k].f); it; ++it) {
      if (it.index() <= top) acc += static_cast<double>(it.index()) * it.value();
    }
    return acc;
  };
  // ∫ Σ ε f² dt written in τ: the integrand picks up a factor (1+t)
  auto loss = [&](std::size_t k) {
    double acc = 0.0;
    for (Eigen::SparseVector<double>::InnerIterator it(path.states[k].f); it; ++it) {
      if (it.index() > bottom && it.index() <= top) acc += static_cast<double>(it.index()) * it.value() * it.value();
    }
    return acc * (1.0 + path.grid[k]);
  };
  const double e0 = block_energy(0);
  double integral = 0.0;
  double worst = 0.0;
  for (std::size_t k = 2; k < count; k += 2) {
    integral += h / 3.0 * (loss(k - 2) + 4.0 * loss(k - 1) + loss(k));
    worst = std::max(worst, std::abs(block_energy(k) - e0 + integral));
  }
  return worst;
}

std::vector<double> bar_time_grid(double t_star, double horizon, const BarGridOptions& opts) {
  if (!(t_star > 0.0) || !(horizon > t_star)) throw std::invalid_argument("need 0 < t* < T");
  if (opts.uniform_points < 2 || opts.points_per_halving == 0 || opts.depth < 2 || opts.tail_points == 0) {
    throw std::invalid_argument("bar grid options out of range");
  }
  std::vector<double> g;
  for (std::size_t k = 0; k < opts.uniform_points; ++k) {
    g.push_back(0.5 * t_star * static_cast<double>(k) / static_cast<double>(opts.uniform_points - 1));
  }
  const auto steps = static_cast<std::size_t>(opts.depth - 1) * opts.points_per_halving;
  for (std::size_t j = 1; j <= steps; ++j) {
    const double x = 1.0 + static_cast<double>(j) / static_cast<double>(opts.points_per_halving);
    g.push_back(t_star * (1.0 - std::exp2(-x)));
  }
  for (std::size_t k = 0; k <= opts.tail_points; ++k) {
    g.push_back(t_star + (horizon - t_star) * static_cast<double>(k) / static_cast<double>(opts.tail_points));
  }
  return g;
}

namespace {

void check_mean(const BaseMeasure& m, double e) {
  if (std::abs(m.mean() - e) > 1e-12 * std::max(1.0, e)) {
    throw std::invalid_argument("base measure mean " + std::to_string(m.mean()) + " differs from e = " +
                                std::to_string(e));
  }
}

}  // namespace

KineticPath build_bar_path(const BaseMeasure& m, double e, double t_star, double horizon,
                           const BarGridOptions& opts) {
  check_mean(m, e);
  const std::vector<double> grid = bar_time_grid(t_star, horizon, opts);
  std::vector<double> alphas;
  for (double t : grid) {
    if (t < t_star) alphas.push_back(alpha(t, t_star));
  }
  KineticPath mbe = solve_mbe(initial_state(m), alphas, opts.mbe);

  KineticPath path;
  const Energy cutoff = mbe.states.back().cutoff();
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double t = grid[k];
    path.grid.push_back(t);
    if (t < t_star) {
      path.states.push_back(mbe.states[k]);
      path.flux.emplace_back(KernelFlux{KernelKind::Modified, alpha_dot(t, t_star)});
    } else {
      path.states.push_back(KineticState::delta(0, cutoff));
      path.flux.emplace_back(std::monostate{});
    }
  }
  return path;
}

KineticPath build_bar_path_delta(const BaseMeasure& m, double e, double t_star, double delta, double horizon,
                                 const BarGridOptions& opts) {
  check_mean(m, e);
  if (!(delta > 0.0) || !(delta < t_star)) throw std::invalid_argument("need 0 < delta < t*");
  const double t_cut = t_star - delta;
  std::vector<double> grid;
  for (double t : bar_time_grid(t_star, horizon, opts)) {
    if (t < t_cut) grid.push_back(t);
  }
  const std::size_t live = grid.size();
  grid.push_back(t_cut);
  grid.push_back(t_cut);
  for (std::size_t k = 1; k <= opts.tail_points; ++k) {
    grid.push_back(t_cut + (horizon - t_cut) * static_cast<double>(k) / static_cast<double>(opts.tail_points));
  }

  std::vector<double> alphas;
  for (std::size_t k = 0; k <= live; ++k) alphas.push_back(alpha(grid[k], t_star));
  KineticPath mbe = solve_mbe(initial_state(m), alphas, opts.mbe);

  KineticPath path;
  path.grid = grid;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (k <= live) {
      path.states.push_back(mbe.states[k]);
      path.flux.emplace_back(KernelFlux{KernelKind::Modified, alpha_dot(grid[k], t_star)});
    } else {
      path.states.push_back(mbe.states[live]);
      path.flux.emplace_back(std::monostate{});
    }
  }
  return path;
}

namespace {

double flux_integrand(const KineticPath& path, std::size_t k,
                      const std::function<double(double, const CollisionQuad&)>& fn) {
  double acc = 0.0;
  for_each_flux_atom(path.states[k], path.flux[k], [&](const CollisionQuad& q, double d) {
    acc += d * fn(path.grid[k], q);
  });
  return acc;
}

}  // namespace

double flow_functional(const KineticPath& path, const std::function<double(double, const CollisionQuad&)>& fn) {
  if (!path.has_flux()) throw std::invalid_argument("path carries no flux");
  double acc = 0.0;
  double prev = path.size() > 0 ? flux_integrand(path, 0, fn) : 0.0;
  for (std::size_t k = 1; k < path.size(); ++k) {
    const double cur = flux_integrand(path, k, fn);
    acc += 0.5 * (path.grid[k] - path.grid[k - 1]) * (prev + cur);
    prev = cur;
  }
  return acc;
}

double kinetic_balance_residual(const KineticPath& path, const TestFunction& phi) {
  if (path.size() < 2) throw std::invalid_argument("balance residual needs at least two grid times");
  const std::size_t last = path.size() - 1;
  const double t0 = path.grid.front();
  const double t1 = path.grid.back();
  double residual = path.states[last].expect([&](Energy e) { return phi.value(t1, e); }) -
                    path.states[0].expect([&](Energy e) { return phi.value(t0, e); });
  if (!phi.time_independent()) {
    for (std::size_t k = 0; k < last; ++k) {
      const double dt = path.grid[k + 1] - path.grid[k];
      if (dt <= 0.0) continue;
      const double mid = 0.5 * (path.grid[k] + path.grid[k + 1]);
      auto dphi = [&](Energy e) { return phi.time_derivative(mid, e); };
      residual -= 0.5 * dt * (path.states[k].expect(dphi) + path.states[k + 1].expect(dphi));
    }
  }
  residual += flow_functional(path, [&](double t, const CollisionQuad& q) {
    return phi.value(t, q.in.lo) + phi.value(t, q.in.hi) - phi.value(t, q.out.lo) - phi.value(t, q.out.hi);
  });
  return residual;
}

void write_kinetic_path_csv(std::ostream& os, const KineticPath& path) {
  os << "t,epsilon,mass\n";
  os.precision(17);
  for (std::size_t k = 0; k < path.size(); ++k) {
    for (Eigen::SparseVector<double>::InnerIterator it(path.states[k].f); it; ++it) {
      if (it.value() != 0.0) os << path.grid[k] << ',' << it.index() << ',' << it.value() << '\n';
    }
  }
}

void write_flux_csv(std::ostream& os, const KineticPath& path, double floor) {
  os << "t,e1,e2,e1p,e2p,density\n";
  os.precision(17);
  if (!path.has_flux()) return;
  for (std::size_t k = 0; k < path.size(); ++k) {
    std::vector<QuadDensity> atoms;
    for_each_flux_atom(path.states[k], path.flux[k],
                       [&](const CollisionQuad& q, double d) {
                         if (d >= floor) atoms.push_back({q, d});
                       });
    std::sort(atoms.begin(), atoms.end(), [](const QuadDensity& a, const QuadDensity& b) { return a.quad < b.quad; });
    for (const QuadDensity& a : atoms) {
      os << path.grid[k] << ',' << a.quad.in.lo << ',' << a.quad.in.hi << ',' << a.quad.out.lo << ','
         << a.quad.out.hi << ',' << a.density << '\n';
    }
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

double parse_number(const std::string& s, std::size_t row) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() && s.find_first_not_of(" \r", used) != std::string::npos) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw CorruptionError("row " + std::to_string(row) + ": not a number: '" + s + "'");
  }
}

// Skips leading '#' provenance lines and returns the column header.
bool read_csv_header(std::istream& is, std::string& line) {
  while (std::getline(is, line)) {
    if (line.empty() || line[0] != '#') return true;
  }
  return false;
}

}  // namespace

KineticPath read_kinetic_path_csv(std::istream& states, std::istream* flux) {
  std::string line;
  if (!read_csv_header(states, line)) throw CorruptionError("empty kinetic path file");
  std::vector<std::vector<std::pair<Energy, double>>> rows;
  std::vector<double> grid;
  Energy top = 0;
  Energy last_e = -1;
  for (std::size_t row = 2; std::getline(states, line); ++row) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 3) throw CorruptionError("row " + std::to_string(row) + ": expected t,epsilon,mass");
    const double t = parse_number(cells[0], row);
    const double ev = parse_number(cells[1], row);
    const double mass = parse_number(cells[2], row);
    if (ev < 0 || ev != std::floor(ev)) throw CorruptionError("row " + std::to_string(row) + ": bad energy level");
    if (mass < 0.0) throw CorruptionError("row " + std::to_string(row) + ": negative mass");
    const auto e = static_cast<Energy>(ev);
    // a new time slice starts when t moves or the level stops increasing
    if (grid.empty() || t != grid.back() || e <= last_e) {
      if (!grid.empty() && t < grid.back()) throw CorruptionError("row " + std::to_string(row) + ": time decreases");
      grid.push_back(t);
      rows.emplace_back();
    }
    rows.back().emplace_back(e, mass);
    top = std::max(top, e);
    last_e = e;
  }
  if (grid.empty()) throw CorruptionError("kinetic path file has no rows");

  KineticPath path;
  path.grid = grid;
  for (const auto& slice : rows) {
    Eigen::SparseVector<double> f(top + 1);
    for (const auto& [e, mass] : slice) f.coeffRef(e) += mass;
    path.states.emplace_back(std::move(f), Leak{});
  }
  if (flux == nullptr) return path;

  path.flux.assign(grid.size(), std::vector<QuadDensity>{});
  if (!read_csv_header(*flux, line)) throw CorruptionError("empty flux file");
  std::size_t cursor = 0;
  double current_t = -1.0;
  for (std::size_t row = 2; std::getline(*flux, line); ++row) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 6) throw CorruptionError("row " + std::to_string(row) + ": expected t,e1,e2,e1p,e2p,density");
    const double t = parse_number(cells[0], row);
    Energy e[4];
    for (int c = 0; c < 4; ++c) e[c] = static_cast<Energy>(parse_number(cells[1 + c], row));
    const double density = parse_number(cells[5], row);
    if (t != current_t) {
      while (cursor < grid.size() && grid[cursor] < t) ++cursor;
      if (cursor == grid.size() || grid[cursor] != t) {
        throw CorruptionError("row " + std::to_string(row) + ": flux time not on the state grid");
      }
      current_t = t;
    }
    const CollisionQuad q(e[0], e[1], e[2], e[3]);
    if (!q.is_effective()) throw CorruptionError("row " + std::to_string(row) + ": quad off the collision support");
    std::get<std::vector<QuadDensity>>(path.flux[cursor]).push_back({q, density});
  }
  return path;
}

}  // namespace kac
