#include "kac/tilt.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "kac/rng.hpp"

namespace kac {

namespace {

// Σ over ordered outcomes of B(a, b, ·): outcomes that change the pair / (a+b+1).
double exit_rate(Energy a, Energy b) {
  const double s = static_cast<double>(a + b);
  return (a == b ? s : s - 1.0) / (s + 1.0);
}

// ∫_{t0}^{t1} α̇ over the part of the interval below `cut`.
double alpha_increment(double t0, double t1, double cut, double t_star) {
  const double hi = std::min(t1, cut);
  if (hi <= t0) return 0.0;
  return alpha(hi, t_star) - alpha(std::max(t0, 0.0), t_star);
}

bool is_merge(const Event& ev) {
  return ev.in.lo == ev.in.hi && ev.in.lo >= 1 && ev.out.lo == 0 && ev.out.hi == 2 * ev.in.lo;
}

}  // namespace

LogRnAccumulator::LogRnAccumulator(const Configuration& cfg0, const TiltParams& params)
    : p_(params), inv_n_(1.0 / static_cast<double>(cfg0.size())) {
  if (!(params.delta > 0.0) || !(params.delta < params.t_star) || !(params.horizon > 0.0)) {
    throw std::invalid_argument("need 0 < delta < t* and T > 0");
  }
  for (Energy e : cfg0.energies()) ++counts_[e];
  for (auto a = counts_.begin(); a != counts_.end(); ++a) {
    const auto na = static_cast<double>(a->second);
    base_pair_rates_ += 0.5 * na * (na - 1.0) * exit_rate(a->first, a->first);
    for (auto b = std::next(a); b != counts_.end(); ++b) {
      base_pair_rates_ += na * static_cast<double>(b->second) * exit_rate(a->first, b->first);
    }
    base_self_rates_ += na * exit_rate(a->first, a->first);
    if (a->first >= 1) {
      equal_pairs_ += a->second * (a->second - 1) / 2;
      positive_ += a->second;
    }
  }
}

void LogRnAccumulator::advance(double t) {
  if (t < t_) throw std::invalid_argument("events must be fed in time order");
  if (!p_.self_test && !out_.impossible) {
    const double dt = t - t_;
    const double dalpha = alpha_increment(t_, t, p_.cut(), p_.t_star);
    const double tilted = static_cast<double>(equal_pairs_) * inv_n_ * dalpha;
    const double base = base_pair_rates_ * inv_n_ * dt;
    out_.value -= tilted - base;
    out_.diagonal += 0.5 * inv_n_ * (static_cast<double>(positive_) * dalpha - base_self_rates_ * dt);
  }
  t_ = t;
}

void LogRnAccumulator::remove_particle(Energy a) {
  double pair_sum = 0.0;
  for (const auto& [c, nc] : counts_) pair_sum += static_cast<double>(nc) * exit_rate(a, c);
  base_pair_rates_ -= pair_sum - exit_rate(a, a);
  auto it = counts_.find(a);
  if (a >= 1) {
    equal_pairs_ -= it->second - 1;
    --positive_;
  }
  if (--it->second == 0) counts_.erase(it);
  base_self_rates_ -= exit_rate(a, a);
}

void LogRnAccumulator::add_particle(Energy b) {
  double pair_sum = 0.0;
  for (const auto& [c, nc] : counts_) pair_sum += static_cast<double>(nc) * exit_rate(b, c);
  base_pair_rates_ += pair_sum;
  auto& nb = counts_[b];
  if (b >= 1) {
    equal_pairs_ += nb;
    ++positive_;
  }
  ++nb;
  base_self_rates_ += exit_rate(b, b);
}

void LogRnAccumulator::observe(const Event& ev) {
  if (finished_) throw std::logic_error("accumulator already finished");
  if (ev.t > p_.horizon) throw std::invalid_argument("event after the horizon");
  advance(ev.t);
  if (p_.self_test || out_.impossible) return;
  if (ev.t >= p_.cut() || !is_merge(ev)) {
    out_.impossible = true;
    out_.value = -std::numeric_limits<double>::infinity();
    return;
  }
  const double level = static_cast<double>(ev.in.lo);
  out_.value += std::log(alpha_dot(ev.t, p_.t_star)) + std::log((2.0 * level + 1.0) / 2.0);
  remove_particle(ev.in.lo);
  remove_particle(ev.in.hi);
  add_particle(ev.out.lo);
  add_particle(ev.out.hi);
}

LogRn LogRnAccumulator::finish() {
  if (!finished_) {
    advance(p_.horizon);
    finished_ = true;
  }
  return out_;
}

LogRn path_log_rn(const EventLog& log, const Configuration& cfg0, const TiltParams& params) {
  LogRnAccumulator acc(cfg0, params);
  log.for_each([&](const Event& ev) { acc.observe(ev); });
  return acc.finish();
}

double FlowFunctional::operator()(double t, const CollisionQuad& q) const {
  if (!(t < t_end)) return 0.0;
  const auto s = static_cast<std::size_t>(q.in.sum());
  return s < table.size() ? table[s] : tail;
}

FlowFunctional FlowFunctional::constant(std::string name, double value, double t_end) {
  return {std::move(name), t_end, {}, value};
}

FlowFunctional FlowFunctional::log_pair(double t_end, Energy cap) {
  FlowFunctional f{"log_pair", t_end, {}, 0.0};
  f.table.resize(static_cast<std::size_t>(cap) + 1);
  for (Energy s = 0; s <= cap; ++s) f.table[static_cast<std::size_t>(s)] = std::log((1.0 + static_cast<double>(s)) / 2.0);
  f.tail = f.table.back();
  return f;
}

bool NeighborhoodSpec::contains(const std::vector<double>& obs) const {
  if (obs.size() != dimension()) throw std::invalid_argument("observable vector has the wrong dimension");
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    if (!(std::abs(obs[k] - mean_targets[k]) <= mean_tolerance)) return false;
  }
  for (std::size_t k = 0; k < flows.size(); ++k) {
    const double v = obs[checkpoints.size() + k];
    if (!(std::abs(v - flow_targets[k]) <= flow_rel_tolerance * std::abs(flow_targets[k]))) return false;
  }
  return true;
}

NeighborhoodSpec NeighborhoodSpec::everything() {
  NeighborhoodSpec s;
  s.mean_tolerance = std::numeric_limits<double>::infinity();
  s.flow_rel_tolerance = std::numeric_limits<double>::infinity();
  return s;
}

NeighborhoodSpec default_neighborhood(const BaseMeasure& m, double e, const TiltParams& params,
                                      const MbeOptions& mbe) {
  const double ts = params.t_star;
  const double cut = params.cut();
  const double horizon = params.horizon;
  if (!(horizon > ts)) throw std::invalid_argument("need t* < T");

  NeighborhoodSpec s;
  s.checkpoints = {ts / 2.0, cut, (ts + horizon) / 2.0, horizon};
  std::sort(s.checkpoints.begin(), s.checkpoints.end());
  s.mean_tolerance = 0.1 * e;
  s.mean_cap = static_cast<Energy>(std::ceil(2.0 * e));
  s.flows = {FlowFunctional::constant("collisions", 1.0), FlowFunctional::log_pair(cut)};
  s.flow_rel_tolerance = 0.1;

  // truncated means of f̄^δ: f_{α(t)} before the cut, frozen after
  std::vector<double> alphas;
  for (double t : s.checkpoints) alphas.push_back(alpha(std::min(t, cut), ts));
  std::vector<double> sorted = alphas;
  std::sort(sorted.begin(), sorted.end());
  const KineticPath at = solve_mbe(initial_state(m), sorted, mbe);
  const auto cap = static_cast<double>(s.mean_cap);
  for (double a : alphas) {
    const auto k = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), a) - sorted.begin());
    s.mean_targets.push_back(at.states[k].expect([&](Energy x) { return std::min(static_cast<double>(x), cap); }));
  }

  // flow targets: ∫_0^{cut} α̇ ½ Σ f² F dt = ½ ∫_0^{α(cut)} Σ f_α² F dα, Simpson in log(1+α)
  const std::size_t points = 4001;
  const double alpha_cut = alpha(cut, ts);
  const std::vector<double> grid = log_time_grid(alpha_cut, points);
  const KineticPath path = solve_mbe(initial_state(m), grid, mbe);
  const double h = std::log1p(alpha_cut) / static_cast<double>(points - 1);
  for (const FlowFunctional& f : s.flows) {
    std::vector<double> v(points);
    for (std::size_t k = 0; k < points; ++k) {
      const double t = alpha_inv(grid[k], ts);
      double acc = 0.0;
      for (Eigen::SparseVector<double>::InnerIterator it(path.states[k].f); it; ++it) {
        if (it.index() == 0) continue;
        const CollisionQuad q(EnergyPair(it.index(), it.index()), EnergyPair(0, 2 * it.index()));
        // the window of F is [0, cut); its left limit at the cut is what the integral sees
        acc += 0.5 * it.value() * it.value() * f(std::min(t, std::nextafter(cut, 0.0)), q);
      }
      v[k] = acc * (1.0 + grid[k]);
    }
    double integral = 0.0;
    for (std::size_t k = 2; k < points; k += 2) integral += h / 3.0 * (v[k - 2] + 4.0 * v[k - 1] + v[k]);
    s.flow_targets.push_back(integral);
  }
  return s;
}

PathObserver::PathObserver(const Configuration& cfg0, const NeighborhoodSpec& nbhd)
    : nbhd_(nbhd), inv_n_(1.0 / static_cast<double>(cfg0.size())), e_(cfg0.energies().begin(), cfg0.energies().end()) {
  if (!std::is_sorted(nbhd.checkpoints.begin(), nbhd.checkpoints.end())) {
    throw std::invalid_argument("checkpoints must be sorted");
  }
  const auto cap = static_cast<double>(nbhd.mean_cap);
  for (Energy x : e_) capped_sum_ += std::min(static_cast<double>(x), cap);
  values_.assign(nbhd.dimension(), 0.0);
}

void PathObserver::pass_checkpoints(double t) {
  while (next_checkpoint_ < nbhd_.checkpoints.size() && nbhd_.checkpoints[next_checkpoint_] < t) {
    values_[next_checkpoint_] = capped_sum_ * inv_n_;
    ++next_checkpoint_;
  }
}

void PathObserver::observe(const Event& ev) {
  pass_checkpoints(ev.t);
  const auto cap = static_cast<double>(nbhd_.mean_cap);
  auto capped = [cap](Energy x) { return std::min(static_cast<double>(x), cap); };
  capped_sum_ += capped(ev.out.lo) + capped(ev.out.hi) - capped(e_[ev.i]) - capped(e_[ev.j]);
  e_[ev.i] = ev.out.lo;
  e_[ev.j] = ev.out.hi;
  const CollisionQuad q = ev.quad();
  for (std::size_t k = 0; k < nbhd_.flows.size(); ++k) {
    values_[nbhd_.checkpoints.size() + k] += nbhd_.flows[k](ev.t, q) * inv_n_;
  }
}

std::vector<double> PathObserver::finish() {
  pass_checkpoints(std::numeric_limits<double>::infinity());
  return values_;
}

std::vector<double> observe_path(const EventLog& log, const Configuration& cfg0, const NeighborhoodSpec& nbhd) {
  PathObserver obs(cfg0, nbhd);
  log.for_each([&](const Event& ev) { obs.observe(ev); });
  return obs.finish();
}

void ReplicaStats::merge(const ReplicaStats& other) {
  if (other.records.empty()) return;
  if (!records.empty() && (other.n != n || other.law != law)) {
    throw std::invalid_argument("cannot merge replicas of different experiments");
  }
  n = other.n;
  law = other.law;
  records.insert(records.end(), other.records.begin(), other.records.end());
  std::sort(records.begin(), records.end(),
            [](const ReplicaRecord& a, const ReplicaRecord& b) { return a.index < b.index; });
}

ReplicaStats run_replicas(const Scenario& sc, std::size_t n, std::size_t count, std::uint64_t master_seed,
                          ReplicaLaw law, const NeighborhoodSpec& nbhd, unsigned threads, std::size_t first) {
  ReplicaStats stats;
  stats.n = n;
  stats.law = law;
  stats.records.resize(count);

  TiltParams tilt = sc.tilt;
  tilt.self_test = law == ReplicaLaw::SelfTest;

  auto one = [&](std::size_t slot) {
    const std::uint64_t index = first + slot;
    const std::uint64_t seed = derive_seed(master_seed, index);
    Rng rng(seed);
    const Configuration cfg0 = sample_microcanonical(sc.m, n, sc.e, rng);
    LogRnAccumulator acc(cfg0, tilt);
    PathObserver obs(cfg0, nbhd);
    auto feed = [&](const Event& ev) {
      acc.observe(ev);
      obs.observe(ev);
    };
    const EventLog log = law == ReplicaLaw::Tilted
                             ? simulate_tilted(cfg0, tilt.horizon, tilt.t_star, tilt.delta, rng, seed, feed)
                             : simulate_base(cfg0, tilt.horizon, rng, seed, feed);
    ReplicaRecord& r = stats.records[slot];
    r.index = index;
    r.seed = seed;
    r.log_rn = acc.finish();
    r.events = log.size();
    r.observables = obs.finish();
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t slot = next.fetch_add(1);
      if (slot >= count) return;
      try {
        one(slot);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return stats;
}

namespace {

Estimate mean_and_error(const std::vector<double>& v) {
  Estimate est;
  if (v.empty()) return est;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  est.mean = mean;
  if (v.size() > 1) est.std_error = std::sqrt(var / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return est;
}

}  // namespace

Estimate entropy_estimate(const ReplicaStats& stats) {
  std::vector<double> v;
  for (const ReplicaRecord& r : stats.records) {
    if (!r.log_rn.impossible) v.push_back(r.log_rn.mean_field() / static_cast<double>(stats.n));
  }
  return mean_and_error(v);
}

Estimate diagonal_estimate(const ReplicaStats& stats) {
  std::vector<double> v;
  for (const ReplicaRecord& r : stats.records) {
    if (!r.log_rn.impossible) v.push_back(r.log_rn.diagonal / static_cast<double>(stats.n));
  }
  return mean_and_error(v);
}

Estimate weight_mass(const ReplicaStats& stats) {
  std::vector<double> v;
  for (const ReplicaRecord& r : stats.records) v.push_back(r.log_rn.impossible ? 0.0 : std::exp(-r.log_rn.value));
  return mean_and_error(v);
}

Estimate likelihood_ratio_mass(const ReplicaStats& stats) {
  if (stats.law != ReplicaLaw::Base) throw std::invalid_argument("likelihood ratio mass needs base-law replicas");
  std::vector<double> v;
  for (const ReplicaRecord& r : stats.records) v.push_back(r.log_rn.impossible ? 0.0 : std::exp(r.log_rn.value));
  return mean_and_error(v);
}

RareEstimate estimate_rare_probability(const ReplicaStats& stats, const NeighborhoodSpec& nbhd) {
  RareEstimate out;
  const auto total = static_cast<double>(stats.records.size());
  if (stats.records.empty()) return out;
  std::vector<double> log_w;
  double largest_any = -std::numeric_limits<double>::infinity();
  for (const ReplicaRecord& r : stats.records) {
    if (r.log_rn.impossible) continue;
    largest_any = std::max(largest_any, -r.log_rn.value);
    if (nbhd.contains(r.observables)) log_w.push_back(-r.log_rn.value);
  }
  out.hits = log_w.size();
  out.hit_rate = static_cast<double>(out.hits) / total;
  if (log_w.empty()) {
    out.upper_bound = 3.0 / total * std::exp(largest_any);
    return out;
  }
  // scale by the largest weight so the sums stay representable
  const double top = *std::max_element(log_w.begin(), log_w.end());
  double s1 = 0.0;
  double s2 = 0.0;
  for (double lw : log_w) {
    const double w = std::exp(lw - top);
    s1 += w;
    s2 += w * w;
  }
  const double mean_scaled = s1 / total;
  const double var_scaled = std::max(0.0, s2 / total - mean_scaled * mean_scaled);
  const double se_scaled = total > 1.0 ? std::sqrt(var_scaled / (total - 1.0)) : 0.0;
  out.log_p_hat = top + std::log(mean_scaled);
  out.log_p_hat_over_n = out.log_p_hat / static_cast<double>(stats.n);
  out.p_hat = std::exp(out.log_p_hat);
  out.relative_std_error = se_scaled / mean_scaled;
  out.std_error = out.p_hat * out.relative_std_error;
  return out;
}

double hit_frequency(const ReplicaStats& stats, const NeighborhoodSpec& nbhd) {
  if (stats.records.empty()) return 0.0;
  std::size_t hits = 0;
  for (const ReplicaRecord& r : stats.records) hits += nbhd.contains(r.observables) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(stats.records.size());
}

MartingaleValue martingale_diagnostic(const EventLog& log, const Configuration& cfg0, const FlowFunctional& f,
                                      const KernelSpec& kernel) {
  const double n = static_cast<double>(cfg0.size());
  std::map<Energy, std::int64_t> counts;
  for (Energy e : cfg0.energies()) ++counts[e];
  const bool tilted = kernel.kind != KernelKind::Base;
  const double cut = kernel.kind == KernelKind::TiltedBarDelta ? kernel.t_star - kernel.delta
                                                               : std::numeric_limits<double>::infinity();

  // state part of the compensator and quadratic-variation rates, before the time factor
  double rate1 = 0.0;
  double rate2 = 0.0;
  auto refresh = [&] {
    rate1 = 0.0;
    rate2 = 0.0;
    for (auto a = counts.begin(); a != counts.end(); ++a) {
      const auto na = static_cast<double>(a->second);
      if (tilted) {
        if (a->first == 0) continue;
        const CollisionQuad q(EnergyPair(a->first, a->first), EnergyPair(0, 2 * a->first));
        const double g = f(-std::numeric_limits<double>::infinity(), q);
        const double pairs = 0.5 * na * (na - 1.0);
        rate1 += pairs * g;
        rate2 += pairs * g * g;
        continue;
      }
      for (auto b = a; b != counts.end(); ++b) {
        const double pairs = a == b ? 0.5 * na * (na - 1.0) : na * static_cast<double>(b->second);
        if (pairs == 0.0) continue;
        const CollisionQuad q(EnergyPair(a->first, b->first), EnergyPair(a->first, b->first));
        const double g = f(-std::numeric_limits<double>::infinity(), q);  // depends on the pair sum only
        const double ex = exit_rate(a->first, b->first);
        rate1 += pairs * ex * g;
        rate2 += pairs * ex * g * g;
      }
    }
  };
  // ∫ of kernel time factor × window over [t0, t1)
  auto time_weight = [&](double t0, double t1) {
    const double hi = std::min({t1, f.t_end, cut});
    if (hi <= t0) return 0.0;
    if (kernel.kind == KernelKind::TiltedBarDelta) return alpha(hi, kernel.t_star) - alpha(t0, kernel.t_star);
    return hi - t0;
  };

  MartingaleValue out;
  refresh();
  double t = 0.0;
  double jumps = 0.0;
  double compensator = 0.0;
  double qv = 0.0;
  auto integrate_to = [&](double t1) {
    const double w = time_weight(t, t1);
    compensator += rate1 * w;
    qv += rate2 * w;
    t = t1;
  };
  log.for_each([&](const Event& ev) {
    integrate_to(ev.t);
    jumps += f(ev.t, ev.quad());
    if (--counts[ev.in.lo] == 0) counts.erase(ev.in.lo);
    if (--counts[ev.in.hi] == 0) counts.erase(ev.in.hi);
    ++counts[ev.out.lo];
    ++counts[ev.out.hi];
    refresh();
  });
  integrate_to(log.horizon());
  out.m_t = (jumps - compensator / n) / n;
  out.quadratic_variation = qv / (n * n * n);
  return out;
}

}  // namespace kac
