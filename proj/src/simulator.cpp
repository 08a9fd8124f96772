#include "kac/simulator.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <stdexcept>

#include "kac/errors.hpp"
#include "kac/event_io.hpp"

namespace kac {

EventLog::EventLog(std::size_t n, Energy e_total, double horizon, std::uint64_t seed, std::string kernel)
    : n_(n), e_total_(e_total), horizon_(horizon), seed_(seed), kernel_(std::move(kernel)) {}

void EventLog::set_spill(std::string path, std::size_t threshold) {
  if (threshold == 0) throw std::invalid_argument("spill threshold must be positive");
  if (spilled_count_ > 0) throw std::logic_error("spill target cannot change after spilling");
  spill_path_ = std::move(path);
  spill_threshold_ = threshold;
  std::ofstream truncate(spill_path_, std::ios::trunc);
  if (!truncate) throw std::runtime_error("cannot open spill file " + spill_path_);
}

void EventLog::append(const Event& ev) {
  if (!(ev.t > last_t_) && size() > 0) throw std::logic_error("event times must increase strictly");
  last_t_ = ev.t;
  events_.push_back(ev);
  if (spill_threshold_ > 0 && events_.size() >= spill_threshold_) flush();
}

void EventLog::flush() {
  std::ofstream os(spill_path_, std::ios::app);
  if (!os) throw std::runtime_error("cannot append to spill file " + spill_path_);
  for (const Event& ev : events_) os << event_to_json_line(ev) << '\n';
  spilled_count_ += events_.size();
  events_.clear();
}

const std::vector<Event>& EventLog::events() const {
  if (spilled_count_ > 0) throw std::logic_error("event log was spilled to disk; use for_each");
  return events_;
}

void EventLog::for_each(const std::function<void(const Event&)>& fn) const {
  if (spilled_count_ > 0) {
    std::ifstream is(spill_path_);
    if (!is) throw CorruptionError("spill file vanished: " + spill_path_);
    std::string line;
    std::size_t seen = 0;
    while (seen < spilled_count_ && std::getline(is, line)) {
      fn(event_from_json_line(line));
      ++seen;
    }
    if (seen != spilled_count_) throw CorruptionError("spill file truncated: " + spill_path_);
  }
  for (const Event& ev : events_) fn(ev);
}

namespace {

// Shared ring loop. `on_ring` sees every ring that changes the labeled
// configuration; swaps of the two energies count only when `apply_swaps`.
template <typename OnRing>
void run_base_rings(std::vector<Energy>& e, double horizon, Rng& rng, bool apply_swaps, OnRing&& on_ring) {
  const std::size_t n = e.size();
  // All N(N-1)/2 pairs ring at rate 1/N.
  const double ring_rate = 0.5 * static_cast<double>(n - 1);
  double t = 0.0;
  for (;;) {
    t += exponential(rng, ring_rate);
    if (t > horizon) break;
    const Index i = uniform_below(rng, n);
    Index j = uniform_below(rng, n - 1);
    if (j >= i) ++j;
    const Energy a = e[i];
    const Energy b = e[j];
    const Energy s = a + b;
    const auto ell = static_cast<Energy>(uniform_below(rng, static_cast<std::uint64_t>(s) + 1));
    if (ell == a) continue;                  // T_ij^ℓ is the identity
    if (ell == b && !apply_swaps) continue;  // same unordered pair
    e[i] = ell;
    e[j] = s - ell;
    on_ring(t, i, j, a, b, ell);
  }
}

}  // namespace

EventLog simulate_base(const Configuration& cfg0, double horizon, Rng& rng, std::uint64_t seed,
                       const EventCallback& on_event) {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  if (cfg0.size() < 2) throw std::invalid_argument("need at least two particles");
  EventLog log(cfg0.size(), cfg0.total(), horizon, seed, KernelSpec::base().to_string());
  std::vector<Energy> e(cfg0.energies().begin(), cfg0.energies().end());
  run_base_rings(e, horizon, rng, false, [&](double t, Index i, Index j, Energy a, Energy b, Energy ell) {
    const Energy s = a + b;
    const Event ev = (ell <= s - ell) ? Event{t, i, j, {a, b}, {ell, s - ell}} : Event{t, j, i, {a, b}, {ell, s - ell}};
    log.append(ev);
    if (on_event) on_event(ev);
  });
  return log;
}

void simulate_base_labeled(const Configuration& cfg0, double horizon, Rng& rng, const LabeledCallback& on_change) {
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  if (cfg0.size() < 2) throw std::invalid_argument("need at least two particles");
  std::vector<Energy> e(cfg0.energies().begin(), cfg0.energies().end());
  run_base_rings(e, horizon, rng, true, [&](double t, Index i, Index j, Energy, Energy, Energy) {
    if (on_change) on_change(t, i, j, e[i], e[j]);
  });
}

namespace {

// Particles with energy >= 1 grouped by energy, with O(1) removal.
class EnergyBuckets {
 public:
  explicit EnergyBuckets(const std::vector<Energy>& e) : slot_(e.size(), 0) {
    for (Index i = 0; i < e.size(); ++i) {
      if (e[i] >= 1) insert(i, e[i]);
    }
  }

  void insert(Index i, Energy level) {
    auto& b = buckets_[level];
    weight_ -= pairs(b.size());
    slot_[i] = b.size();
    b.push_back(i);
    weight_ += pairs(b.size());
  }

  void remove(Index i, Energy level) {
    auto it = buckets_.find(level);
    auto& b = it->second;
    weight_ -= pairs(b.size());
    const Index last = b.back();
    b[slot_[i]] = last;
    slot_[last] = slot_[i];
    b.pop_back();
    weight_ += pairs(b.size());
    if (b.empty()) buckets_.erase(it);
  }

  /// Σ_ε C(n_ε, 2): number of equal-energy pairs with ε >= 1.
  std::uint64_t weight() const { return weight_; }

  /// Level chosen with probability C(n_ε,2)/weight, then a uniform pair inside it.
  std::pair<Index, Index> draw_pair(Rng& rng, Energy& level) const {
    std::uint64_t u = uniform_below(rng, weight_);
    for (const auto& [lvl, b] : buckets_) {
      const std::uint64_t w = pairs(b.size());
      if (u < w) {
        level = lvl;
        const Index k1 = uniform_below(rng, b.size());
        Index k2 = uniform_below(rng, b.size() - 1);
        if (k2 >= k1) ++k2;
        return {b[k1], b[k2]};
      }
      u -= w;
    }
    throw std::logic_error("bucket weights out of sync");
  }

 private:
  static std::uint64_t pairs(std::size_t k) { return k < 2 ? 0 : k * (k - 1) / 2; }

  std::map<Energy, std::vector<Index>> buckets_;
  std::vector<std::size_t> slot_;
  std::uint64_t weight_ = 0;
};

}  // namespace

EventLog simulate_tilted(const Configuration& cfg0, double horizon, double t_star, double delta, Rng& rng,
                         std::uint64_t seed, const EventCallback& on_event) {
  const KernelSpec kernel = KernelSpec::tilted(t_star, delta);
  if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
  const std::size_t n = cfg0.size();
  EventLog log(n, cfg0.total(), horizon, seed, kernel.to_string());
  std::vector<Energy> e(cfg0.energies().begin(), cfg0.energies().end());
  EnergyBuckets buckets(e);

  const double t_stop = std::min(horizon, t_star - delta);
  const double s_stop = alpha(t_stop, t_star);
  const double inv_n = 1.0 / static_cast<double>(n);
  double s = 0.0;
  while (buckets.weight() > 0) {
    s += exponential(rng, static_cast<double>(buckets.weight()) * inv_n);
    if (s > s_stop) break;
    const double t = alpha_inv(s, t_star);
    if (t >= t_stop) break;  // rounding at the very edge of the window

    Energy level = 0;
    auto [p, q] = buckets.draw_pair(rng, level);
    // fair coin for the particle that takes the whole pair energy
    const bool first_wins = (rng() >> 63) != 0;
    const Index winner = first_wins ? p : q;
    const Index loser = first_wins ? q : p;
    buckets.remove(winner, level);
    buckets.remove(loser, level);
    e[winner] = 2 * level;
    e[loser] = 0;
    buckets.insert(winner, 2 * level);

    Event ev{t, loser, winner, {level, level}, {0, 2 * level}};
    log.append(ev);
    if (on_event) on_event(ev);
  }
  return log;
}

namespace {

void apply_checked(std::vector<Energy>& e, const Event& ev) {
  if (ev.i >= e.size() || ev.j >= e.size() || ev.i == ev.j) {
    throw CorruptionError("event references invalid particle indices");
  }
  if (EnergyPair(e[ev.i], e[ev.j]) != ev.in) {
    throw CorruptionError("event pre-collision pair does not match the replayed state");
  }
  if (ev.in.sum() != ev.out.sum()) throw CorruptionError("event does not conserve pair energy");
  e[ev.i] = ev.out.lo;
  e[ev.j] = ev.out.hi;
}

}  // namespace

Configuration replay(const Configuration& cfg0, const EventLog& log) {
  if (cfg0.size() != log.n()) throw CorruptionError("initial configuration size differs from log");
  std::vector<Energy> e(cfg0.energies().begin(), cfg0.energies().end());
  log.for_each([&](const Event& ev) { apply_checked(e, ev); });
  return Configuration(std::move(e));
}

Configuration state_at(const Configuration& cfg0, const EventLog& log, double t) {
  std::vector<Energy> e(cfg0.energies().begin(), cfg0.energies().end());
  log.for_each([&](const Event& ev) {
    if (ev.t <= t) apply_checked(e, ev);
  });
  return Configuration(std::move(e));
}

}  // namespace kac
