// Event-driven simulation of the N-particle chain under the base kernel and
// under the time-dependent tilted kernel B̄^δ.

#ifndef KAC_SIMULATOR_HPP
#define KAC_SIMULATOR_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kac/model.hpp"
#include "kac/rng.hpp"

namespace kac {

/// One effective collision. After the event particle i holds out.lo and
/// particle j holds out.hi; `in` is the unordered pre-collision pair.
struct Event {
  double t = 0.0;
  Index i = 0;
  Index j = 0;
  EnergyPair in;
  EnergyPair out;

  CollisionQuad quad() const { return {in, out}; }
  friend bool operator==(const Event&, const Event&) = default;
};

using EventCallback = std::function<void(const Event&)>;

/// Time-ordered record of effective collisions on [0, horizon].
///
/// Events are buffered in memory. When a spill file is configured and the buffer
/// reaches the threshold, the buffer is appended to the file as JSON lines and
/// cleared; for_each() streams the spilled part back before the buffered part.
class EventLog {
 public:
  EventLog() = default;
  EventLog(std::size_t n, Energy e_total, double horizon, std::uint64_t seed, std::string kernel);

  std::size_t n() const { return n_; }
  Energy e_total() const { return e_total_; }
  double horizon() const { return horizon_; }
  std::uint64_t seed() const { return seed_; }
  const std::string& kernel() const { return kernel_; }

  void set_spill(std::string path, std::size_t threshold);
  bool spilled() const { return spilled_count_ > 0; }

  void append(const Event& ev);
  std::size_t size() const { return spilled_count_ + events_.size(); }
  bool empty() const { return size() == 0; }

  /// In-memory events; throws if part of the log has been spilled.
  const std::vector<Event>& events() const;
  void for_each(const std::function<void(const Event&)>& fn) const;

 private:
  void flush();

  std::size_t n_ = 0;
  Energy e_total_ = 0;
  double horizon_ = 0.0;
  std::uint64_t seed_ = 0;
  std::string kernel_;
  std::vector<Event> events_;
  std::string spill_path_;
  std::size_t spill_threshold_ = 0;
  std::size_t spilled_count_ = 0;
  double last_t_ = 0.0;
};

/// Exact simulation of the chain generated by (1/N) Σ_{i<j} L_ij on [0, T].
/// Every pair rings at rate 1/N; a ring draws ℓ uniformly from {0..ε_i+ε_j}.
/// Rings that reproduce the unordered pair consume time but are not logged.
EventLog simulate_base(const Configuration& cfg0, double horizon, Rng& rng, std::uint64_t seed = 0,
                       const EventCallback& on_event = {});

/// (t, i, j, new ε_i, new ε_j) after a change of the labeled configuration.
using LabeledCallback = std::function<void(double, Index, Index, Energy, Energy)>;

/// The same chain on labeled configurations: rings that swap the two energies
/// are applied as well. simulate_base drops them because they leave π^N and
/// Q^N unchanged; they matter only for labeled-state statistics.
void simulate_base_labeled(const Configuration& cfg0, double horizon, Rng& rng, const LabeledCallback& on_change);

/// Exact simulation under B̄^δ on [0, T]. Runs the homogeneous B̃ chain in
/// α-time on [0, α(t* - δ)] and maps event times back through α^{-1}.
EventLog simulate_tilted(const Configuration& cfg0, double horizon, double t_star, double delta, Rng& rng,
                         std::uint64_t seed = 0, const EventCallback& on_event = {});

/// Replays a log from cfg0, checking every pre-collision pair. Throws
/// CorruptionError on mismatch. Returns the final configuration.
Configuration replay(const Configuration& cfg0, const EventLog& log);

/// Configuration at time t (càdlàg: events at time <= t are applied).
Configuration state_at(const Configuration& cfg0, const EventLog& log, double t);

}  // namespace kac

#endif  // KAC_SIMULATOR_HPP
