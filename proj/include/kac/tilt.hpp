// Likelihood ratio between the tilted and the base path laws, replica
// experiments and the estimators built on them.

#ifndef KAC_TILT_HPP
#define KAC_TILT_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "kac/kinetics.hpp"
#include "kac/model.hpp"
#include "kac/sampler.hpp"
#include "kac/simulator.hpp"

namespace kac {

struct TiltParams {
  double t_star = 0.5;
  double delta = 0.1;
  double horizon = 1.0;
  /// Replace the tilted kernel by the base kernel; the ratio is then identically 1.
  bool self_test = false;

  double cut() const { return t_star - delta; }
};

/// log dP̄/dP of one path. `diagonal` is the part of `value` that comes from
/// counting a particle's collisions with itself in the mean-field form; it is
/// O(1) per path, so O(1/N) per particle.
struct LogRn {
  double value = 0.0;
  double diagonal = 0.0;
  bool impossible = false;  // the path has zero density under the tilted law

  double mean_field() const { return value - diagonal; }
};

/// Exact log-likelihood ratio accumulated event by event along a path:
/// Σ_events log(B̄/B) - ∫ (total tilted rate - total base rate) dt.
class LogRnAccumulator {
 public:
  LogRnAccumulator(const Configuration& cfg0, const TiltParams& params);

  void observe(const Event& ev);
  /// Integrates up to the horizon; further calls return the same value.
  LogRn finish();

 private:
  void advance(double t);
  void remove_particle(Energy level);
  void add_particle(Energy level);

  TiltParams p_;
  double inv_n_;
  std::map<Energy, std::int64_t> counts_;
  double base_pair_rates_ = 0.0;     // Σ_{i<j} exit(ε_i, ε_j)
  std::int64_t equal_pairs_ = 0;     // Σ_{ε≥1} C(n_ε, 2)
  std::int64_t positive_ = 0;        // particles with ε ≥ 1
  double base_self_rates_ = 0.0;     // Σ_i exit(ε_i, ε_i)
  double t_ = 0.0;
  LogRn out_;
  bool finished_ = false;
};

LogRn path_log_rn(const EventLog& log, const Configuration& cfg0, const TiltParams& params);

/// Symmetric bounded flow test function F(t; quad) = table[min(ε+ε*, cap)] on [0, t_end), 0 after.
struct FlowFunctional {
  std::string name;
  double t_end = std::numeric_limits<double>::infinity();
  std::vector<double> table;
  double tail = 0.0;

  double operator()(double t, const CollisionQuad& q) const;

  static FlowFunctional constant(std::string name, double value, double t_end = std::numeric_limits<double>::infinity());
  /// log((1 + ε + ε*)/2), which equals log((1+2ε)/2) on the equal-energy pairs, capped at pair sum `cap`.
  static FlowFunctional log_pair(double t_end, Energy cap = Energy{1} << 16);
};

/// Finite-dimensional neighborhood: truncated means Σ min(ε, mean_cap) π_t(ε)
/// at checkpoints and flow integrals Q^N(F).
struct NeighborhoodSpec {
  std::vector<double> checkpoints;
  std::vector<double> mean_targets;
  double mean_tolerance = 0.1;
  Energy mean_cap = 2;
  std::vector<FlowFunctional> flows;
  std::vector<double> flow_targets;
  double flow_rel_tolerance = 0.1;

  std::size_t dimension() const { return checkpoints.size() + flows.size(); }
  bool contains(const std::vector<double>& observables) const;
  /// Every point is inside.
  static NeighborhoodSpec everything();
};

/// Default neighborhood around (f̄^δ, Q̄^δ): checkpoints {t*/2, t*-δ, (t*+T)/2, T},
/// mean tolerance 0.1·e, F = 1 and F = log((1+2ε)/2)·1[t < t*-δ] at 10% relative tolerance.
NeighborhoodSpec default_neighborhood(const BaseMeasure& m, double e, const TiltParams& params,
                                      const MbeOptions& mbe = {});

/// Observable vector of a path: truncated means at checkpoints, then flow integrals.
class PathObserver {
 public:
  PathObserver(const Configuration& cfg0, const NeighborhoodSpec& nbhd);
  void observe(const Event& ev);
  std::vector<double> finish();

 private:
  void pass_checkpoints(double t);

  const NeighborhoodSpec& nbhd_;
  double inv_n_;
  std::vector<Energy> e_;
  double capped_sum_ = 0.0;
  std::size_t next_checkpoint_ = 0;
  std::vector<double> values_;
};

std::vector<double> observe_path(const EventLog& log, const Configuration& cfg0, const NeighborhoodSpec& nbhd);

enum class ReplicaLaw { Tilted, Base, SelfTest };

struct Scenario {
  BaseMeasure m = BaseMeasure::point_mass(1);
  double e = 1.0;
  TiltParams tilt;
};

struct ReplicaRecord {
  std::uint64_t index = 0;
  std::uint64_t seed = 0;
  LogRn log_rn;
  std::size_t events = 0;
  std::vector<double> observables;
};

struct ReplicaStats {
  std::size_t n = 0;
  ReplicaLaw law = ReplicaLaw::Tilted;
  std::vector<ReplicaRecord> records;

  /// Concatenates records; both sets must come from the same N and law.
  void merge(const ReplicaStats& other);
};

/// Runs replicas [first, first + count) on `threads` workers. Replica k draws
/// its initial state and path from the stream seeded by derive_seed(master, k),
/// so the result does not depend on scheduling.
ReplicaStats run_replicas(const Scenario& sc, std::size_t n, std::size_t count, std::uint64_t master_seed,
                          ReplicaLaw law, const NeighborhoodSpec& nbhd, unsigned threads = 1,
                          std::size_t first = 0);

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Mean of the mean-field log-ratio per particle, (log_rn - diagonal)/N.
Estimate entropy_estimate(const ReplicaStats& stats);
/// Mean of the diagonal part per particle.
Estimate diagonal_estimate(const ReplicaStats& stats);
/// Mean of e^{-log_rn}, i.e. the base-law probability of the paths the tilted law can produce.
Estimate weight_mass(const ReplicaStats& stats);
/// Mean of e^{log_rn} over base-law replicas. dP̄/dP integrates to 1 under P, so this is 1
/// up to sampling error; paths the tilted law cannot produce contribute 0.
Estimate likelihood_ratio_mass(const ReplicaStats& stats);

struct RareEstimate {
  double p_hat = 0.0;
  double std_error = 0.0;
  double relative_std_error = 0.0;
  double log_p_hat = -std::numeric_limits<double>::infinity();
  double log_p_hat_over_n = -std::numeric_limits<double>::infinity();
  double hit_rate = 0.0;
  std::size_t hits = 0;
  /// One-sided 95% bound on p when there are no hits: (3/R) times the largest weight seen.
  double upper_bound = 0.0;
};

/// p̂ = mean(e^{-log_rn} 1{observables ∈ nbhd}); weights are combined in log space.
RareEstimate estimate_rare_probability(const ReplicaStats& stats, const NeighborhoodSpec& nbhd);

/// Fraction of replicas inside the neighborhood (useful for base-law runs).
double hit_frequency(const ReplicaStats& stats, const NeighborhoodSpec& nbhd);

struct MartingaleValue {
  double m_t = 0.0;
  double quadratic_variation = 0.0;
};

/// M_T = Q^N(F) - ∫ (1/N²) Σ_{i<j} Σ_outcomes K_t F dt along the path, with predictable
/// quadratic variation ∫ (1/N³) Σ_{i<j} Σ_outcomes K_t F² dt, for kernel K = base or tilted.
MartingaleValue martingale_diagnostic(const EventLog& log, const Configuration& cfg0, const FlowFunctional& f,
                                      const KernelSpec& kernel);

}  // namespace kac

#endif  // KAC_TILT_HPP
