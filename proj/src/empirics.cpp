#include "kac/empirics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "kac/errors.hpp"

namespace kac {

namespace {

void bump(Histogram& h, Energy e, std::int64_t by) {
  const auto k = static_cast<std::size_t>(e);
  if (k >= h.size()) h.resize(k + 1, 0);
  h[k] += by;
}

}  // namespace

Rational EmpiricalMeasure::mass_exact(Energy e) const {
  if (e < 0 || static_cast<std::size_t>(e) >= counts.size()) return Rational(0);
  return Rational(counts[static_cast<std::size_t>(e)], static_cast<std::int64_t>(n));
}

double EmpiricalMeasure::mass(Energy e) const { return boost::rational_cast<double>(mass_exact(e)); }

Rational EmpiricalMeasure::mean_exact() const {
  std::int64_t total = 0;
  for (std::size_t k = 0; k < counts.size(); ++k) total += static_cast<std::int64_t>(k) * counts[k];
  return Rational(total, static_cast<std::int64_t>(n));
}

double EmpiricalMeasure::mean() const { return boost::rational_cast<double>(mean_exact()); }

EmpiricalMeasure empirical_measure(const Configuration& cfg) {
  EmpiricalMeasure m;
  m.n = cfg.size();
  for (Energy e : cfg.energies()) bump(m.counts, e, 1);
  return m;
}

double MeasurePath::mass(std::size_t k, Energy e) const {
  const Histogram& h = counts.at(k);
  if (e < 0 || static_cast<std::size_t>(e) >= h.size()) return 0.0;
  return static_cast<double>(h[static_cast<std::size_t>(e)]) / static_cast<double>(n);
}

double MeasurePath::expect(std::size_t k, const std::function<double(Energy)>& phi) const {
  const Histogram& h = counts.at(k);
  double acc = 0.0;
  for (std::size_t e = 0; e < h.size(); ++e) {
    if (h[e] != 0) acc += static_cast<double>(h[e]) * phi(static_cast<Energy>(e));
  }
  return acc / static_cast<double>(n);
}

MeasurePath measure_path(const EventLog& log, const Configuration& cfg0, std::span<const double> grid) {
  if (cfg0.size() != log.n()) throw CorruptionError("initial configuration size differs from log");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (grid[k] < 0.0 || grid[k] > log.horizon()) throw std::invalid_argument("grid time outside [0, T]");
    if (k > 0 && grid[k] < grid[k - 1]) throw std::invalid_argument("grid must be non-decreasing");
  }

  MeasurePath path;
  path.n = cfg0.size();
  path.grid.assign(grid.begin(), grid.end());
  path.counts.reserve(grid.size());

  std::vector<Energy> e(cfg0.energies().begin(), cfg0.energies().end());
  Histogram h = empirical_measure(cfg0).counts;
  std::size_t next = 0;

  auto snapshot_until = [&](double t_event) {
    // grid points strictly before the event see the pre-event state
    while (next < grid.size() && grid[next] < t_event) {
      path.counts.push_back(h);
      ++next;
    }
  };

  log.for_each([&](const Event& ev) {
    snapshot_until(ev.t);
    if (ev.i >= e.size() || ev.j >= e.size() || ev.i == ev.j) {
      throw CorruptionError("event references invalid particle indices");
    }
    if (EnergyPair(e[ev.i], e[ev.j]) != ev.in || ev.in.sum() != ev.out.sum()) {
      throw CorruptionError("event at t=" + std::to_string(ev.t) + " does not match the replayed state");
    }
    bump(h, e[ev.i], -1);
    bump(h, e[ev.j], -1);
    e[ev.i] = ev.out.lo;
    e[ev.j] = ev.out.hi;
    bump(h, e[ev.i], 1);
    bump(h, e[ev.j], 1);
  });
  snapshot_until(std::numeric_limits<double>::infinity());
  return path;
}

void FlowMeasure::add(double t, const CollisionQuad& q) {
  if (!q.is_effective()) throw CorruptionError("flow atom off the collision support");
  ++events_;
  if (bins_ == 0) {
    atoms_.push_back({t, q});
    return;
  }
  const double width = horizon_ / static_cast<double>(bins_);
  auto b = static_cast<std::size_t>(t / width);
  b = std::min(b, bins_ - 1);
  ++bin_counts_[{b, q}];
}

void FlowMeasure::rebin(std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("bin count must be positive");
  if (bins_ != 0) throw std::logic_error("flow measure is already binned");
  if (!(horizon_ > 0.0)) throw std::logic_error("binning needs a positive horizon");
  bins_ = bins;
  std::vector<Atom> atoms;
  atoms.swap(atoms_);
  events_ = 0;
  for (const Atom& a : atoms) add(a.t, a.quad);
}

void FlowMeasure::for_each(
    const std::function<void(double, double, const CollisionQuad&, std::int64_t)>& fn) const {
  for (const Atom& a : atoms_) fn(a.t, a.t, a.quad, 1);
  const double width = bins_ > 0 ? horizon_ / static_cast<double>(bins_) : 0.0;
  for (const auto& [key, count] : bin_counts_) {
    const double lo = width * static_cast<double>(key.first);
    fn(lo, lo + width, key.second, count);
  }
}

double FlowMeasure::integrate(const std::function<double(double, const CollisionQuad&)>& f) const {
  double acc = 0.0;
  for_each([&](double lo, double hi, const CollisionQuad& q, std::int64_t count) {
    acc += static_cast<double>(count) * f(0.5 * (lo + hi), q);
  });
  return acc / static_cast<double>(n_);
}

FlowMeasure empirical_flow(const EventLog& log, std::size_t atom_cap, std::size_t bins) {
  FlowMeasure flow(log.n(), log.horizon());
  if (log.size() > atom_cap) flow.rebin(bins);
  log.for_each([&](const Event& ev) { flow.add(ev.t, ev.quad()); });
  return flow;
}

TestFunction TestFunction::constant_in_time(std::vector<double> table, double tail) {
  Eigen::MatrixXd values(1, static_cast<Eigen::Index>(table.size()));
  for (std::size_t e = 0; e < table.size(); ++e) values(0, static_cast<Eigen::Index>(e)) = table[e];
  Eigen::VectorXd tails(1);
  tails(0) = tail;
  return TestFunction({0.0}, std::move(values), std::move(tails));
}

TestFunction::TestFunction(std::vector<double> grid, Eigen::MatrixXd values, Eigen::VectorXd tail)
    : grid_(std::move(grid)), values_(std::move(values)), tail_(std::move(tail)) {
  if (grid_.empty()) throw std::invalid_argument("test function needs at least one time");
  if (values_.rows() != static_cast<Eigen::Index>(grid_.size()) || tail_.size() != values_.rows()) {
    throw std::invalid_argument("test function table shape does not match its grid");
  }
  for (std::size_t k = 1; k < grid_.size(); ++k) {
    if (!(grid_[k] > grid_[k - 1])) throw std::invalid_argument("test function grid must increase");
  }
  if (!values_.allFinite() || !tail_.allFinite()) throw std::invalid_argument("test function must be bounded");
}

double TestFunction::at_row(std::size_t k, Energy e) const {
  if (e < values_.cols()) return values_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(e));
  return tail_(static_cast<Eigen::Index>(k));
}

double TestFunction::value(double t, Energy e) const {
  if (grid_.size() == 1 || t <= grid_.front()) return at_row(0, e);
  if (t >= grid_.back()) return at_row(grid_.size() - 1, e);
  const auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
  const auto k = static_cast<std::size_t>(it - grid_.begin()) - 1;
  const double w = (t - grid_[k]) / (grid_[k + 1] - grid_[k]);
  return (1.0 - w) * at_row(k, e) + w * at_row(k + 1, e);
}

double TestFunction::time_derivative(double t, Energy e) const {
  if (grid_.size() == 1 || t < grid_.front() || t >= grid_.back()) return 0.0;
  const auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
  const auto k = static_cast<std::size_t>(it - grid_.begin()) - 1;
  return (at_row(k + 1, e) - at_row(k, e)) / (grid_[k + 1] - grid_[k]);
}

namespace {

double collision_difference(const TestFunction& phi, double t, const CollisionQuad& q) {
  return phi.value(t, q.in.lo) + phi.value(t, q.in.hi) - phi.value(t, q.out.lo) - phi.value(t, q.out.hi);
}

}  // namespace

double balance_residual(const MeasurePath& path, const FlowMeasure& flow, const TestFunction& phi) {
  if (path.grid.size() < 2) throw std::invalid_argument("balance residual needs at least two grid times");
  const std::size_t last = path.grid.size() - 1;
  const double t0 = path.grid.front();
  const double t1 = path.grid.back();

  double residual = path.expect(last, [&](Energy e) { return phi.value(t1, e); }) -
                    path.expect(0, [&](Energy e) { return phi.value(t0, e); });

  if (!phi.time_independent()) {
    double integral = 0.0;
    for (std::size_t k = 0; k < last; ++k) {
      const double dt = path.grid[k + 1] - path.grid[k];
      if (dt <= 0.0) continue;
      const double mid = 0.5 * (path.grid[k] + path.grid[k + 1]);
      auto dphi = [&](Energy e) { return phi.time_derivative(mid, e); };
      integral += 0.5 * dt * (path.expect(k, dphi) + path.expect(k + 1, dphi));
    }
    residual -= integral;
  }

  residual += flow.integrate([&](double t, const CollisionQuad& q) {
    return (t >= t0 && t <= t1) ? collision_difference(phi, t, q) : 0.0;
  });
  return residual;
}

Rational balance_residual_exact(const MeasurePath& path, const FlowMeasure& flow,
                                const std::vector<std::int64_t>& table, std::int64_t tail) {
  if (path.grid.empty()) throw std::invalid_argument("balance residual needs a non-empty path");
  auto phi = [&](Energy e) -> std::int64_t {
    return static_cast<std::size_t>(e) < table.size() ? table[static_cast<std::size_t>(e)] : tail;
  };
  auto pair_sum = [&](const Histogram& h) {
    std::int64_t acc = 0;
    for (std::size_t e = 0; e < h.size(); ++e) acc += h[e] * phi(static_cast<Energy>(e));
    return acc;
  };
  const auto n = static_cast<std::int64_t>(path.n);
  std::int64_t numer = pair_sum(path.counts.back()) - pair_sum(path.counts.front());
  const double t0 = path.grid.front();
  const double t1 = path.grid.back();
  flow.for_each([&](double lo, double hi, const CollisionQuad& q, std::int64_t count) {
    const double t = 0.5 * (lo + hi);
    if (t < t0 || t > t1) return;
    numer += count * (phi(q.in.lo) + phi(q.in.hi) - phi(q.out.lo) - phi(q.out.hi));
  });
  return Rational(numer, n);
}

void write_measure_path_csv(std::ostream& os, const MeasurePath& path) {
  os << "t,epsilon,mass\n";
  os.precision(17);
  for (std::size_t k = 0; k < path.grid.size(); ++k) {
    const Histogram& h = path.counts[k];
    for (std::size_t e = 0; e < h.size(); ++e) {
      if (h[e] == 0) continue;
      os << path.grid[k] << ',' << e << ',' << static_cast<double>(h[e]) / static_cast<double>(path.n) << '\n';
    }
  }
}

void write_flow_csv(std::ostream& os, const FlowMeasure& flow) {
  os << "t_bin_lo,t_bin_hi,e1,e2,e1p,e2p,mass\n";
  os.precision(17);
  const double inv_n = 1.0 / static_cast<double>(flow.n());
  flow.for_each([&](double lo, double hi, const CollisionQuad& q, std::int64_t count) {
    os << lo << ',' << hi << ',' << q.in.lo << ',' << q.in.hi << ',' << q.out.lo << ',' << q.out.hi << ','
       << static_cast<double>(count) * inv_n << '\n';
  });
}

}  // namespace kac
