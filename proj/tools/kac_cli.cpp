// kac: batch front end for simulations, kinetic solves, rate evaluation,
// the finite-state oracle and the importance-sampling experiment.
//
// Exit codes: 0 success, 2 configuration or input error, 3 resource cap,
// 4 numerical failure (a diagnostics.json is written next to the outputs).

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kac/empirics.hpp"
#include "kac/errors.hpp"
#include "kac/event_io.hpp"
#include "kac/kinetics.hpp"
#include "kac/ldp.hpp"
#include "kac/oracle.hpp"
#include "kac/sampler.hpp"
#include "kac/simulator.hpp"
#include "kac/tilt.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace kac;

namespace {

/// A field-level configuration problem.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& msg) : std::runtime_error(field + ": " + msg) {}
};

/// What every output file carries: version, command, master seed and the resolved options.
struct Provenance {
  std::string command;
  std::uint64_t seed = 0;
  json config = json::object();

  json to_json() const {
    json j;
    j["version"] = KAC_VERSION;
    j["command"] = command;
    j["seed"] = seed;
    j["config"] = config;
    return j;
  }
  std::string csv_comment() const { return "# " + to_json().dump() + "\n"; }
};

json resolved_options(const CLI::App& sub) {
  json out = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    const std::string name = opt->get_single_name();
    if (name.empty() || name == "help") continue;
    if (opt->count() > 0) {
      const auto& results = opt->results();
      std::string joined;
      for (std::size_t k = 0; k < results.size(); ++k) joined += (k ? "," : "") + results[k];
      out[name] = opt->get_expected_min() == 0 && joined.empty() ? "true" : joined;
    } else {
      out[name] = opt->get_default_str();
    }
  }
  return out;
}

std::ofstream open_output(const fs::path& dir, const std::string& name) {
  fs::create_directories(dir);
  std::ofstream os(dir / name, std::ios::binary);
  if (!os) throw ConfigError("out", "cannot write " + (dir / name).string());
  os.precision(17);
  return os;
}

void write_json(const fs::path& dir, const std::string& name, const json& j) {
  auto os = open_output(dir, name);
  os << j.dump(2) << '\n';
}

BaseMeasure parse_measure(const std::string& spec) {
  try {
    return BaseMeasure::parse(spec);
  } catch (const std::exception& ex) {
    throw ConfigError("m", ex.what());
  }
}

std::vector<double> uniform_grid(double t1, std::size_t points) {
  if (points < 2) throw ConfigError("points", "need at least 2 grid points");
  std::vector<double> g(points);
  for (std::size_t k = 0; k < points; ++k) g[k] = t1 * static_cast<double>(k) / static_cast<double>(points - 1);
  g.back() = t1;
  return g;
}

json estimate_json(const Estimate& e) { return json{{"mean", e.mean}, {"std_error", e.std_error}}; }

json number_or_inf(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : "-inf";
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string m = "point:1";
  double e = std::nan("");
  std::size_t n = 1000;
  double horizon = 1.0;
  std::string kernel = "base";
  double t_star = 0.5;
  double delta = 0.1;
  std::uint64_t seed = 1;
  std::string out = ".";
  std::size_t grid_points = 101;
  std::size_t flow_bins = 1000;
  std::size_t atom_cap = 1'000'000;
  std::size_t spill_threshold = 0;
};

void cmd_simulate(const SimulateArgs& a, const Provenance& prov) {
  const BaseMeasure m = parse_measure(a.m);
  const double e = std::isnan(a.e) ? m.mean() : a.e;
  if (a.n < 2) throw ConfigError("n", "need at least two particles");
  if (!(a.horizon > 0.0)) throw ConfigError("T", "must be positive");
  if (a.kernel == "tilted" && !(a.delta > 0.0 && a.delta < a.t_star && a.t_star < a.horizon)) {
    throw ConfigError("delta", "need 0 < delta < tstar < T");
  }
  // the path uses stream 0 of the master seed
  Rng rng = make_rng(a.seed, 0);
  const Configuration cfg0 = sample_microcanonical(m, a.n, e, rng);

  const fs::path dir(a.out);
  EventLog log(cfg0.size(), cfg0.total(), a.horizon, a.seed, a.kernel);
  if (a.spill_threshold > 0) {
    fs::create_directories(dir);
    log.set_spill((dir / "events.spill.jsonl").string(), a.spill_threshold);
  }
  auto sink = [&](const Event& ev) { log.append(ev); };
  if (a.kernel == "base") {
    simulate_base(cfg0, a.horizon, rng, a.seed, sink);
  } else {
    simulate_tilted(cfg0, a.horizon, a.t_star, a.delta, rng, a.seed, sink);
  }

  {
    auto os = open_output(dir, "events.jsonl");
    write_event_log(os, log, &cfg0, prov.to_json().dump());
  }
  {
    auto os = open_output(dir, "measure.csv");
    os << prov.csv_comment();
    write_measure_path_csv(os, measure_path(log, cfg0, uniform_grid(a.horizon, a.grid_points)));
  }
  {
    auto os = open_output(dir, "flow.csv");
    os << prov.csv_comment();
    write_flow_csv(os, empirical_flow(log, a.atom_cap, a.flow_bins));
  }
  std::cout << "simulate: " << log.size() << " events, outputs in " << dir.string() << "\n";
}

// ---------------------------------------------------------------- solve-be / solve-mbe

struct SolveArgs {
  std::string m = "geom:0.5";
  double horizon = 1.0;
  double dt = 1e-3;
  std::size_t points = 101;
  Energy cutoff = 0;
  double leak_tolerance = 1e-6;
  double flux_floor = 1e-12;
  bool adaptive = true;
  std::string out = ".";
};

void write_path(const fs::path& dir, const std::string& stem, const KineticPath& path, double flux_floor,
                const Provenance& prov) {
  {
    auto os = open_output(dir, stem + "_path.csv");
    os << prov.csv_comment();
    write_kinetic_path_csv(os, path);
  }
  auto os = open_output(dir, stem + "_flux.csv");
  os << prov.csv_comment();
  write_flux_csv(os, path, flux_floor);
}

void cmd_solve_be(const SolveArgs& a, const Provenance& prov) {
  const BaseMeasure m = parse_measure(a.m);
  if (!(a.horizon > 0.0)) throw ConfigError("T", "must be positive");
  const Energy cutoff = a.cutoff > 0 ? a.cutoff : default_be_cutoff(m);
  const auto path = solve_be(tabulate(m, cutoff), uniform_grid(a.horizon, a.points), a.dt);
  write_path(a.out, "be", path, a.flux_floor, prov);
  const KineticState& last = path.states.back();
  json summary = prov.to_json();
  summary["cutoff"] = cutoff;
  summary["final_mass"] = last.total_mass();
  summary["final_energy"] = last.energy();
  summary["leak"] = json{{"mass", last.leak.mass}, {"energy", last.leak.energy}};
  write_json(a.out, "be_summary.json", summary);
  std::cout << "solve-be: cutoff " << cutoff << ", final energy " << last.energy() << "\n";
}

void cmd_solve_mbe(const SolveArgs& a, const Provenance& prov) {
  const BaseMeasure m = parse_measure(a.m);
  if (!(a.horizon > 0.0)) throw ConfigError("T", "must be positive");
  if (a.points < 3 || a.points % 2 == 0) throw ConfigError("points", "must be odd and at least 3");
  MbeOptions opts;
  opts.dtau = a.dt;
  opts.cutoff = a.cutoff;
  opts.energy_leak_tolerance = a.leak_tolerance;
  opts.adaptive = a.adaptive;
  const auto path = solve_mbe(initial_state(m), log_time_grid(a.horizon, a.points), opts);
  write_path(a.out, "mbe", path, a.flux_floor, prov);
  const auto r = check_evaporation_bounds(path);
  json report = prov.to_json();
  report["level_bound_holds"] = r.level_bound_holds;
  report["worst_level_ratio"] = r.worst_level_ratio;
  report["max_xi"] = r.max_xi;
  report["c_mass"] = r.c_mass;
  report["c_log"] = r.c_log;
  report["c_mass_stable"] = r.c_mass_stable;
  report["c_log_stable"] = r.c_log_stable;
  report["zero_level_monotone"] = r.zero_level_monotone;
  json dyadic = json::array();
  for (int n = 0; n <= 10; ++n) dyadic.push_back(dyadic_energy_residual(path, n));
  report["dyadic_energy_residuals"] = dyadic;
  report["final_cutoff"] = path.states.back().cutoff();
  report["final_energy_leak"] = path.states.back().leak.energy;
  write_json(a.out, "mbe_report.json", report);
  std::cout << "solve-mbe: max xi " << r.max_xi << ", final cutoff " << path.states.back().cutoff() << "\n";
}

// ---------------------------------------------------------------- rate

struct RateArgs {
  std::string path = "lln";
  std::string m = "point:1";
  double e = std::nan("");
  double horizon = 1.0;
  double t_star = 0.5;
  double delta = 0.1;
  std::vector<double> delta_grid;
  double dt = 1e-3;
  std::size_t points = 101;
  std::string states;
  std::string flux;
  std::string out = ".";
};

json rate_entry(const KineticState& pi0, const KineticPath& path, const BaseMeasure& m, double e) {
  return json::parse(to_json(total_cost(pi0, path, m, e)));
}

void cmd_rate(const RateArgs& a, const Provenance& prov) {
  const BaseMeasure m = parse_measure(a.m);
  const double e = std::isnan(a.e) ? m.mean() : a.e;
  json out = prov.to_json();
  out["path"] = a.path;
  if (a.path == "lln") {
    const auto path = solve_be(tabulate(m, default_be_cutoff(m)), uniform_grid(a.horizon, a.points), a.dt);
    out["rate"] = rate_entry(path.states.front(), path, m, e);
  } else if (a.path == "bar") {
    const auto path = build_bar_path(m, e, a.t_star, a.horizon);
    out["rate"] = rate_entry(path.states.front(), path, m, e);
    const BarCost direct = bar_cost_direct(m, e, a.t_star, a.horizon);
    out["direct"] = json{{"J", direct.total},
                         {"first_term", direct.first_term},
                         {"second_term", direct.second_term},
                         {"second_term_bound_form", direct.second_term_bound_form},
                         {"tail_bound", direct.tail_bound},
                         {"alpha_max", direct.alpha_max},
                         {"max_cutoff", direct.max_cutoff}};
  } else if (a.path == "bar-delta") {
    std::vector<double> deltas = a.delta_grid.empty() ? std::vector<double>{a.delta} : a.delta_grid;
    json entries = json::array();
    std::vector<double> values;
    for (double d : deltas) {
      if (!(d > 0.0 && d < a.t_star)) throw ConfigError("delta-grid", "need 0 < delta < tstar");
      const auto path = build_bar_path_delta(m, e, a.t_star, d, a.horizon);
      json entry = rate_entry(path.states.front(), path, m, e);
      BarCostOptions opts;
      opts.delta = d;
      entry["delta"] = d;
      entry["J_direct"] = bar_cost_direct(m, e, a.t_star, a.horizon, opts).total;
      values.push_back(entry["I"].is_number() ? entry["I"].get<double>() : INFINITY);
      entries.push_back(entry);
    }
    out["entries"] = entries;
    if (values.size() >= 2) {
      bool monotone_up = true;
      bool monotone_down = true;
      bool shrinking = true;
      json increments = json::array();
      for (std::size_t k = 1; k < values.size(); ++k) {
        const double inc = values[k] - values[k - 1];
        increments.push_back(inc);
        monotone_up = monotone_up && inc >= 0.0;
        monotone_down = monotone_down && inc <= 0.0;
        if (k >= 2) shrinking = shrinking && std::abs(inc) < std::abs(values[k - 1] - values[k - 2]);
      }
      out["trend"] = json{{"monotone", monotone_up || monotone_down},
                          {"increments", increments},
                          {"increments_shrinking", shrinking}};
    }
  } else if (a.path == "file") {
    if (a.states.empty()) throw ConfigError("states", "required with --path file");
    std::ifstream states(a.states);
    if (!states) throw ConfigError("states", "cannot open " + a.states);
    std::ifstream flux;
    if (!a.flux.empty()) {
      flux.open(a.flux);
      if (!flux) throw ConfigError("flux", "cannot open " + a.flux);
    }
    const auto path = read_kinetic_path_csv(states, a.flux.empty() ? nullptr : &flux);
    if (!path.has_flux()) throw ConfigError("flux", "required with --path file");
    out["rate"] = rate_entry(path.states.front(), path, m, e);
  } else {
    throw ConfigError("path", "expected lln, bar, bar-delta or file");
  }
  write_json(a.out, "rate.json", out);
  std::cout << out.dump(2) << "\n";
}

// ---------------------------------------------------------------- oracle

struct OracleArgs {
  std::size_t n = 2;
  Energy e_total = 2;
  std::vector<double> times;
  std::vector<Energy> init;
  std::size_t cap = 200000;
  std::string out = ".";
};

void cmd_oracle(const OracleArgs& a, const Provenance& prov) {
  if (a.n < 2) throw ConfigError("n", "need at least two particles");
  if (a.e_total < 0) throw ConfigError("E", "must be non-negative");
  const auto space = enumerate_states(a.n, a.e_total, a.cap);
  const auto gen = generator_matrix<Rational>(space);
  {
    auto os = open_output(a.out, "generator.csv");
    os << prov.csv_comment();
    write_generator_csv(os, space, gen);
  }
  if (!a.times.empty()) {
    std::vector<Energy> start = a.init;
    if (start.empty()) {
      start.assign(a.n, 0);
      start[0] = a.e_total;
    }
    std::size_t start_index = 0;
    try {
      start_index = space.index_of(start);
    } catch (const std::out_of_range&) {
      throw ConfigError("init", "state is not in the configuration space");
    }
    Eigen::RowVectorXd init = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(space.size()));
    init(static_cast<Eigen::Index>(start_index)) = 1.0;
    const Eigen::MatrixXd g = to_double(gen);
    auto os = open_output(a.out, "transient.csv");
    os << prov.csv_comment() << "t,state,probability\n";
    for (double t : a.times) {
      if (!(t >= 0.0)) throw ConfigError("t", "times must be non-negative");
      const Eigen::RowVectorXd p = transient_distribution(g, t, init);
      for (std::size_t k = 0; k < space.size(); ++k) {
        os << t << ',';
        for (std::size_t i = 0; i < a.n; ++i) os << (i ? " " : "") << space[k][i];
        os << ',' << p(static_cast<Eigen::Index>(k)) << '\n';
      }
    }
  }
  std::cout << "oracle: " << space.size() << " states\n";
}

// ---------------------------------------------------------------- experiment

struct ExperimentArgs {
  std::string m = "point:1";
  double e = std::nan("");
  double horizon = 1.0;
  double t_star = 0.5;
  double delta = 0.1;
  std::vector<std::size_t> n_grid = {50, 100, 200, 400};
  std::size_t replicas = 100000;
  std::size_t chunk = 10000;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  bool self_test = false;
  bool resume = true;
  double slope_gate = 0.15;
  std::string out = "experiment";
};

json record_to_json(const ReplicaRecord& r) {
  return json::array({r.index, r.seed, r.log_rn.value, r.log_rn.diagonal, r.log_rn.impossible, r.events,
                      r.observables});
}

ReplicaRecord record_from_json(const json& j) {
  ReplicaRecord r;
  r.index = j.at(0).get<std::uint64_t>();
  r.seed = j.at(1).get<std::uint64_t>();
  r.log_rn.value = j.at(2).get<double>();
  r.log_rn.diagonal = j.at(3).get<double>();
  r.log_rn.impossible = j.at(4).get<bool>();
  r.events = j.at(5).get<std::size_t>();
  r.observables = j.at(6).get<std::vector<double>>();
  return r;
}

// Checkpoints hold the records of one N. They are reused only when the
// scenario, seed and law match the current run.
ReplicaStats load_checkpoint(const fs::path& file, const json& identity, std::size_t n, ReplicaLaw law) {
  ReplicaStats stats;
  stats.n = n;
  stats.law = law;
  std::ifstream is(file);
  if (!is) return stats;
  try {
    const json j = json::parse(is);
    if (j.at("identity") != identity) {
      std::cerr << "experiment: ignoring checkpoint " << file.string() << " from a different configuration\n";
      return stats;
    }
    for (const auto& r : j.at("records")) stats.records.push_back(record_from_json(r));
  } catch (const json::exception& ex) {
    throw CorruptionError("checkpoint " + file.string() + ": " + ex.what());
  }
  return stats;
}

void save_checkpoint(const fs::path& file, const json& identity, const Provenance& prov, const ReplicaStats& stats) {
  json j = prov.to_json();
  j["identity"] = identity;
  json records = json::array();
  for (const auto& r : stats.records) records.push_back(record_to_json(r));
  j["records"] = std::move(records);
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    os << j.dump() << '\n';
  }
  fs::rename(tmp, file);
}

void cmd_experiment(const ExperimentArgs& a, const Provenance& prov) {
  Scenario sc;
  sc.m = parse_measure(a.m);
  sc.e = std::isnan(a.e) ? sc.m.mean() : a.e;
  sc.tilt = TiltParams{a.t_star, a.delta, a.horizon, a.self_test};
  if (!(a.delta > 0.0 && a.delta < a.t_star && a.t_star < a.horizon)) {
    throw ConfigError("delta", "need 0 < delta < tstar < T");
  }
  if (a.n_grid.empty()) throw ConfigError("n-grid", "must not be empty");
  if (a.replicas == 0) throw ConfigError("replicas", "must be positive");
  if (a.chunk == 0) throw ConfigError("chunk", "must be positive");
  const unsigned threads = a.threads > 0 ? a.threads : std::max(1u, std::thread::hardware_concurrency());
  const ReplicaLaw law = a.self_test ? ReplicaLaw::SelfTest : ReplicaLaw::Tilted;
  const fs::path dir(a.out);
  fs::create_directories(dir);

  json result = prov.to_json();
  // targets and the rate of the regularized path
  const KineticPath target = build_bar_path_delta(sc.m, sc.e, a.t_star, a.delta, a.horizon);
  const RateBreakdown rate = total_cost(target.states.front(), target, sc.m, sc.e);
  BarCostOptions direct_opts;
  direct_opts.delta = a.delta;
  const double rate_value = rate.total.is_finite() ? rate.total.value() : INFINITY;
  result["rate"] = json::parse(to_json(rate));
  result["rate_direct_J"] = bar_cost_direct(sc.m, sc.e, a.t_star, a.horizon, direct_opts).total;
  const NeighborhoodSpec nbhd = default_neighborhood(sc.m, sc.e, sc.tilt);
  json nb;
  nb["checkpoints"] = nbhd.checkpoints;
  nb["mean_targets"] = nbhd.mean_targets;
  nb["mean_tolerance"] = nbhd.mean_tolerance;
  nb["mean_cap"] = nbhd.mean_cap;
  json flows = json::array();
  for (std::size_t k = 0; k < nbhd.flows.size(); ++k) {
    flows.push_back(json{{"name", nbhd.flows[k].name}, {"target", nbhd.flow_targets[k]}});
  }
  nb["flows"] = flows;
  nb["flow_rel_tolerance"] = nbhd.flow_rel_tolerance;
  result["neighborhood"] = nb;
  result["per_n"] = json::array();

  auto write_result = [&] { write_json(dir, "result.json", result); };
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<double> hit_rates;
  try {
    for (std::size_t n : a.n_grid) {
      const json identity = {{"m", sc.m.spec()}, {"e", sc.e},           {"tstar", a.t_star},
                             {"delta", a.delta}, {"T", a.horizon},      {"seed", a.seed},
                             {"n", n},           {"self_test", a.self_test}};
      const fs::path ckpt = dir / ("checkpoint_N" + std::to_string(n) + ".json");
      ReplicaStats stats = a.resume ? load_checkpoint(ckpt, identity, n, law) : ReplicaStats{n, law, {}};
      if (stats.records.size() > a.replicas) stats.records.resize(a.replicas);
      const std::size_t resumed = stats.records.size();
      // replica k is seeded from (seed + n, k), so chunks and restarts reproduce the same records
      const std::uint64_t master = derive_seed(a.seed, n);
      while (stats.records.size() < a.replicas) {
        const std::size_t first = stats.records.size();
        const std::size_t count = std::min(a.chunk, a.replicas - first);
        stats.merge(run_replicas(sc, n, count, master, law, nbhd, threads, first));
        save_checkpoint(ckpt, identity, prov, stats);
        std::cerr << "experiment: N=" << n << " " << stats.records.size() << "/" << a.replicas << "\n";
      }
      const Estimate ent = entropy_estimate(stats);
      const RareEstimate est = estimate_rare_probability(stats, nbhd);
      json entry;
      entry["n"] = n;
      entry["replicas"] = stats.records.size();
      entry["resumed_records"] = resumed;
      entry["entropy"] = estimate_json(ent);
      entry["diagonal"] = estimate_json(diagonal_estimate(stats));
      entry["weight_mass"] = estimate_json(weight_mass(stats));
      entry["p_hat"] = est.p_hat;
      entry["std_error"] = est.std_error;
      entry["relative_std_error"] = number_or_inf(est.relative_std_error);
      entry["log_p_hat"] = number_or_inf(est.log_p_hat);
      entry["log_p_hat_over_n"] = number_or_inf(est.log_p_hat_over_n);
      entry["hit_rate"] = est.hit_rate;
      entry["hits"] = est.hits;
      if (est.hits == 0) entry["upper_bound"] = est.upper_bound;
      result["per_n"].push_back(entry);
      write_result();
      hit_rates.push_back(est.hit_rate);
      if (est.hits > 0) {
        xs.push_back(static_cast<double>(n));
        ys.push_back(est.log_p_hat);
      }
    }
  } catch (...) {
    result["error"] = "interrupted; per-N results above and checkpoints are kept";
    write_result();
    throw;
  }

  json slope_report;
  if (xs.size() >= 2) {
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      mx += xs[k] / static_cast<double>(xs.size());
      my += ys[k] / static_cast<double>(xs.size());
    }
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      sxy += (xs[k] - mx) * (ys[k] - my);
      sxx += (xs[k] - mx) * (xs[k] - mx);
    }
    const double slope = sxy / sxx;
    const double gap = std::abs(slope + rate_value) / rate_value;
    slope_report["slope"] = slope;
    slope_report["minus_rate"] = -rate_value;
    slope_report["relative_gap"] = gap;
    slope_report["gate"] = a.slope_gate;
    slope_report["within_gate"] = gap <= a.slope_gate;
  } else {
    slope_report["slope"] = nullptr;
    slope_report["note"] = "fewer than two N values with hits";
  }
  bool hit_monotone = true;
  for (std::size_t k = 1; k < hit_rates.size(); ++k) hit_monotone = hit_monotone && hit_rates[k] >= hit_rates[k - 1];
  slope_report["hit_rate_non_decreasing"] = hit_monotone;
  result["slope"] = slope_report;
  write_result();
  std::cout << slope_report.dump(2) << "\n";
}

// ---------------------------------------------------------------- verify

struct VerifyArgs {
  std::uint64_t seed = 1;
  std::string out = ".";
};

bool cmd_verify(const VerifyArgs& a, const Provenance& prov) {
  json checks = json::array();
  bool all = true;
  auto record = [&](const std::string& name, bool ok, const std::string& detail) {
    checks.push_back(json{{"check", name}, {"pass", ok}, {"detail", detail}});
    std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << "\n";
    all = all && ok;
  };

  {
    bool ok = true;
    for (const auto& [n, e] : std::vector<std::pair<std::size_t, Energy>>{{2, 2}, {3, 4}, {4, 4}, {3, 6}}) {
      const auto space = enumerate_states(n, e);
      const auto g = generator_matrix<Rational>(space);
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        Rational row(0);
        for (Eigen::Index c = 0; c < g.cols(); ++c) {
          row += g(r, c);
          ok = ok && g(r, c) == g(c, r);
        }
        ok = ok && row == Rational(0);
      }
    }
    record("generator", ok, "exact zero row sums and symmetry on four state spaces");
  }
  {
    double worst = 0.0;
    for (double p : {0.3, 0.5, 0.7}) {
      Eigen::VectorXd f(201);
      for (Eigen::Index k = 0; k <= 200; ++k) f(k) = p * std::pow(1.0 - p, static_cast<double>(k));
      worst = std::max(worst, be_rhs(f).head(100).cwiseAbs().maxCoeff());
    }
    record("stationary family", worst < 1e-10, "sup |rhs| = " + std::to_string(worst));
  }
  {
    std::size_t bad = 0;
    std::size_t nonzero = 0;
    for (std::uint64_t run = 0; run < 100; ++run) {
      Rng rng = make_rng(a.seed, run);
      std::vector<Energy> e(2 + uniform_below(rng, 60));
      for (auto& v : e) v = static_cast<Energy>(uniform_below(rng, 5));
      const Configuration cfg0(e);
      const auto log = simulate_base(cfg0, 1.0, rng);
      Configuration cur = cfg0;
      log.for_each([&](const Event& ev) {
        if (EnergyPair(cur[ev.i], cur[ev.j]) != ev.in || ev.in.sum() != ev.out.sum()) ++bad;
        cur.set_pair(ev.i, ev.j, ev.out.lo, ev.out.hi);
      });
      if (cur.total() != cfg0.total()) ++bad;
      std::vector<std::int64_t> table(8);
      for (auto& v : table) v = static_cast<std::int64_t>(uniform_below(rng, 201)) - 100;
      const auto path = measure_path(log, cfg0, std::vector<double>{0.0, 0.5, 1.0});
      if (balance_residual_exact(path, empirical_flow(log), table, 3) != Rational(0)) ++nonzero;
    }
    record("conservation", bad == 0, std::to_string(bad) + " violations in 100 runs");
    record("balance", nonzero == 0, std::to_string(nonzero) + " nonzero exact residuals in 100 runs");
  }
  {
    Scenario sc;
    const auto stats = run_replicas(sc, 50, 100, a.seed, ReplicaLaw::SelfTest, NeighborhoodSpec::everything());
    bool zero = true;
    for (const auto& r : stats.records) zero = zero && r.log_rn.value == 0.0 && !r.log_rn.impossible;
    record("self-test", zero, "log-ratio identically zero when the tilted kernel is the base kernel");
    const auto base = run_replicas(sc, 4, 20000, a.seed + 1, ReplicaLaw::Base, NeighborhoodSpec::everything());
    const Estimate lr = likelihood_ratio_mass(base);
    record("likelihood ratio mass", std::abs(lr.mean - 1.0) <= 3.0 * lr.std_error,
           std::to_string(lr.mean) + " +- " + std::to_string(lr.std_error) + " at N=4");
  }
  {
    const auto path = solve_mbe(KineticState::delta(1, 8), log_time_grid(100.0, 101));
    double worst = 0.0;
    for (std::size_t k = 0; k < path.size(); ++k) {
      worst = std::max(worst, std::abs(path.states[k].mass(1) - 1.0 / (1.0 + path.grid[k])));
    }
    const auto r = check_evaporation_bounds(path);
    record("modified equation", worst < 1e-10 && r.level_bound_holds,
           "odd closed form " + std::to_string(worst) + ", max xi " + std::to_string(r.max_xi));
  }
  json out = prov.to_json();
  out["checks"] = checks;
  out["pass"] = all;
  write_json(a.out, "verify.json", out);
  return all;
}

int exit_with(int code, const std::string& kind, const std::string& what, const std::string& out_dir) {
  std::cerr << "kac: " << kind << ": " << what << "\n";
  if (code == 4) {
    try {
      json d;
      d["version"] = KAC_VERSION;
      d["error"] = kind;
      d["message"] = what;
      write_json(out_dir, "diagnostics.json", d);
    } catch (...) {
    }
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kac walk simulator, kinetic solvers, rate functions and rare-event estimation"};
  app.set_version_flag("--version", std::string(KAC_VERSION));
  app.set_config("--config", "", "key = value file, one [section] per subcommand; flags win");
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "run the base or tilted particle system");
  simulate->add_option("--m", sim.m, "base measure: point:k, geom:p or finite:w0,w1,...");
  simulate->add_option("--e", sim.e, "energy per particle (default: mean of m)");
  simulate->add_option("--n", sim.n, "number of particles")->check(CLI::PositiveNumber);
  simulate->add_option("--T", sim.horizon, "horizon");
  simulate->add_option("--kernel", sim.kernel)->check(CLI::IsMember({"base", "tilted"}));
  simulate->add_option("--tstar", sim.t_star);
  simulate->add_option("--delta", sim.delta);
  simulate->add_option("--seed", sim.seed, "master seed");
  simulate->add_option("--out", sim.out, "output directory");
  simulate->add_option("--grid-points", sim.grid_points, "snapshots of the empirical measure");
  simulate->add_option("--flow-bins", sim.flow_bins, "time bins once the flow has more than atom-cap events");
  simulate->add_option("--atom-cap", sim.atom_cap);
  simulate->add_option("--spill-threshold", sim.spill_threshold, "events kept in memory before spilling (0: never)");

  SolveArgs be;
  auto* solve_be_cmd = app.add_subcommand("solve-be", "solve the Boltzmann equation from m");
  solve_be_cmd->add_option("--m", be.m);
  solve_be_cmd->add_option("--T", be.horizon);
  solve_be_cmd->add_option("--dt", be.dt, "RK4 step");
  solve_be_cmd->add_option("--points", be.points, "recorded times");
  solve_be_cmd->add_option("--cutoff", be.cutoff, "0 picks one from m");
  solve_be_cmd->add_option("--flux-floor", be.flux_floor, "flux atoms below this density are not written");
  solve_be_cmd->add_option("--out", be.out);

  SolveArgs mbe;
  mbe.m = "point:1";
  mbe.horizon = 1000.0;
  mbe.dt = 1e-3;
  mbe.points = 201;
  auto* solve_mbe_cmd = app.add_subcommand("solve-mbe", "solve the modified equation from m");
  solve_mbe_cmd->add_option("--m", mbe.m);
  solve_mbe_cmd->add_option("--T", mbe.horizon, "final time of the modified equation");
  solve_mbe_cmd->add_option("--dtau", mbe.dt, "step in log(1+t)");
  solve_mbe_cmd->add_option("--points", mbe.points, "recorded times, uniform in log(1+t); odd");
  solve_mbe_cmd->add_option("--cutoff", mbe.cutoff, "initial cutoff, 0 picks one");
  solve_mbe_cmd->add_option("--leak-tolerance", mbe.leak_tolerance);
  solve_mbe_cmd->add_flag("--adaptive,!--no-adaptive", mbe.adaptive, "double the cutoff until the leak is small");
  solve_mbe_cmd->add_option("--flux-floor", mbe.flux_floor, "flux atoms below this density are not written");
  solve_mbe_cmd->add_option("--out", mbe.out);

  RateArgs rate;
  auto* rate_cmd = app.add_subcommand("rate", "evaluate H, J and I on a path");
  rate_cmd->add_option("--path", rate.path, "lln, bar, bar-delta or file")
      ->check(CLI::IsMember({"lln", "bar", "bar-delta", "file"}));
  rate_cmd->add_option("--m", rate.m);
  rate_cmd->add_option("--e", rate.e, "energy per particle (default: mean of m)");
  rate_cmd->add_option("--T", rate.horizon);
  rate_cmd->add_option("--tstar", rate.t_star);
  rate_cmd->add_option("--delta", rate.delta);
  rate_cmd->add_option("--delta-grid", rate.delta_grid, "comma-separated deltas for bar-delta")->delimiter(',');
  rate_cmd->add_option("--dt", rate.dt);
  rate_cmd->add_option("--points", rate.points);
  rate_cmd->add_option("--states", rate.states, "path CSV (t,epsilon,mass)");
  rate_cmd->add_option("--flux", rate.flux, "flux CSV (t,e1,e2,e1p,e2p,density)");
  rate_cmd->add_option("--out", rate.out);

  OracleArgs orc;
  auto* oracle = app.add_subcommand("oracle", "exact generator of the base chain for small N, E");
  oracle->add_option("--n", orc.n);
  oracle->add_option("--E", orc.e_total, "total energy");
  oracle->add_option("--t", orc.times, "comma-separated times for transient distributions")->delimiter(',');
  oracle->add_option("--init", orc.init, "comma-separated initial energies")->delimiter(',');
  oracle->add_option("--cap", orc.cap, "largest state space to enumerate");
  oracle->add_option("--out", orc.out);

  ExperimentArgs exp;
  auto* experiment = app.add_subcommand("experiment", "importance-sampling experiment over an N-grid");
  experiment->add_option("--m", exp.m);
  experiment->add_option("--e", exp.e, "energy per particle (default: mean of m)");
  experiment->add_option("--T", exp.horizon);
  experiment->add_option("--tstar", exp.t_star);
  experiment->add_option("--delta", exp.delta);
  experiment->add_option("--n-grid", exp.n_grid)->delimiter(',');
  experiment->add_option("--replicas", exp.replicas, "replicas per N");
  experiment->add_option("--chunk", exp.chunk, "replicas between checkpoints");
  experiment->add_option("--seed", exp.seed, "master seed");
  experiment->add_option("--threads", exp.threads, "worker threads (0: logical cores)");
  experiment->add_flag("--self-test", exp.self_test, "use the base kernel as the tilted kernel");
  experiment->add_flag("--resume,!--no-resume", exp.resume, "reuse matching per-N checkpoints");
  experiment->add_option("--slope-gate", exp.slope_gate, "relative tolerance of the slope check");
  experiment->add_option("--out", exp.out);

  VerifyArgs ver;
  auto* verify = app.add_subcommand("verify", "run the invariant checks");
  verify->add_option("--seed", ver.seed);
  verify->add_option("--out", ver.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  Provenance prov;
  prov.command = sub->get_name();
  prov.config = resolved_options(*sub);
  if (prov.config.contains("e") && prov.config["e"] == "nan") prov.config["e"] = "mean of m";
  const std::vector<std::pair<const CLI::App*, std::pair<std::string, bool>>> flags = {
      {experiment, {"self-test", exp.self_test}},
      {experiment, {"resume", exp.resume}},
      {solve_mbe_cmd, {"adaptive", mbe.adaptive}}};
  for (const auto& [owner, flag] : flags) {
    if (owner == sub) prov.config[flag.first] = flag.second;
  }
  const std::map<const CLI::App*, std::pair<std::uint64_t, std::string>> seed_and_dir = {
      {simulate, {sim.seed, sim.out}}, {experiment, {exp.seed, exp.out}}, {verify, {ver.seed, ver.out}},
      {solve_be_cmd, {0, be.out}},     {solve_mbe_cmd, {0, mbe.out}},     {rate_cmd, {0, rate.out}},
      {oracle, {0, orc.out}}};
  prov.seed = seed_and_dir.at(sub).first;
  const std::string out_dir = seed_and_dir.at(sub).second;

  try {
    if (sub == simulate) cmd_simulate(sim, prov);
    if (sub == solve_be_cmd) cmd_solve_be(be, prov);
    if (sub == solve_mbe_cmd) cmd_solve_mbe(mbe, prov);
    if (sub == rate_cmd) cmd_rate(rate, prov);
    if (sub == oracle) cmd_oracle(orc, prov);
    if (sub == experiment) cmd_experiment(exp, prov);
    if (sub == verify && !cmd_verify(ver, prov)) {
      return exit_with(4, "verification failed", "see verify.json", out_dir);
    }
  } catch (const ConfigError& ex) {
    return exit_with(2, "config error", ex.what(), out_dir);
  } catch (const CorruptionError& ex) {
    return exit_with(2, "input error", ex.what(), out_dir);
  } catch (const ResourceError& ex) {
    return exit_with(3, "resource cap", ex.what(), out_dir);
  } catch (const NumericalError& ex) {
    return exit_with(4, "numerical failure", ex.what(), out_dir);
  } catch (const std::invalid_argument& ex) {
    return exit_with(2, "config error", ex.what(), out_dir);
  } catch (const std::domain_error& ex) {
    return exit_with(2, "config error", ex.what(), out_dir);
  } catch (const std::exception& ex) {
    return exit_with(1, "error", ex.what(), out_dir);
  }
  return 0;
}
