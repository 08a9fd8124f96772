#include "kac/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "kac/errors.hpp"

namespace kac {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<Energy> support_of(const std::vector<double>& w) {
  std::vector<Energy> s;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k] > 0.0) s.push_back(static_cast<Energy>(k));
  }
  return s;
}

// log Σ_k w_k e^{γ k} over the positive weights.
double finite_log_partition(const std::vector<double>& w, double gamma) {
  double peak = -kInf;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k] > 0.0) peak = std::max(peak, gamma * static_cast<double>(k) + std::log(w[k]));
  }
  double acc = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k] > 0.0) acc += std::exp(gamma * static_cast<double>(k) + std::log(w[k]) - peak);
  }
  return peak + std::log(acc);
}

void check_gamma(const BaseMeasure& m, double gamma) {
  if (!(gamma < m.gamma_star())) {
    throw std::domain_error("gamma must be below gamma_star of the base measure");
  }
}

}  // namespace

BaseMeasure BaseMeasure::point_mass(Energy e0) {
  if (e0 < 1) throw std::invalid_argument("point mass atom must be >= 1");
  BaseMeasure m;
  m.family_ = Family::PointMass;
  m.e0_ = e0;
  return m;
}

BaseMeasure BaseMeasure::geometric(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("geometric parameter must lie in (0, 1)");
  BaseMeasure m;
  m.family_ = Family::Geometric;
  m.p_ = p;
  return m;
}

BaseMeasure BaseMeasure::finite_support(std::vector<double> weights) {
  if (weights.empty()) throw std::invalid_argument("finite support needs at least one weight");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("weights must be finite and >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw std::invalid_argument("weights must not all vanish");
  for (double& w : weights) w /= total;
  while (weights.size() > 1 && weights.back() == 0.0) weights.pop_back();

  const auto support = support_of(weights);
  if (support.size() > 1) {
    Energy g = 0;
    for (Energy s : support) g = std::gcd(g, s - support.front());
    if (g != 1) {
      throw std::invalid_argument("finite support generates a proper sub-lattice (gcd of differences != 1)");
    }
  }
  BaseMeasure m;
  m.family_ = Family::FiniteSupport;
  m.weights_ = std::move(weights);
  return m;
}

BaseMeasure BaseMeasure::parse(std::string_view spec) {
  const auto colon = spec.find(':');
  if (colon == std::string_view::npos) {
    throw std::invalid_argument("base measure spec must look like family:params");
  }
  const std::string family(spec.substr(0, colon));
  const std::string params(spec.substr(colon + 1));
  try {
    if (family == "point") {
      std::size_t used = 0;
      const long long e0 = std::stoll(params, &used);
      if (used != params.size()) throw std::invalid_argument("trailing characters");
      return point_mass(e0);
    }
    if (family == "geom") {
      std::size_t used = 0;
      const double p = std::stod(params, &used);
      if (used != params.size()) throw std::invalid_argument("trailing characters");
      return geometric(p);
    }
    if (family == "finite") {
      std::vector<double> w;
      std::stringstream ss(params);
      std::string item;
      while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        w.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument("trailing characters");
      }
      return finite_support(std::move(w));
    }
  } catch (const std::invalid_argument& err) {
    throw std::invalid_argument("bad base measure spec '" + std::string(spec) + "': " + err.what());
  } catch (const std::out_of_range&) {
    throw std::invalid_argument("bad base measure spec '" + std::string(spec) + "': value out of range");
  }
  throw std::invalid_argument("unknown base measure family '" + family + "'");
}

std::string BaseMeasure::spec() const {
  std::ostringstream os;
  os.precision(17);
  switch (family_) {
    case Family::PointMass:
      os << "point:" << e0_;
      break;
    case Family::Geometric:
      os << "geom:" << p_;
      break;
    case Family::FiniteSupport:
      os << "finite:";
      for (std::size_t k = 0; k < weights_.size(); ++k) os << (k ? "," : "") << weights_[k];
      break;
  }
  return os.str();
}

double BaseMeasure::pmf(Energy e) const {
  if (e < 0) return 0.0;
  switch (family_) {
    case Family::PointMass:
      return e == e0_ ? 1.0 : 0.0;
    case Family::Geometric:
      return p_ * std::pow(1.0 - p_, static_cast<double>(e));
    case Family::FiniteSupport:
      return static_cast<std::size_t>(e) < weights_.size() ? weights_[static_cast<std::size_t>(e)] : 0.0;
  }
  return 0.0;
}

double BaseMeasure::mean() const { return tilted_mean(*this, 0.0); }

double BaseMeasure::gamma_star() const {
  return family_ == Family::Geometric ? -std::log1p(-p_) : kInf;
}

bool BaseMeasure::is_degenerate() const {
  if (family_ == Family::PointMass) return true;
  if (family_ == Family::FiniteSupport) return support_of(weights_).size() == 1;
  return false;
}

Energy BaseMeasure::atom() const {
  if (family_ == Family::PointMass) return e0_;
  if (is_degenerate()) return support_of(weights_).front();
  throw std::logic_error("atom() on a non-degenerate measure");
}

Energy BaseMeasure::support_min() const {
  switch (family_) {
    case Family::PointMass:
      return e0_;
    case Family::Geometric:
      return 0;
    case Family::FiniteSupport:
      return support_of(weights_).front();
  }
  return 0;
}

Energy BaseMeasure::support_max() const {
  switch (family_) {
    case Family::PointMass:
      return e0_;
    case Family::Geometric:
      return -1;
    case Family::FiniteSupport:
      return support_of(weights_).back();
  }
  return 0;
}

double partition_function(const BaseMeasure& m, double gamma) {
  check_gamma(m, gamma);
  switch (m.family()) {
    case BaseMeasure::Family::PointMass:
      return std::exp(gamma * static_cast<double>(m.atom()));
    case BaseMeasure::Family::Geometric: {
      const double p = m.geometric_p();
      return p / (1.0 - (1.0 - p) * std::exp(gamma));
    }
    case BaseMeasure::Family::FiniteSupport:
      return std::exp(finite_log_partition(m.weights(), gamma));
  }
  return 0.0;
}

double tilted_pmf(const BaseMeasure& m, double gamma, Energy e) {
  check_gamma(m, gamma);
  if (e < 0) return 0.0;
  switch (m.family()) {
    case BaseMeasure::Family::PointMass:
      return m.pmf(e);
    case BaseMeasure::Family::Geometric: {
      const double r = (1.0 - m.geometric_p()) * std::exp(gamma);
      return (1.0 - r) * std::pow(r, static_cast<double>(e));
    }
    case BaseMeasure::Family::FiniteSupport: {
      const double w = m.pmf(e);
      if (w == 0.0) return 0.0;
      return std::exp(gamma * static_cast<double>(e) + std::log(w) - finite_log_partition(m.weights(), gamma));
    }
  }
  return 0.0;
}

double tilted_mean(const BaseMeasure& m, double gamma) {
  check_gamma(m, gamma);
  switch (m.family()) {
    case BaseMeasure::Family::PointMass:
      return static_cast<double>(m.atom());
    case BaseMeasure::Family::Geometric: {
      const double r = (1.0 - m.geometric_p()) * std::exp(gamma);
      return r / (1.0 - r);
    }
    case BaseMeasure::Family::FiniteSupport: {
      double acc = 0.0;
      for (std::size_t k = 0; k < m.weights().size(); ++k) {
        acc += static_cast<double>(k) * tilted_pmf(m, gamma, static_cast<Energy>(k));
      }
      return acc;
    }
  }
  return 0.0;
}

double tilted_variance(const BaseMeasure& m, double gamma) {
  check_gamma(m, gamma);
  switch (m.family()) {
    case BaseMeasure::Family::PointMass:
      return 0.0;
    case BaseMeasure::Family::Geometric: {
      const double r = (1.0 - m.geometric_p()) * std::exp(gamma);
      return r / ((1.0 - r) * (1.0 - r));
    }
    case BaseMeasure::Family::FiniteSupport: {
      const double mu = tilted_mean(m, gamma);
      double acc = 0.0;
      for (std::size_t k = 0; k < m.weights().size(); ++k) {
        const double d = static_cast<double>(k) - mu;
        acc += d * d * tilted_pmf(m, gamma, static_cast<Energy>(k));
      }
      return acc;
    }
  }
  return 0.0;
}

double gamma_for_mean(const BaseMeasure& m, double e) {
  constexpr double kMeanTol = 1e-12;
  if (m.is_degenerate()) {
    if (std::abs(e - static_cast<double>(m.atom())) > kMeanTol) {
      throw std::domain_error("degenerate base measure only reaches its atom as mean");
    }
    return 0.0;
  }
  const double lo_mean = static_cast<double>(m.support_min());
  const double hi_mean = m.support_max() < 0 ? kInf : static_cast<double>(m.support_max());
  if (!(e > lo_mean && e < hi_mean)) {
    throw std::domain_error("requested mean is not reachable by tilting the base measure");
  }

  double lo = -1.0;
  while (tilted_mean(m, lo) > e) lo *= 2.0;
  double hi = 1.0;
  if (std::isfinite(m.gamma_star())) {
    hi = m.gamma_star();
  } else {
    while (tilted_mean(m, hi) < e) hi *= 2.0;
  }
  // mean(hi) may be +inf at gamma_star; midpoints never touch it.
  for (int iter = 0; iter < 400; ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double mu = tilted_mean(m, mid);
    if (std::abs(mu - e) <= kMeanTol) return mid;
    (mu < e ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Energy microcanonical_total(std::size_t n, double e) {
  if (!(e >= 0.0)) throw std::invalid_argument("energy per particle must be >= 0");
  const double ne = static_cast<double>(n) * e;
  return static_cast<Energy>(std::floor(ne + 1e-9 * std::max(1.0, ne)));
}

Configuration sample_microcanonical(const BaseMeasure& m, std::size_t n, double e, Rng& rng) {
  if (n < 2) throw std::invalid_argument("need at least two particles");
  const Energy total = microcanonical_total(n, e);

  if (m.is_degenerate()) {
    const Energy a = m.atom();
    if (std::abs(e - static_cast<double>(a)) > 1e-12) {
      throw std::domain_error("point-mass initial law requires e equal to the atom");
    }
    return Configuration(std::vector<Energy>(n, a));
  }

  const double target = static_cast<double>(total) / static_cast<double>(n);
  const Energy smin = m.support_min();
  const Energy smax = m.support_max();
  if (total < smin * static_cast<Energy>(n) || (smax >= 0 && total > smax * static_cast<Energy>(n))) {
    throw std::domain_error("conditioned total energy has zero probability");
  }
  if (total == smin * static_cast<Energy>(n)) return Configuration(std::vector<Energy>(n, smin));
  if (smax >= 0 && total == smax * static_cast<Energy>(n)) {
    return Configuration(std::vector<Energy>(n, smax));
  }

  const double gamma = gamma_for_mean(m, target);
  const double sigma = std::sqrt(tilted_variance(m, gamma));
  const auto cap = static_cast<std::uint64_t>(
      std::ceil(1000.0 * std::sqrt(static_cast<double>(n)) * std::max(1.0, sigma)));

  // Per-draw sampler of the tilted law.
  std::vector<double> cdf;
  double log_ratio = 0.0;
  if (m.family() == BaseMeasure::Family::Geometric) {
    log_ratio = std::log1p(-m.geometric_p()) + gamma;  // log r, r < 1
  } else {
    double acc = 0.0;
    for (std::size_t k = 0; k < m.weights().size(); ++k) {
      acc += tilted_pmf(m, gamma, static_cast<Energy>(k));
      cdf.push_back(acc);
    }
    for (double& c : cdf) c /= acc;
  }
  auto draw = [&]() -> Energy {
    if (m.family() == BaseMeasure::Family::Geometric) {
      return static_cast<Energy>(std::floor(std::log(uniform_open0(rng)) / log_ratio));
    }
    const double u = uniform01(rng);
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return static_cast<Energy>(std::min<std::ptrdiff_t>(it - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
  };

  std::vector<Energy> energies(n);
  for (std::uint64_t attempt = 0; attempt < cap; ++attempt) {
    Energy sum = 0;
    bool overshoot = false;
    for (std::size_t i = 0; i < n; ++i) {
      energies[i] = draw();
      sum += energies[i];
      if (sum > total) {
        overshoot = true;
        break;
      }
    }
    if (!overshoot && sum == total) return Configuration(std::move(energies));
  }
  std::ostringstream os;
  os << "microcanonical rejection sampler exceeded " << cap << " attempts (N=" << n << ", E=" << total
     << ", base=" << m.spec() << ", tilted sd=" << sigma << ")";
  throw ResourceError(os.str());
}

}  // namespace kac
