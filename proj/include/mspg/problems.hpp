/// @file problems.hpp
/// @brief Concrete model problems: 1D periodic diffusion, 2D random
///        checkerboard, 1D Helmholtz and 2D sound-soft scattering, with
///        analytic formulas where available, plus the problem config file
///        grammar and canonical serialization used for cache keys.
#pragma once

#include "mspg/mesh.hpp"
#include "mspg/types.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace mspg {

enum class ProblemKind { Diffusion, Helmholtz };
enum class CoefficientKind { Constant, Periodic1d, Checkerboard };
enum class DirichletKind { Zero, ConstantOne, MinusIncidentWave };

/// Value-type description of a model problem. All randomized content is a
/// pure function of (seed, element), so equal specs hash equally and runs
/// are reproducible bit for bit.
struct ProblemSpec {
  ProblemKind kind = ProblemKind::Diffusion;
  DomainSpec domain = DomainSpec::interval();

  CoefficientKind coeff = CoefficientKind::Constant;
  double coeff_value = 1.0;
  double eps = 0.0;           // Periodic1d
  int cell_level = 6;         // Checkerboard: cell width 2^-cell_level
  std::uint64_t seed = 0;     // Checkerboard
  double range_lo = 1.0;      // Checkerboard value range
  double range_hi = 10.0;

  double kappa = 0.0;         // Helmholtz only
  double robin_sign = -1.0;   // sign of the i*kappa boundary term
  double rhs_value = 1.0;     // constant right-hand side
  DirichletKind dirichlet = DirichletKind::Zero;

  void validate() const
  {
    if (kind == ProblemKind::Diffusion) {
      if (!(range_lo > 0.0) || !(coeff_value > 0.0))
        throw std::invalid_argument("diffusion coefficient must be strictly positive");
    } else {
      if (!(kappa > 0.0)) throw std::invalid_argument("wave number must be positive");
      if (domain.boundary == BoundaryRule::AllDirichlet)
        throw std::invalid_argument("Helmholtz problems need a nonempty Robin boundary");
      if (dirichlet == DirichletKind::MinusIncidentWave &&
          domain.shape != DomainShape::SquareWithHole)
        throw std::invalid_argument("scattering data requires the domain with the hole");
    }
    if (coeff == CoefficientKind::Checkerboard && !(range_hi >= range_lo))
      throw std::invalid_argument("checkerboard range is empty");
    if (coeff == CoefficientKind::Periodic1d && eps <= 0.0)
      throw std::invalid_argument("periodic coefficient needs eps > 0");
  }

  /// One coefficient value per element (midpoint sample for analytic fields).
  /// `check_resolution` applies the reference-discretization requirements;
  /// deliberately under-resolved comparator meshes pass `false`.
  std::vector<double> coefficient(const Mesh& mesh, bool check_resolution = true) const
  {
    std::vector<double> a(mesh.n_elements(), coeff_value);
    switch (coeff) {
      case CoefficientKind::Constant: break;
      case CoefficientKind::Periodic1d: {
        if (check_resolution && mesh.width() > eps / 8.0)
          throw std::invalid_argument("fine mesh width " + std::to_string(mesh.width()) +
                                      " does not resolve eps = " + std::to_string(eps));
        for (int e = 0; e < mesh.n_elements(); ++e) {
          const double x = mesh.centroid(e)[0];
          a[e] = 1.0 / (2.0 + std::cos(2.0 * std::numbers::pi * x / eps));
        }
        break;
      }
      case CoefficientKind::Checkerboard: {
        if (check_resolution && mesh.level < cell_level)
          throw std::invalid_argument("fine mesh does not resolve the 2^-" +
                                      std::to_string(cell_level) + " coefficient grid");
        const auto cells = checkerboard_cells();
        const std::int64_t n = std::int64_t{1} << cell_level;
        for (int e = 0; e < mesh.n_elements(); ++e) {
          const auto c = mesh.centroid(e);
          auto clampi = [n](std::int64_t v) { return std::min(std::max(v, std::int64_t{0}), n - 1); };
          const std::int64_t ix = clampi(static_cast<std::int64_t>(c[0] * static_cast<double>(n)));
          const std::int64_t iy = clampi(static_cast<std::int64_t>(c[1] * static_cast<double>(n)));
          a[e] = cells[iy * n + ix];
        }
        break;
      }
    }
    return a;
  }

  /// Checkerboard cell values in row-major order (x fastest), one SplitMix64
  /// stream mapped affinely onto [range_lo, range_hi].
  std::vector<double> checkerboard_cells() const
  {
    const std::int64_t n = std::int64_t{1} << cell_level;
    std::vector<double> cells(n * n);
    SplitMix64 rng(seed);
    for (auto& c : cells) c = range_lo + (range_hi - range_lo) * rng.next_unit();
    return cells;
  }

  Complex incident_wave(double x, double y) const
  {
    const double dx = std::cos(0.5), dy = std::sin(0.5);
    return std::exp(Complex(0.0, kappa * (x * dx + y * dy)));
  }

  Complex dirichlet_value(double x, double y) const
  {
    switch (dirichlet) {
      case DirichletKind::Zero: return Complex(0.0, 0.0);
      case DirichletKind::ConstantOne: return Complex(1.0, 0.0);
      case DirichletKind::MinusIncidentWave: return -incident_wave(x, y);
    }
    return {};
  }

  /// Canonical key=value serialization (sorted keys); its FNV-1a hash keys
  /// the corrector cache.
  std::string canonical() const
  {
    auto fmt = [](double v) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", v);
      return std::string(buf);
    };
    std::map<std::string, std::string> kv;
    kv["kind"] = kind == ProblemKind::Diffusion ? "diffusion" : "helmholtz";
    kv["domain"] = domain.shape == DomainShape::Interval    ? "interval"
                   : domain.shape == DomainShape::Square    ? "square"
                                                            : "square_hole";
    switch (domain.boundary) {
      case BoundaryRule::AllDirichlet: kv["boundary"] = "dirichlet"; break;
      case BoundaryRule::AllRobin: kv["boundary"] = "robin"; break;
      case BoundaryRule::LeftDirichletRightRobin: kv["boundary"] = "left_dirichlet_right_robin"; break;
      case BoundaryRule::HoleDirichletOuterRobin: kv["boundary"] = "hole_dirichlet_outer_robin"; break;
    }
    kv["coeff"] = coeff == CoefficientKind::Constant     ? "constant"
                  : coeff == CoefficientKind::Periodic1d ? "periodic1d"
                                                         : "checkerboard";
    kv["coeff_value"] = fmt(coeff_value);
    kv["eps"] = fmt(eps);
    kv["cell_level"] = std::to_string(cell_level);
    kv["seed"] = std::to_string(seed);
    kv["range_lo"] = fmt(range_lo);
    kv["range_hi"] = fmt(range_hi);
    kv["kappa"] = fmt(kappa);
    kv["robin_sign"] = fmt(robin_sign);
    kv["rhs"] = fmt(rhs_value);
    kv["dirichlet"] = dirichlet == DirichletKind::Zero          ? "zero"
                      : dirichlet == DirichletKind::ConstantOne ? "one"
                                                                : "minus_incident_wave";
    std::ostringstream os;
    os << "[problem]\n";
    for (const auto& [k, v] : kv) os << k << " = " << v << "\n";
    return os.str();
  }

  std::uint64_t hash() const { return fnv1a64(canonical()); }
};

/// Closed-form reference curves of the 1D periodic problem. `exact` is the
/// flux-integrated solution used as ground truth; `alternate` carries the
/// oscillatory terms with the opposite sign, a variant worth reporting
/// side by side because the two are easy to mix up.
struct Periodic1dFormulas {
  double eps;

  double oscillatory(double x) const
  {
    const double omega = 2.0 * std::numbers::pi / eps;
    return (2.0 - 4.0 * x) * std::sin(omega * x) / omega +
           4.0 * (1.0 - std::cos(omega * x)) / (omega * omega);
  }
  double exact(double x) const { return homogenized(x) + oscillatory(x); }
  double alternate(double x) const { return homogenized(x) - oscillatory(x); }
  double homogenized(double x) const { return 4.0 * (x - x * x); }
  double fem_limit(double x) const { return 2.0 * std::sqrt(3.0) * (x - x * x); }
};

/// -(A_eps u')' = 4 on (0,1), u(0)=u(1)=0, A_eps = (2+cos(2 pi x/eps))^-1.
inline ProblemSpec periodic_1d(double eps)
{
  const double k = -std::log2(eps);
  if (!(eps > 0.0) || eps >= 1.0 || std::abs(k - std::round(k)) > 1e-12)
    throw std::invalid_argument("eps must be 2^-k with k >= 1");
  ProblemSpec spec;
  spec.kind = ProblemKind::Diffusion;
  spec.domain = DomainSpec::interval(BoundaryRule::AllDirichlet);
  spec.coeff = CoefficientKind::Periodic1d;
  spec.eps = eps;
  spec.rhs_value = 4.0; // consistent with the 4(x-x^2) + O(eps) solution family
  spec.validate();
  return spec;
}

/// -div A grad u = 1 on the unit square, u = 0 on the boundary; A piecewise
/// constant on the 2^-cell_level grid with SplitMix64 values in [lo, hi].
inline ProblemSpec random_checkerboard(std::uint64_t seed, double lo = 1.0, double hi = 10.0,
                                       int cell_level = 6)
{
  ProblemSpec spec;
  spec.kind = ProblemKind::Diffusion;
  spec.domain = DomainSpec::square(BoundaryRule::AllDirichlet);
  spec.coeff = CoefficientKind::Checkerboard;
  spec.cell_level = cell_level;
  spec.seed = seed;
  spec.range_lo = lo;
  spec.range_hi = hi;
  spec.rhs_value = 1.0;
  spec.validate();
  return spec;
}

/// -u'' - kappa^2 u = 0 on (0,1), u(0) = 1, u'(1) = -i kappa u(1); the exact
/// solution is exp(-i kappa x). That Robin condition pairs with the +i kappa
/// boundary term in the sesquilinear form.
inline ProblemSpec helmholtz_1d(double kappa)
{
  ProblemSpec spec;
  spec.kind = ProblemKind::Helmholtz;
  spec.domain = DomainSpec::interval(BoundaryRule::LeftDirichletRightRobin);
  spec.kappa = kappa;
  spec.robin_sign = +1.0;
  spec.rhs_value = 0.0;
  spec.dirichlet = DirichletKind::ConstantOne;
  spec.validate();
  return spec;
}

inline Complex helmholtz_1d_exact(double kappa, double x)
{
  return std::exp(Complex(0.0, -kappa * x));
}

/// Scattering of the incident wave exp(i kappa x.(cos .5, sin .5)) from the
/// sound-soft triangle (grid-conforming stand-in): u = -u_inc on the hole
/// boundary, outgoing Robin condition on the outer square, f = 0.
inline ProblemSpec scattering_2d(double kappa)
{
  ProblemSpec spec;
  spec.kind = ProblemKind::Helmholtz;
  spec.domain = DomainSpec::square_with_hole(BoundaryRule::HoleDirichletOuterRobin);
  spec.kappa = kappa;
  spec.robin_sign = -1.0;
  spec.rhs_value = 0.0;
  spec.dirichlet = DirichletKind::MinusIncidentWave;
  spec.validate();
  return spec;
}

/// Parses the `key = value` problem grammar (sections in brackets, # or ;
/// comments). Exactly inverts ProblemSpec::canonical().
inline ProblemSpec parse_problem_config(std::istream& is)
{
  std::map<std::string, std::string> kv;
  std::string line, section;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    const auto e = s.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::invalid_argument("config line " + std::to_string(lineno) + ": bad section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    if (section != "problem")
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": key outside the [problem] section");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }

  ProblemSpec spec;
  auto take = [&](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) return std::string();
    auto v = it->second;
    kv.erase(it);
    return v;
  };
  if (auto v = take("kind"); !v.empty()) {
    if (v == "diffusion") spec.kind = ProblemKind::Diffusion;
    else if (v == "helmholtz") spec.kind = ProblemKind::Helmholtz;
    else throw std::invalid_argument("unknown kind '" + v + "'");
  }
  std::string dom = take("domain"), bnd = take("boundary");
  if (!dom.empty()) {
    if (dom == "interval") spec.domain.shape = DomainShape::Interval;
    else if (dom == "square") spec.domain.shape = DomainShape::Square;
    else if (dom == "square_hole") spec.domain.shape = DomainShape::SquareWithHole;
    else throw std::invalid_argument("unknown domain '" + dom + "'");
  }
  if (!bnd.empty()) {
    if (bnd == "dirichlet") spec.domain.boundary = BoundaryRule::AllDirichlet;
    else if (bnd == "robin") spec.domain.boundary = BoundaryRule::AllRobin;
    else if (bnd == "left_dirichlet_right_robin")
      spec.domain.boundary = BoundaryRule::LeftDirichletRightRobin;
    else if (bnd == "hole_dirichlet_outer_robin")
      spec.domain.boundary = BoundaryRule::HoleDirichletOuterRobin;
    else throw std::invalid_argument("unknown boundary '" + bnd + "'");
  }
  if (auto v = take("coeff"); !v.empty()) {
    if (v == "constant") spec.coeff = CoefficientKind::Constant;
    else if (v == "periodic1d") spec.coeff = CoefficientKind::Periodic1d;
    else if (v == "checkerboard") spec.coeff = CoefficientKind::Checkerboard;
    else throw std::invalid_argument("unknown coeff '" + v + "'");
  }
  if (auto v = take("dirichlet"); !v.empty()) {
    if (v == "zero") spec.dirichlet = DirichletKind::Zero;
    else if (v == "one") spec.dirichlet = DirichletKind::ConstantOne;
    else if (v == "minus_incident_wave") spec.dirichlet = DirichletKind::MinusIncidentWave;
    else throw std::invalid_argument("unknown dirichlet '" + v + "'");
  }
  auto num = [&](const char* key, double& out) {
    if (auto v = take(key); !v.empty()) out = std::stod(v);
  };
  num("coeff_value", spec.coeff_value);
  num("eps", spec.eps);
  num("kappa", spec.kappa);
  num("robin_sign", spec.robin_sign);
  num("rhs", spec.rhs_value);
  num("range_lo", spec.range_lo);
  num("range_hi", spec.range_hi);
  if (auto v = take("cell_level"); !v.empty()) spec.cell_level = std::stoi(v);
  if (auto v = take("seed"); !v.empty()) spec.seed = std::stoull(v);
  if (!kv.empty())
    throw std::invalid_argument("unknown config key '" + kv.begin()->first + "'");
  spec.validate();
  return spec;
}

inline ProblemSpec parse_problem_config(const std::string& text)
{
  std::istringstream is(text);
  return parse_problem_config(is);
}

inline void write_problem_config(const ProblemSpec& spec, std::ostream& os)
{
  os << spec.canonical();
}

} // namespace mspg
