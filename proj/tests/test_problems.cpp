/// Unit tests for the model problem specs, samplers and config grammar.
#include <catch2/catch_amalgamated.hpp>

#include "mspg/discretization.hpp"
#include "mspg/problems.hpp"

#include <cmath>
#include <numbers>

using namespace mspg;
using Catch::Approx;

TEST_CASE("periodic 1D coefficient hits the cosine extremes")
{
  auto spec = periodic_1d(1.0 / 32.0);
  // A(0) = 1/3 and A(eps/2) = 1
  const double a0 = 1.0 / (2.0 + std::cos(0.0));
  const double ahalf = 1.0 / (2.0 + std::cos(std::numbers::pi));
  CHECK(a0 == Approx(1.0 / 3.0));
  CHECK(ahalf == Approx(1.0));

  // harmonic mean over one period is 1/2: mean of 1/A = 2
  const int n = 1 << 14;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = (i + 0.5) / n * spec.eps;
    acc += 2.0 + std::cos(2.0 * std::numbers::pi * x / spec.eps);
  }
  CHECK(acc / n == Approx(2.0).epsilon(1e-10));

  CHECK_THROWS_AS(periodic_1d(0.3), std::invalid_argument);
}

TEST_CASE("periodic 1D exact solution satisfies the strong equation")
{
  const double eps = 1.0 / 32.0;
  Periodic1dFormulas f{eps};
  CHECK(f.exact(0.0) == Approx(0.0).margin(1e-14));
  CHECK(f.exact(1.0) == Approx(0.0).margin(1e-12));

  // -(A u')' = 4, checked by central differences of the flux A u'
  auto flux = [&](double x) {
    const double d = 1e-7;
    const double up = (f.exact(x + d) - f.exact(x - d)) / (2 * d);
    return up / (2.0 + std::cos(2.0 * std::numbers::pi * x / eps));
  };
  for (double x : {0.21, 0.4375, 0.77}) {
    const double d = 1e-5;
    const double rhs = -(flux(x + d) - flux(x - d)) / (2 * d);
    CHECK(rhs == Approx(4.0).epsilon(5e-3));
  }

  // the alternate formula differs exactly by the flipped oscillatory terms
  for (double x : {0.1, 0.5, 0.9})
    CHECK(f.exact(x) + f.alternate(x) == Approx(2.0 * f.homogenized(x)).margin(1e-13));
}

TEST_CASE("fine FEM reference matches the flux-integrated sign convention")
{
  const double eps = 1.0 / 32.0;
  auto spec = periodic_1d(eps);
  auto hier = build_hierarchy(spec.domain, 3, 11);
  auto u = standard_fem<double>(spec, hier.fine);
  Periodic1dFormulas f{eps};

  double num_exact = 0, num_alt = 0, den = 0;
  for (int i = 0; i < hier.fine.n_nodes(); ++i) {
    const double x = hier.fine.nodes[i][0];
    num_exact += std::pow(u[i] - f.exact(x), 2);
    num_alt += std::pow(u[i] - f.alternate(x), 2);
    den += std::pow(f.exact(x), 2);
  }
  CHECK(std::sqrt(num_exact / den) < 1e-3);
  CHECK(std::sqrt(num_alt / den) > 1e-2); // the flipped-sign variant
}

TEST_CASE("random checkerboard sampling")
{
  auto spec = random_checkerboard(7);

  SECTION("deterministic for a fixed seed, values in range")
  {
    auto a = spec.checkerboard_cells();
    auto b = random_checkerboard(7).checkerboard_cells();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i] == b[i]); // bit-exact
      CHECK(a[i] >= 1.0);
      CHECK(a[i] <= 10.0);
    }
  }
  SECTION("different seeds differ in more than 90% of cells")
  {
    auto a = spec.checkerboard_cells();
    auto b = random_checkerboard(8).checkerboard_cells();
    std::size_t differ = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i] != b[i]) ++differ;
    CHECK(static_cast<double>(differ) / a.size() > 0.9);
  }
  SECTION("sampling rejects meshes below the coefficient grid")
  {
    auto hier = build_hierarchy(spec.domain, 2, 5);
    CHECK_THROWS_AS(spec.coefficient(hier.fine), std::invalid_argument);
    CHECK_NOTHROW(spec.coefficient(hier.fine, /*check_resolution=*/false));
  }
  SECTION("elements inside one coefficient cell share the value")
  {
    auto small = random_checkerboard(7, 1.0, 10.0, /*cell_level=*/2);
    auto hier = build_hierarchy(small.domain, 2, 4);
    auto coeff = small.coefficient(hier.fine);
    auto cells = small.checkerboard_cells();
    for (int e = 0; e < hier.fine.n_elements(); ++e) {
      const auto c = hier.fine.centroid(e);
      const int ix = static_cast<int>(c[0] * 4.0);
      const int iy = static_cast<int>(c[1] * 4.0);
      CHECK(coeff[e] == cells[iy * 4 + ix]);
    }
  }
}

TEST_CASE("1D Helmholtz problem spec")
{
  const double kappa = 128.0;
  auto spec = helmholtz_1d(kappa);

  SECTION("exact solution satisfies the Robin condition u' = -i kappa u")
  {
    const double d = 1e-7;
    const Complex up = (helmholtz_1d_exact(kappa, 1.0 + d) - helmholtz_1d_exact(kappa, 1.0 - d)) / (2 * d);
    const Complex target = Complex(0, -kappa) * helmholtz_1d_exact(kappa, 1.0);
    CHECK(std::abs(up - target) < 1e-4 * kappa);
  }
  SECTION("boundary data: Dirichlet one at x=0, Robin at x=1")
  {
    auto hier = build_hierarchy(spec.domain, 3, 5);
    auto d = discretize<Complex>(spec, hier.fine);
    REQUIRE(d.dirichlet_nodes.size() == 1);
    CHECK(hier.fine.nodes[d.dirichlet_nodes[0]][0] == 0.0);
    CHECK(d.dirichlet_values[0] == Complex(1.0, 0.0));
  }
  SECTION("kappa must be positive")
  {
    CHECK_THROWS_AS(helmholtz_1d(-1.0), std::invalid_argument);
  }
}

TEST_CASE("2D scattering problem spec")
{
  const double kappa = 32.0;
  auto spec = scattering_2d(kappa);

  SECTION("incident wave has unit modulus")
  {
    for (auto [x, y] : {std::pair{0.1, 0.9}, {0.5, 0.25}, {0.75, 0.75}})
      CHECK(std::abs(spec.incident_wave(x, y)) == Approx(1.0));
  }
  SECTION("Dirichlet data at a hole vertex is -exp(i kappa p.d)")
  {
    const double px = 0.25, py = 0.75;
    const Complex expect =
        -std::exp(Complex(0.0, kappa * (px * std::cos(0.5) + py * std::sin(0.5))));
    CHECK(std::abs(spec.dirichlet_value(px, py) - expect) < 1e-14);
  }
  SECTION("requires a mesh with the hole")
  {
    auto hier = build_hierarchy(DomainSpec::square(BoundaryRule::AllRobin), 2, 4);
    ProblemSpec broken = spec;
    broken.domain = hier.domain;
    CHECK_THROWS_AS(discretize<Complex>(broken, hier.fine), std::invalid_argument);
  }
  SECTION("total field vanishes on the hole boundary by construction")
  {
    auto hier = build_hierarchy(spec.domain, 3, 5);
    auto u = standard_fem<Complex>(spec, hier.fine);
    for (int n : hier.fine.tagged_nodes(BoundaryTag::Dirichlet)) {
      const auto& p = hier.fine.nodes[n];
      CHECK(std::abs(u[n] + spec.incident_wave(p[0], p[1])) < 1e-12);
    }
  }
}

TEST_CASE("canonical serialization and hashing")
{
  auto a = random_checkerboard(7);
  auto b = random_checkerboard(7);
  auto c = random_checkerboard(8);
  CHECK(a.canonical() == b.canonical());
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != c.hash());

  // round trip through the config grammar
  auto parsed = parse_problem_config(a.canonical());
  CHECK(parsed.canonical() == a.canonical());

  auto h1 = helmholtz_1d(4.0);
  CHECK(parse_problem_config(h1.canonical()).canonical() == h1.canonical());
  auto s2 = scattering_2d(8.0);
  CHECK(parse_problem_config(s2.canonical()).canonical() == s2.canonical());
}

TEST_CASE("config grammar errors")
{
  CHECK_THROWS_AS(parse_problem_config("[problem]\nkind = nonsense\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_problem_config("[problem]\nbogus_key = 1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_problem_config("kind = diffusion\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_problem_config("[problem]\nkind diffusion\n"), std::invalid_argument);
  // comments and blank lines are fine
  CHECK_NOTHROW(parse_problem_config("# comment\n\n[problem]\nkind = diffusion\ndomain = square\n"));
}

TEST_CASE("validation rejects ill-posed specs")
{
  ProblemSpec bad = random_checkerboard(7);
  bad.range_lo = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  ProblemSpec helm = helmholtz_1d(4.0);
  helm.domain.boundary = BoundaryRule::AllDirichlet;
  CHECK_THROWS_AS(helm.validate(), std::invalid_argument);
}
