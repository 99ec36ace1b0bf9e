/// @file discretization.hpp
/// @brief Assembled P1 operators for a model problem on a given mesh: the
///        global sesquilinear operator, load, Dirichlet data and lifting,
///        plus the norm matrices shared by correctors, solvers and analysis.
#pragma once

#include "mspg/assembly.hpp"
#include "mspg/mesh.hpp"
#include "mspg/problems.hpp"

#include <vector>

namespace mspg {

template <class Scalar>
struct DiscreteOperators {
  const Mesh* mesh = nullptr;
  ProblemSpec spec;
  SparseOperator<Scalar> op;     // stiffness(A) or K - kappa^2 M + s i kappa R
  FieldVector<Scalar> load;
  std::vector<double> elem_coeff; // diffusion coefficient samples (empty: unit)
  RealSparse stiffness_unit;     // unweighted, for V-norms
  RealSparse mass;
  std::vector<int> dirichlet_nodes;
  FieldVector<Scalar> dirichlet_values;
  FieldVector<Scalar> lifting;   // nodal Dirichlet data extended by zero
  double kappa = 0.0;

  /// kappa-weighted V-norm Gram matrix (plain H1 seminorm for diffusion).
  RealSparse v_norm_gram() const
  {
    if (kappa == 0.0) return stiffness_unit;
    RealSparse g = stiffness_unit;
    g += RealSparse((kappa * kappa) * mass);
    return g;
  }

  std::vector<int> free_nodes() const
  {
    std::vector<char> con(mesh->n_nodes(), 0);
    for (int n : dirichlet_nodes) con[n] = 1;
    std::vector<int> free;
    for (int n = 0; n < mesh->n_nodes(); ++n)
      if (!con[n]) free.push_back(n);
    return free;
  }
};

/// Discretizes the problem on `mesh`. `check_resolution` guards the
/// reference-scale requirements (comparator meshes opt out).
template <class Scalar>
DiscreteOperators<Scalar> discretize(const ProblemSpec& spec, const Mesh& mesh,
                                     bool check_resolution = true)
{
  spec.validate();
  if constexpr (is_complex_v<Scalar>) {
    if (spec.kind != ProblemKind::Helmholtz)
      throw std::invalid_argument("complex discretization requires a Helmholtz problem");
  } else {
    if (spec.kind != ProblemKind::Diffusion)
      throw std::invalid_argument("real discretization requires a diffusion problem");
  }

  DiscreteOperators<Scalar> d;
  d.mesh = &mesh;
  d.spec = spec;
  d.stiffness_unit = assemble_stiffness(mesh, 1.0);
  d.mass = assemble_mass(mesh);

  if constexpr (is_complex_v<Scalar>) {
    d.kappa = spec.kappa;
    if (spec.domain.shape == DomainShape::SquareWithHole &&
        spec.dirichlet == DirichletKind::MinusIncidentWave) {
      bool has_hole_boundary = false;
      for (const auto& f : mesh.boundary)
        if (f.tag == BoundaryTag::Dirichlet) has_hole_boundary = true;
      if (!has_hole_boundary)
        throw std::invalid_argument("scattering problem requires the mesh to carry the hole");
    }
    d.op = d.stiffness_unit.template cast<Complex>();
    d.op -= ComplexSparse((spec.kappa * spec.kappa) * d.mass.template cast<Complex>());
    d.op += ComplexSparse(Complex(0.0, spec.robin_sign * spec.kappa) *
                          assemble_robin_mass(mesh).template cast<Complex>());
    d.op.makeCompressed();
  } else {
    d.elem_coeff = spec.coefficient(mesh, check_resolution);
    d.op = assemble_stiffness(mesh, d.elem_coeff);
  }

  d.load = assemble_load(
      mesh, std::vector<Scalar>(mesh.n_elements(), static_cast<Scalar>(spec.rhs_value)));

  d.dirichlet_nodes = mesh.tagged_nodes(BoundaryTag::Dirichlet);
  d.dirichlet_values.resize(d.dirichlet_nodes.size());
  d.lifting = FieldVector<Scalar>::Zero(mesh.n_nodes());
  for (std::size_t i = 0; i < d.dirichlet_nodes.size(); ++i) {
    const auto& p = mesh.nodes[d.dirichlet_nodes[i]];
    const Complex g = spec.dirichlet_value(p[0], p[1]);
    if constexpr (is_complex_v<Scalar>)
      d.dirichlet_values[i] = g;
    else
      d.dirichlet_values[i] = g.real();
    d.lifting[d.dirichlet_nodes[i]] = d.dirichlet_values[i];
  }
  return d;
}

/// Galerkin solution on the operators' own mesh (full nodal vector including
/// Dirichlet values). Used both as coarse comparator and as the fine-mesh
/// reference solution. The default tolerance accounts for the backward-error
/// floor ||A|| ||x|| eps / ||rhs|| of direct solves on stiff fine systems.
template <class Scalar>
FieldVector<Scalar> galerkin_solve(const DiscreteOperators<Scalar>& d,
                                   SolveMethod method = SolveMethod::DirectLU,
                                   double tol = 1e-9)
{
  auto sys = constrain_dirichlet(d.op, d.load, *d.mesh, d.dirichlet_nodes,
                                 d.dirichlet_values);
  auto x = solve(sys.reduced, sys.rhs, method, tol);
  return sys.full(x);
}

/// Standard P1 FEM for the problem on an arbitrary mesh of the same domain.
template <class Scalar>
FieldVector<Scalar> standard_fem(const ProblemSpec& spec, const Mesh& mesh)
{
  auto d = discretize<Scalar>(spec, mesh, /*check_resolution=*/false);
  return galerkin_solve(d);
}

} // namespace mspg
