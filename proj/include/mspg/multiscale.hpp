/// @file multiscale.hpp
/// @brief Assembly and solution of the coarse multiscale Petrov-Galerkin
///        system: rows are test functions Lambda_i, columns trial hats
///        P lambda_j, all pairings evaluated through the fine-mesh operator.
#pragma once

#include "mspg/correctors.hpp"
#include "mspg/discretization.hpp"
#include "mspg/interpolation.hpp"

#include <Eigen/LU>

#include <vector>

namespace mspg {

template <class Scalar>
struct CoarseSystem {
  SparseOperator<Scalar> matrix; // M[i][j] = a(P lambda_j, Lambda_i)
  FieldVector<Scalar> rhs;       // b[i] = (f, Lambda_i) - a(g_h, Lambda_i)
  std::vector<int> free_nodes;   // coarse free nodes (row/column ordering)
};

/// Assembles M = Lambda^H A_h P_free and b = Lambda^H (load - A_h g_h); the
/// conjugate sits on the test factor per the sesquilinear convention.
template <class Scalar>
CoarseSystem<Scalar> assemble_coarse(const DiscreteOperators<Scalar>& d,
                                     const MeshHierarchy& hier, const QuasiInterpolator& ih,
                                     const SparseOperator<Scalar>& test_basis)
{
  if (test_basis.cols() != ih.n_rows() || test_basis.rows() != hier.fine.n_nodes())
    throw std::invalid_argument("test basis shape mismatch (missing correctors?)");

  const RealSparse p = prolongation(hier);
  std::vector<int> all_rows(hier.fine.n_nodes());
  for (int i = 0; i < hier.fine.n_nodes(); ++i) all_rows[i] = i;
  RealSparse p_free_real = submatrix(p, all_rows, ih.free_nodes);

  CoarseSystem<Scalar> sys;
  sys.free_nodes = ih.free_nodes;
  SparseOperator<Scalar> p_free;
  if constexpr (is_complex_v<Scalar>)
    p_free = p_free_real.cast<Complex>();
  else
    p_free = p_free_real;

  SparseOperator<Scalar> a_p = d.op * p_free;
  sys.matrix = SparseOperator<Scalar>(test_basis.adjoint()) * a_p;
  sys.matrix.makeCompressed();

  FieldVector<Scalar> residual_load = d.load - d.op * d.lifting;
  sys.rhs = SparseOperator<Scalar>(test_basis.adjoint()) * residual_load;
  return sys;
}

/// Direct solve of the coarse system with a residual contract; singularity is
/// reported together with the smallest singular value (small systems) as the
/// discrete inf-sup diagnostic.
template <class Scalar>
FieldVector<Scalar> solve_coarse(const CoarseSystem<Scalar>& sys, double tol = 1e-12)
{
  const int n = static_cast<int>(sys.matrix.rows());
  if (n == 0) return FieldVector<Scalar>();
  try {
    return solve(sys.matrix, sys.rhs, SolveMethod::DirectLU, tol);
  } catch (const SolveFailure& failure) {
    std::string diag = failure.what();
    if (n <= 2048) {
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> dense(sys.matrix);
      const auto svd = dense.jacobiSvd();
      diag += "; smallest singular value " + std::to_string(svd.singularValues()[n - 1]);
    }
    throw SolveFailure("coarse system solve failed (" + diag + ")", failure.best_residual);
  }
}

/// Multiscale Petrov-Galerkin solution in its three conventional forms.
template <class Scalar>
struct MultiscaleSolution {
  FieldVector<Scalar> coarse_free;  // PG unknowns on free coarse nodes
  FieldVector<Scalar> coarse_scale; // + I_H g_h: the coarse-scale content of u_h
  FieldVector<Scalar> coarse_full;  // all coarse nodes, Dirichlet data filled in
  FieldVector<Scalar> fine;         // P * coarse_full
};

template <class Scalar>
MultiscaleSolution<Scalar> multiscale_solve(const DiscreteOperators<Scalar>& d,
                                            const MeshHierarchy& hier,
                                            const QuasiInterpolator& ih,
                                            const CorrectorSet<Scalar>& correctors,
                                            double tol = 1e-12)
{
  const auto lambda = test_basis_matrix(hier, ih, correctors);
  const auto sys = assemble_coarse(d, hier, ih, lambda);

  MultiscaleSolution<Scalar> out;
  out.coarse_free = solve_coarse(sys, tol);

  out.coarse_scale = out.coarse_free + ih.apply(d.lifting);

  out.coarse_full = FieldVector<Scalar>::Zero(hier.coarse.n_nodes());
  for (int r = 0; r < ih.n_rows(); ++r) out.coarse_full[ih.free_nodes[r]] = out.coarse_scale[r];
  for (int z : hier.coarse.tagged_nodes(BoundaryTag::Dirichlet)) {
    const auto& pt = hier.coarse.nodes[z];
    const Complex g = d.spec.dirichlet_value(pt[0], pt[1]);
    if constexpr (is_complex_v<Scalar>)
      out.coarse_full[z] = g;
    else
      out.coarse_full[z] = g.real();
  }

  const RealSparse p = prolongation(hier);
  if constexpr (is_complex_v<Scalar>) {
    out.fine.resize(hier.fine.n_nodes());
    out.fine.real() = p * out.coarse_full.real();
    out.fine.imag() = p * out.coarse_full.imag();
  } else {
    out.fine = p * out.coarse_full;
  }
  return out;
}

} // namespace mspg
