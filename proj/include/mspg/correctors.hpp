/// @file correctors.hpp
/// @brief Kernel-constrained fine-scale corrector problems on element patches
///        and the resulting test basis Lambda_z = lambda_z + phi_z.
///
/// Each element corrector solves the saddle system
///     [[A_p, C_p^H], [C_p, 0]] [phi; mu] = [-(A_T P lambda_z)|_p; 0]
/// over the patch-interior fine nodes, where C_p encodes Ker I_H. The ADJOINT
/// orientation (Helmholtz cell problems, unknown in the second slot of the
/// sesquilinear form) replaces A_p by its conjugate transpose; for real
/// symmetric forms both orientations coincide.
#pragma once

#include "mspg/discretization.hpp"
#include "mspg/interpolation.hpp"
#include "mspg/mesh.hpp"
#include "mspg/parallel.hpp"

#include <Eigen/SparseLU>

#include <array>
#include <iostream>
#include <unordered_map>
#include <vector>

namespace mspg {

enum class Orientation { Primal, Adjoint };

struct CorrectorOptions {
  int ell = 2;
  bool ideal = false; // whole-domain patches, ignores ell
  Orientation orientation = Orientation::Primal;
  int workers = 1;
  bool retain_pieces = false;
  double c_res = 1.0;       // Helmholtz Hk warning threshold
  double saddle_tol = 1e-10;
  double kernel_tol = 1e-9;
};

/// Per coarse free node (interpolator row ordering): the localized corrector
/// vector, sparse over the fine node set.
template <class Scalar>
struct CorrectorSet {
  int ell = 1;
  bool ideal = false;
  Orientation orientation = Orientation::Primal;
  std::uint64_t key = 0;
  double H = 0.0, h = 0.0;
  std::vector<Eigen::SparseVector<Scalar>> phi;

  bool has_pieces = false;
  // pieces[T][v]: contribution of element T to the corrector of its vertex v
  std::vector<std::array<Eigen::SparseVector<Scalar>, 3>> pieces;
};

namespace detail {

/// y += (A_T or A_T^H) x where A_T is the problem operator assembled over the
/// children of coarse element T only (with the Robin terms of its own
/// boundary edges on Gamma_R).
template <class Scalar>
void apply_element_operator(const DiscreteOperators<Scalar>& d, const MeshHierarchy& hier,
                            const std::vector<std::vector<int>>& robin_facets_of_elem,
                            int T, const Eigen::SparseVector<double>& x,
                            Orientation orient, std::unordered_map<int, Scalar>& y)
{
  const Mesh& fm = hier.fine;
  const int nv = fm.verts_per_elem();
  auto xval = [&](int node) { return x.coeff(node); };

  for (int fe : hier.children[T]) {
    const auto& el = fm.elements[fe];
    Eigen::Matrix3cd elop = Eigen::Matrix3cd::Zero();
    if constexpr (is_complex_v<Scalar>) {
      const auto k = element_stiffness(fm, fe, 1.0);
      const auto m = element_mass(fm, fe);
      for (int i = 0; i < nv; ++i)
        for (int j = 0; j < nv; ++j)
          elop(i, j) = Complex(k(i, j) - d.kappa * d.kappa * m(i, j), 0.0);
      for (int bf : robin_facets_of_elem[fe]) {
        const auto& facet = fm.boundary[bf];
        const Complex w(0.0, d.spec.robin_sign * d.kappa);
        if (fm.dim == 1) {
          for (int i = 0; i < nv; ++i)
            if (el[i] == facet.nodes[0]) elop(i, i) += w;
        } else {
          const auto& a = fm.nodes[facet.nodes[0]];
          const auto& b = fm.nodes[facet.nodes[1]];
          const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
          int la = -1, lb = -1;
          for (int i = 0; i < nv; ++i) {
            if (el[i] == facet.nodes[0]) la = i;
            if (el[i] == facet.nodes[1]) lb = i;
          }
          elop(la, la) += w * (len / 3.0);
          elop(lb, lb) += w * (len / 3.0);
          elop(la, lb) += w * (len / 6.0);
          elop(lb, la) += w * (len / 6.0);
        }
      }
    } else {
      const auto k = element_stiffness(fm, fe, d.elem_coeff[fe]);
      for (int i = 0; i < nv; ++i)
        for (int j = 0; j < nv; ++j) elop(i, j) = k(i, j);
    }

    for (int i = 0; i < nv; ++i) {
      Scalar acc{};
      for (int j = 0; j < nv; ++j) {
        const double xj = xval(el[j]);
        if (xj == 0.0) continue;
        Complex entry = orient == Orientation::Primal ? elop(i, j) : std::conj(elop(j, i));
        if constexpr (is_complex_v<Scalar>)
          acc += entry * xj;
        else
          acc += entry.real() * xj;
      }
      if (acc != Scalar{}) y[el[i]] += acc;
    }
  }
}

template <class Scalar>
struct SaddleFactorization {
  using ColMajor = Eigen::SparseMatrix<Scalar, Eigen::ColMajor, int>;
  ColMajor matrix;
  Eigen::SparseLU<ColMajor, Eigen::COLAMDOrdering<int>> lu;
  std::vector<int> dofs;      // patch free fine nodes (global ids)
  std::vector<int> dof_local; // global -> local or -1
  int n_constraints = 0;

  void build(const SparseOperator<Scalar>& op, const QuasiInterpolator& ih,
             const Patch& patch, Orientation orient, int n_fine)
  {
    dofs = patch.free_fine_nodes;
    dof_local.assign(n_fine, -1);
    for (std::size_t i = 0; i < dofs.size(); ++i) dof_local[dofs[i]] = static_cast<int>(i);
    const auto pc = constraint_rows(ih, patch);
    const int nd = static_cast<int>(dofs.size());
    n_constraints = static_cast<int>(pc.C.rows());

    std::vector<Eigen::Triplet<Scalar>> trips;
    SparseOperator<Scalar> ap = submatrix(op, dofs, dofs);
    for (int r = 0; r < ap.outerSize(); ++r)
      for (typename SparseOperator<Scalar>::InnerIterator it(ap, r); it; ++it) {
        if (orient == Orientation::Primal)
          trips.emplace_back(it.row(), it.col(), it.value());
        else
          trips.emplace_back(it.col(), it.row(), conj_if_complex(it.value()));
      }
    for (int r = 0; r < pc.C.outerSize(); ++r)
      for (RealSparse::InnerIterator it(pc.C, r); it; ++it) {
        trips.emplace_back(nd + it.row(), it.col(), Scalar(it.value()));
        trips.emplace_back(it.col(), nd + it.row(), Scalar(it.value()));
      }
    matrix.resize(nd + n_constraints, nd + n_constraints);
    matrix.setFromTriplets(trips.begin(), trips.end());
    matrix.makeCompressed();
    lu.compute(matrix);
    if (lu.info() != Eigen::Success)
      throw std::runtime_error("singular saddle factorization on the patch of element " +
                               std::to_string(patch.owner));
  }

  static Scalar conj_if_complex(const Scalar& v)
  {
    if constexpr (is_complex_v<Scalar>)
      return std::conj(v);
    else
      return v;
  }
};

/// One saddle solve: the element corrector of vertex z within element T.
template <class Scalar>
Eigen::SparseVector<Scalar> solve_piece(const SaddleFactorization<Scalar>& fact,
                                        const DiscreteOperators<Scalar>& d,
                                        const MeshHierarchy& hier,
                                        const std::vector<std::vector<int>>& robin_facets,
                                        const Eigen::SparseMatrix<double, Eigen::ColMajor, int>& p_col,
                                        int T, int z, Orientation orient, double saddle_tol)
{
  const int n_fine = hier.fine.n_nodes();
  Eigen::SparseVector<Scalar> piece(n_fine);
  Eigen::SparseVector<double> p_lambda = p_col.col(z);
  std::unordered_map<int, Scalar> app;
  apply_element_operator(d, hier, robin_facets, T, p_lambda, orient, app);

  const int nd = static_cast<int>(fact.dofs.size());
  FieldVector<Scalar> b = FieldVector<Scalar>::Zero(nd + fact.n_constraints);
  for (const auto& [node, val] : app) {
    const int loc = fact.dof_local[node];
    if (loc >= 0) b[loc] = -val;
  }
  const double bnorm = b.norm();
  if (bnorm == 0.0) return piece;

  FieldVector<Scalar> x = fact.lu.solve(b);
  const double res = (fact.matrix * x - b).norm() / bnorm;
  if (!(res <= saddle_tol))
    throw std::runtime_error("corrector saddle residual " + std::to_string(res) +
                             " above tolerance on patch of element " + std::to_string(T));
  piece.reserve(nd);
  for (int i = 0; i < nd; ++i)
    if (x[i] != Scalar{}) piece.insertBack(fact.dofs[i]) = x[i];
  return piece;
}

/// max-norm of I_H phi for a sparse phi, via the column-compressed I_H.
template <class Scalar>
double kernel_defect(const QuasiInterpolator& ih, const Eigen::SparseVector<Scalar>& phi)
{
  FieldVector<Scalar> result = FieldVector<Scalar>::Zero(ih.n_rows());
  for (typename Eigen::SparseVector<Scalar>::InnerIterator it(phi); it; ++it)
    for (QuasiInterpolator::ColMajor::InnerIterator cit(ih.op_col, it.index()); cit; ++cit)
      result[cit.row()] += cit.value() * it.value();
  return result.template lpNorm<Eigen::Infinity>();
}

} // namespace detail

/// Computes all localized element correctors and accumulates the per-node
/// correctors phi_z = sum_{T : z in T} phi_{z,ell,T}. Patch factorizations are
/// shared across the (T, vertex) solves of one patch; saturated patches share
/// a single factorization. Results are merged in element order, so the output
/// does not depend on the worker count.
template <class Scalar>
CorrectorSet<Scalar> compute_correctors(const DiscreteOperators<Scalar>& d,
                                        const MeshHierarchy& hier,
                                        const QuasiInterpolator& ih,
                                        const CorrectorOptions& opt)
{
  const Mesh& cm = hier.coarse;
  const Mesh& fm = hier.fine;
  if (&fm != d.mesh)
    throw std::invalid_argument("correctors need operators assembled on the fine mesh");
  if constexpr (is_complex_v<Scalar>) {
    if (hier.H() * d.kappa > opt.c_res)
      std::cerr << "[mspg] warning: H*kappa = " << hier.H() * d.kappa << " exceeds c_res = "
                << opt.c_res << "; patch problems may lose coercivity\n";
  }

  CorrectorSet<Scalar> set;
  set.ell = opt.ideal ? 0 : opt.ell;
  set.ideal = opt.ideal;
  set.orientation = opt.orientation;
  set.H = hier.H();
  set.h = hier.h();
  set.phi.assign(ih.n_rows(), Eigen::SparseVector<Scalar>(fm.n_nodes()));

  const int ell = opt.ideal ? 4 * (1 << hier.level_coarse) : opt.ell;

  std::vector<Patch> patches(cm.n_elements());
  parallel_for(cm.n_elements(), opt.workers,
               [&](std::size_t T) { patches[T] = element_patch(hier, static_cast<int>(T), ell); });

  // group elements sharing one factorization: all saturated patches first
  std::vector<std::vector<int>> groups;
  std::vector<int> saturated;
  for (int T = 0; T < cm.n_elements(); ++T) {
    if (patches[T].saturated)
      saturated.push_back(T);
    else
      groups.push_back({T});
  }
  if (!saturated.empty()) groups.push_back(std::move(saturated));

  const RealSparse p = prolongation(hier);
  Eigen::SparseMatrix<double, Eigen::ColMajor, int> p_col(p);

  std::vector<std::vector<int>> robin_facets_of_elem(fm.n_elements());
  for (std::size_t i = 0; i < fm.boundary.size(); ++i)
    if (fm.boundary[i].tag == BoundaryTag::Robin)
      robin_facets_of_elem[fm.boundary[i].element].push_back(static_cast<int>(i));

  std::vector<std::array<Eigen::SparseVector<Scalar>, 3>> pieces(cm.n_elements());

  parallel_for(groups.size(), opt.workers, [&](std::size_t gi) {
    const auto& group = groups[gi];
    detail::SaddleFactorization<Scalar> fact;
    fact.build(d.op, ih, patches[group.front()], opt.orientation, fm.n_nodes());
    for (int T : group) {
      for (int v = 0; v < cm.verts_per_elem(); ++v) {
        const int z = cm.elements[T][v];
        if (ih.row_of_node[z] < 0) continue; // constrained coarse vertex
        pieces[T][v] = detail::solve_piece(fact, d, hier, robin_facets_of_elem, p_col, T, z,
                                           opt.orientation, opt.saddle_tol);
      }
    }
  });

  // deterministic accumulation in (element, vertex) order
  FieldVector<Scalar> scratch = FieldVector<Scalar>::Zero(fm.n_nodes());
  std::vector<std::vector<std::pair<int, int>>> by_row(ih.n_rows());
  for (int T = 0; T < cm.n_elements(); ++T)
    for (int v = 0; v < cm.verts_per_elem(); ++v) {
      const int row = ih.row_of_node[cm.elements[T][v]];
      if (row >= 0) by_row[row].emplace_back(T, v);
    }
  for (int row = 0; row < ih.n_rows(); ++row) {
    std::vector<int> touched;
    for (const auto& [T, v] : by_row[row]) {
      for (typename Eigen::SparseVector<Scalar>::InnerIterator it(pieces[T][v]); it; ++it) {
        if (scratch[it.index()] == Scalar{}) touched.push_back(static_cast<int>(it.index()));
        scratch[it.index()] += it.value();
      }
    }
    std::sort(touched.begin(), touched.end());
    auto& phi = set.phi[row];
    phi.reserve(touched.size());
    double phimax = 0.0;
    for (int idx : touched) {
      if (scratch[idx] != Scalar{}) {
        phi.insertBack(idx) = scratch[idx];
        phimax = std::max(phimax, std::abs(scratch[idx]));
      }
      scratch[idx] = Scalar{};
    }

    // Ker I_H membership, enforced rather than assumed
    if (detail::kernel_defect(ih, phi) > opt.kernel_tol * std::max(1.0, phimax))
      throw std::runtime_error("corrector violates the kernel constraint at coarse node " +
                               std::to_string(ih.free_nodes[row]));
  }

  if (opt.retain_pieces) {
    set.has_pieces = true;
    set.pieces = std::move(pieces);
  }
  return set;
}

/// Single element corrector phi_{z,ell,T} as a fine-sized sparse vector.
template <class Scalar>
Eigen::SparseVector<Scalar> element_corrector(const DiscreteOperators<Scalar>& d,
                                              const MeshHierarchy& hier,
                                              const QuasiInterpolator& ih, int T, int z,
                                              const CorrectorOptions& opt)
{
  const auto& cel = hier.coarse.elements[T];
  bool is_vertex = false;
  for (int k = 0; k < hier.coarse.verts_per_elem(); ++k)
    if (cel[k] == z) is_vertex = true;
  if (!is_vertex) throw std::invalid_argument("z is not a vertex of element T");
  if (ih.row_of_node[z] < 0)
    throw std::invalid_argument("z is a constrained coarse vertex");
  if constexpr (is_complex_v<Scalar>) {
    if (hier.H() * d.kappa > opt.c_res)
      std::cerr << "[mspg] warning: H*kappa = " << hier.H() * d.kappa
                << " exceeds c_res = " << opt.c_res << "\n";
  }

  const Mesh& fm = hier.fine;
  const int ell = opt.ideal ? 4 * (1 << hier.level_coarse) : opt.ell;
  const Patch patch = element_patch(hier, T, ell);
  detail::SaddleFactorization<Scalar> fact;
  fact.build(d.op, ih, patch, opt.orientation, fm.n_nodes());

  Eigen::SparseMatrix<double, Eigen::ColMajor, int> p_col(prolongation(hier));
  std::vector<std::vector<int>> robin_facets(fm.n_elements());
  for (std::size_t i = 0; i < fm.boundary.size(); ++i)
    if (fm.boundary[i].tag == BoundaryTag::Robin)
      robin_facets[fm.boundary[i].element].push_back(static_cast<int>(i));

  return detail::solve_piece(fact, d, hier, robin_facets, p_col, T, z, opt.orientation,
                             opt.saddle_tol);
}

/// Recomposes phi_z from retained per-element pieces.
template <class Scalar>
Eigen::SparseVector<Scalar> node_corrector(const CorrectorSet<Scalar>& set,
                                           const MeshHierarchy& hier,
                                           const QuasiInterpolator& ih, int z)
{
  if (ih.row_of_node[z] < 0) throw std::invalid_argument("z is a constrained coarse vertex");
  if (!set.has_pieces ||
      set.pieces.size() != static_cast<std::size_t>(hier.coarse.n_elements()))
    throw std::invalid_argument("element pieces missing from the corrector set");
  FieldVector<Scalar> acc = FieldVector<Scalar>::Zero(hier.fine.n_nodes());
  const Mesh& cm = hier.coarse;
  for (int T = 0; T < cm.n_elements(); ++T)
    for (int v = 0; v < cm.verts_per_elem(); ++v)
      if (cm.elements[T][v] == z)
        for (typename Eigen::SparseVector<Scalar>::InnerIterator it(set.pieces[T][v]); it; ++it)
          acc[it.index()] += it.value();
  Eigen::SparseVector<Scalar> phi(hier.fine.n_nodes());
  for (int i = 0; i < acc.size(); ++i)
    if (acc[i] != Scalar{}) phi.insertBack(i) = acc[i];
  return phi;
}

/// Single test function Lambda_z = P lambda_z + phi_z as a fine vector.
template <class Scalar>
FieldVector<Scalar> test_basis(const MeshHierarchy& hier, const QuasiInterpolator& ih,
                               const CorrectorSet<Scalar>& set, int z)
{
  const int row = ih.row_of_node[z];
  if (row < 0) throw std::invalid_argument("z is a constrained coarse vertex");
  RealVector hat = RealVector::Zero(hier.coarse.n_nodes());
  hat[z] = 1.0;
  const RealVector fine_hat = prolongation(hier) * hat;
  FieldVector<Scalar> out(hier.fine.n_nodes());
  for (int i = 0; i < out.size(); ++i) out[i] = Scalar(fine_hat[i]);
  for (typename Eigen::SparseVector<Scalar>::InnerIterator it(set.phi[row]); it; ++it)
    out[it.index()] += it.value();
  return out;
}

/// Test basis matrix Lambda (fine nodes x coarse free nodes):
/// Lambda_z = P lambda_z + phi_z.
template <class Scalar>
SparseOperator<Scalar> test_basis_matrix(const MeshHierarchy& hier, const QuasiInterpolator& ih,
                                         const CorrectorSet<Scalar>& correctors)
{
  const RealSparse p = prolongation(hier);
  std::vector<Eigen::Triplet<Scalar>> trips;
  Eigen::SparseMatrix<double, Eigen::ColMajor, int> p_col(p);
  for (int r = 0; r < ih.n_rows(); ++r) {
    const int z = ih.free_nodes[r];
    for (Eigen::SparseMatrix<double, Eigen::ColMajor, int>::InnerIterator it(p_col, z); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), r, Scalar(it.value()));
    for (typename Eigen::SparseVector<Scalar>::InnerIterator it(correctors.phi[r]); it; ++it)
      trips.emplace_back(static_cast<int>(it.index()), r, it.value());
  }
  SparseOperator<Scalar> lambda(hier.fine.n_nodes(), ih.n_rows());
  lambda.setFromTriplets(trips.begin(), trips.end());
  lambda.makeCompressed();
  return lambda;
}

} // namespace mspg
