/// @file interpolation.hpp
/// @brief The quasi-interpolation I_H = E_H o Pi_H as a sparse map from fine
///        nodal vectors onto coarse free-node vectors.
///
/// Pi_H is the elementwise L2 projection onto P1 of each coarse element,
/// computed exactly from the fine mass matrices of the element's children.
/// E_H assigns to every free coarse vertex the arithmetic mean of the
/// projected values over its adjacent elements; Dirichlet vertices are
/// dropped so the range lies in the constrained coarse space.
#pragma once

#include "mspg/assembly.hpp"
#include "mspg/mesh.hpp"
#include "mspg/types.hpp"

#include <Eigen/SparseCholesky>

#include <unordered_map>
#include <vector>

namespace mspg {

struct QuasiInterpolator {
  using ColMajor = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

  RealSparse op;               // (coarse free nodes) x (fine nodes)
  ColMajor op_col;             // same operator, column-compressed (support queries)
  std::vector<int> free_nodes; // row -> coarse node
  std::vector<int> row_of_node; // coarse node -> row, -1 if Dirichlet
  int n_fine = 0;

  int n_rows() const { return static_cast<int>(free_nodes.size()); }

  template <class Scalar>
  FieldVector<Scalar> apply(const FieldVector<Scalar>& fine_vec) const
  {
    if constexpr (is_complex_v<Scalar>) {
      FieldVector<Scalar> out(n_rows());
      out.real() = op * fine_vec.real();
      out.imag() = op * fine_vec.imag();
      return out;
    } else {
      return op * fine_vec;
    }
  }
};

inline QuasiInterpolator build_interpolator(const MeshHierarchy& hier)
{
  const Mesh& cm = hier.coarse;
  const Mesh& fm = hier.fine;
  QuasiInterpolator ih;
  ih.n_fine = fm.n_nodes();

  std::vector<char> dirichlet(cm.n_nodes(), 0);
  for (int n : cm.tagged_nodes(BoundaryTag::Dirichlet)) dirichlet[n] = 1;
  ih.row_of_node.assign(cm.n_nodes(), -1);
  for (int n = 0; n < cm.n_nodes(); ++n) {
    if (dirichlet[n]) continue;
    ih.row_of_node[n] = ih.n_rows();
    ih.free_nodes.push_back(n);
  }

  const int nv = cm.verts_per_elem();
  std::vector<Eigen::Triplet<double>> trips;

  std::vector<int> local_of(fm.n_nodes(), -1);
  std::vector<int> local_nodes;
  for (int ce = 0; ce < cm.n_elements(); ++ce) {
    // collect the fine nodes of T's children
    local_nodes.clear();
    for (int fe : hier.children[ce]) {
      for (int v = 0; v < fm.verts_per_elem(); ++v) {
        const int fn = fm.elements[fe][v];
        if (local_of[fn] < 0) {
          local_of[fn] = static_cast<int>(local_nodes.size());
          local_nodes.push_back(fn);
        }
      }
    }
    const int nloc = static_cast<int>(local_nodes.size());

    // coarse barycentric weights at the local fine nodes
    const auto grads = cm.gradients(ce);
    const auto& cel = cm.elements[ce];
    DenseMatrix lambda(nv, nloc);
    for (int j = 0; j < nloc; ++j) {
      const auto& x = fm.nodes[local_nodes[j]];
      for (int a = 0; a < nv; ++a) {
        const auto& va = cm.nodes[cel[a]];
        lambda(a, j) = 1.0 + grads[a][0] * (x[0] - va[0]) + grads[a][1] * (x[1] - va[1]);
      }
    }

    // moments B(a,j) = int_T phi_j lambda_a, exact via child mass matrices
    DenseMatrix moments = DenseMatrix::Zero(nv, nloc);
    for (int fe : hier.children[ce]) {
      const auto mt = element_mass(fm, fe);
      const auto& fel = fm.elements[fe];
      for (int i = 0; i < fm.verts_per_elem(); ++i) {
        const int li = local_of[fel[i]];
        for (int a = 0; a < nv; ++a) {
          double acc = 0.0;
          for (int k = 0; k < fm.verts_per_elem(); ++k)
            acc += mt(i, k) * lambda(a, local_of[fel[k]]);
          moments(a, li) += acc;
        }
      }
    }

    // vertex values of the local L2 projection: solve M_T c = B
    const Eigen::Matrix3d mT = element_mass(cm, ce);
    DenseMatrix coeffs;
    if (nv == 2)
      coeffs = mT.topLeftCorner<2, 2>().inverse() * moments;
    else
      coeffs = mT.inverse() * moments;

    // E_H: average into free vertices with weight 1/card{K : z in K}
    for (int a = 0; a < nv; ++a) {
      const int z = cel[a];
      const int row = ih.row_of_node[z];
      if (row < 0) continue;
      const double card = static_cast<double>(cm.node_elem_offsets[z + 1] -
                                              cm.node_elem_offsets[z]);
      for (int j = 0; j < nloc; ++j) {
        const double w = coeffs(a, j) / card;
        if (w != 0.0) trips.emplace_back(row, local_nodes[j], w);
      }
    }

    for (int fn : local_nodes) local_of[fn] = -1;
  }

  ih.op.resize(ih.n_rows(), fm.n_nodes());
  ih.op.setFromTriplets(trips.begin(), trips.end());
  ih.op.prune([](int, int, double v) { return std::abs(v) > 1e-300; });
  ih.op.makeCompressed();
  ih.op_col = QuasiInterpolator::ColMajor(ih.op);
  return ih;
}

/// Rows/columns of I_H active on a patch: rows are the coarse free nodes whose
/// stencil touches the patch's free fine nodes, columns the free fine nodes.
struct PatchConstraints {
  RealSparse C;          // (#rows) x (#patch free fine nodes), local columns
  std::vector<int> rows; // coarse node ids (not row indices)
};

inline PatchConstraints constraint_rows(const QuasiInterpolator& ih, const Patch& patch)
{
  std::vector<int> col_local(ih.n_fine, -1);
  for (std::size_t j = 0; j < patch.free_fine_nodes.size(); ++j)
    col_local[patch.free_fine_nodes[j]] = static_cast<int>(j);

  // discover the touched rows through the column-compressed copy
  std::vector<int> touched;
  std::vector<char> row_touched(ih.n_rows(), 0);
  for (int fn : patch.free_fine_nodes) {
    for (QuasiInterpolator::ColMajor::InnerIterator it(ih.op_col, fn); it; ++it) {
      if (!row_touched[it.row()]) {
        row_touched[it.row()] = 1;
        touched.push_back(it.row());
      }
    }
  }
  std::sort(touched.begin(), touched.end());

  PatchConstraints pc;
  std::vector<Eigen::Triplet<double>> trips;
  for (std::size_t lr = 0; lr < touched.size(); ++lr) {
    const int r = touched[lr];
    pc.rows.push_back(ih.free_nodes[r]);
    for (RealSparse::InnerIterator it(ih.op, r); it; ++it) {
      const int j = col_local[it.col()];
      if (j >= 0) trips.emplace_back(static_cast<int>(lr), j, it.value());
    }
  }
  pc.C.resize(static_cast<int>(touched.size()), static_cast<int>(patch.free_fine_nodes.size()));
  pc.C.setFromTriplets(trips.begin(), trips.end());
  pc.C.makeCompressed();
  return pc;
}

/// Largest generalized singular value of v -> P I_H v in the norm induced by
/// `gram` (restricted to the free fine nodes), via power iteration.
inline double ih_operator_norm(const QuasiInterpolator& ih, const RealSparse& prolong,
                               const RealSparse& gram, const std::vector<int>& fine_free,
                               double rel_tol = 1e-6, int max_iter = 500)
{
  const int nfree = static_cast<int>(fine_free.size());
  RealSparse g = submatrix(gram, fine_free, fine_free);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt;
  ldlt.compute(Eigen::SparseMatrix<double>(g));
  if (ldlt.info() != Eigen::Success)
    throw std::invalid_argument("V-norm Gram matrix is not SPD on the free nodes");

  // I_H rows cover only free coarse nodes; scattering through free_nodes
  // restricts P to the free coarse columns implicitly
  auto apply_Q = [&](const RealVector& x_free) {
    RealVector x_full = RealVector::Zero(ih.n_fine);
    for (int i = 0; i < nfree; ++i) x_full[fine_free[i]] = x_free[i];
    RealVector coarse = ih.op * x_full;
    RealVector coarse_full = RealVector::Zero(prolong.cols());
    for (int r = 0; r < ih.n_rows(); ++r) coarse_full[ih.free_nodes[r]] = coarse[r];
    RealVector fine = prolong * coarse_full;
    RealVector out(nfree);
    for (int i = 0; i < nfree; ++i) out[i] = fine[fine_free[i]];
    return out;
  };
  auto apply_Qt = [&](const RealVector& y_free) {
    RealVector y_full = RealVector::Zero(ih.n_fine);
    for (int i = 0; i < nfree; ++i) y_full[fine_free[i]] = y_free[i];
    RealVector coarse_full = RealSparse(prolong.transpose()) * y_full;
    RealVector coarse(ih.n_rows());
    for (int r = 0; r < ih.n_rows(); ++r) coarse[r] = coarse_full[ih.free_nodes[r]];
    RealVector fine = RealSparse(ih.op.transpose()) * coarse;
    RealVector out(nfree);
    for (int i = 0; i < nfree; ++i) out[i] = fine[fine_free[i]];
    return out;
  };

  SplitMix64 rng(0x51D2E4u);
  RealVector x(nfree);
  for (int i = 0; i < nfree; ++i) x[i] = rng.next_unit() - 0.5;
  x /= std::sqrt(x.dot(g * x));

  double lambda_prev = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    RealVector qx = apply_Q(x);
    const double lambda = qx.dot(g * qx); // Rayleigh quotient, x is G-normalized
    RealVector y = ldlt.solve(apply_Qt(g * qx));
    const double ynorm = std::sqrt(y.dot(g * y));
    if (ynorm == 0.0) return 0.0;
    x = y / ynorm;
    if (it > 2 && std::abs(lambda - lambda_prev) <= rel_tol * std::abs(lambda))
      return std::sqrt(lambda);
    lambda_prev = lambda;
  }
  throw std::runtime_error("ih_operator_norm: power iteration did not converge");
}

} // namespace mspg
