/// @file assembly.hpp
/// @brief P1 finite element assembly (stiffness, mass, Robin boundary, loads),
///        coarse-to-fine prolongation, Dirichlet elimination and sparse solves.
///
/// All P1 x P1 products are integrated exactly for elementwise-constant data,
/// and accumulation runs in a fixed element order so assembled matrices are
/// bit-reproducible and exactly symmetric.
#pragma once

#include "mspg/mesh.hpp"
#include "mspg/types.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>
#include <Eigen/IterativeLinearSolvers>
#include <unsupported/Eigen/IterativeSolvers>

#include <functional>
#include <iostream>
#include <optional>
#include <vector>

namespace mspg {

using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;

/// Exact P1 mass matrix of a single element ((d+1) x (d+1)).
inline Eigen::Matrix3d element_mass(const Mesh& mesh, int e)
{
  const double m = mesh.measure(e);
  Eigen::Matrix3d mm = Eigen::Matrix3d::Zero();
  const int nv = mesh.verts_per_elem();
  const double off = m / (nv == 2 ? 6.0 : 12.0);
  for (int i = 0; i < nv; ++i)
    for (int j = 0; j < nv; ++j) mm(i, j) = (i == j) ? 2.0 * off : off;
  return mm;
}

/// Exact P1 stiffness matrix of a single element with constant coefficient.
inline Eigen::Matrix3d element_stiffness(const Mesh& mesh, int e, double coeff)
{
  const double m = mesh.measure(e);
  const auto g = mesh.gradients(e);
  Eigen::Matrix3d km = Eigen::Matrix3d::Zero();
  const int nv = mesh.verts_per_elem();
  for (int i = 0; i < nv; ++i)
    for (int j = 0; j < nv; ++j)
      km(i, j) = coeff * m * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
  return km;
}

/// Stiffness operator for one positive coefficient value per element.
inline RealSparse assemble_stiffness(const Mesh& mesh, const std::vector<double>& coeff)
{
  if (static_cast<int>(coeff.size()) != mesh.n_elements())
    throw std::invalid_argument("coefficient sample count != element count");
  std::vector<Eigen::Triplet<double>> trips;
  const int nv = mesh.verts_per_elem();
  trips.reserve(static_cast<std::size_t>(mesh.n_elements()) * nv * nv);
  for (int e = 0; e < mesh.n_elements(); ++e) {
    if (!(coeff[e] > 0.0))
      throw std::invalid_argument("nonpositive diffusion coefficient on element " +
                                  std::to_string(e));
    const auto km = element_stiffness(mesh, e, coeff[e]);
    const auto& el = mesh.elements[e];
    for (int i = 0; i < nv; ++i)
      for (int j = 0; j < nv; ++j) trips.emplace_back(el[i], el[j], km(i, j));
  }
  RealSparse op(mesh.n_nodes(), mesh.n_nodes());
  op.setFromTriplets(trips.begin(), trips.end());
  op.makeCompressed();
  return op;
}

inline RealSparse assemble_stiffness(const Mesh& mesh, double coeff = 1.0)
{
  return assemble_stiffness(mesh, std::vector<double>(mesh.n_elements(), coeff));
}

inline RealSparse assemble_mass(const Mesh& mesh)
{
  std::vector<Eigen::Triplet<double>> trips;
  const int nv = mesh.verts_per_elem();
  trips.reserve(static_cast<std::size_t>(mesh.n_elements()) * nv * nv);
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const auto mm = element_mass(mesh, e);
    const auto& el = mesh.elements[e];
    for (int i = 0; i < nv; ++i)
      for (int j = 0; j < nv; ++j) trips.emplace_back(el[i], el[j], mm(i, j));
  }
  RealSparse op(mesh.n_nodes(), mesh.n_nodes());
  op.setFromTriplets(trips.begin(), trips.end());
  op.makeCompressed();
  return op;
}

/// Facet-wise P1 boundary mass over the ROBIN part: per 2D edge of length e
/// the block (e/6)[[2,1],[1,2]]; in 1D the Robin facet is a point.
inline RealSparse assemble_robin_mass(const Mesh& mesh)
{
  std::vector<Eigen::Triplet<double>> trips;
  for (const auto& f : mesh.boundary) {
    if (f.tag != BoundaryTag::Robin) continue;
    if (mesh.dim == 1) {
      trips.emplace_back(f.nodes[0], f.nodes[0], 1.0);
    } else {
      const auto& a = mesh.nodes[f.nodes[0]];
      const auto& b = mesh.nodes[f.nodes[1]];
      const double len = std::hypot(b[0] - a[0], b[1] - a[1]);
      trips.emplace_back(f.nodes[0], f.nodes[0], len / 3.0);
      trips.emplace_back(f.nodes[1], f.nodes[1], len / 3.0);
      trips.emplace_back(f.nodes[0], f.nodes[1], len / 6.0);
      trips.emplace_back(f.nodes[1], f.nodes[0], len / 6.0);
    }
  }
  RealSparse op(mesh.n_nodes(), mesh.n_nodes());
  op.setFromTriplets(trips.begin(), trips.end());
  op.makeCompressed();
  return op;
}

/// Load vector for elementwise-constant f (exact integrals).
template <class Scalar>
FieldVector<Scalar> assemble_load(const Mesh& mesh, const std::vector<Scalar>& elem_values)
{
  if (static_cast<int>(elem_values.size()) != mesh.n_elements())
    throw std::invalid_argument("load sample count != element count");
  FieldVector<Scalar> load = FieldVector<Scalar>::Zero(mesh.n_nodes());
  const int nv = mesh.verts_per_elem();
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const Scalar w = elem_values[e] * (mesh.measure(e) / static_cast<double>(nv));
    const auto& el = mesh.elements[e];
    for (int v = 0; v < nv; ++v) load[el[v]] += w;
  }
  return load;
}

/// Load vector for an analytic f: nodal interpolation paired with the exact
/// P1 mass, i.e. the load of the P1 interpolant of f (exact for affine f).
template <class F>
auto assemble_load(const Mesh& mesh, F&& f)
    -> FieldVector<decltype(f(0.0, 0.0))>
{
  using Scalar = decltype(f(0.0, 0.0));
  FieldVector<Scalar> nodal(mesh.n_nodes());
  for (int i = 0; i < mesh.n_nodes(); ++i) nodal[i] = f(mesh.nodes[i][0], mesh.nodes[i][1]);
  FieldVector<Scalar> load = FieldVector<Scalar>::Zero(mesh.n_nodes());
  const int nv = mesh.verts_per_elem();
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const auto mm = element_mass(mesh, e);
    const auto& el = mesh.elements[e];
    for (int i = 0; i < nv; ++i) {
      Scalar acc{};
      for (int j = 0; j < nv; ++j) acc += mm(i, j) * nodal[el[j]];
      load[el[i]] += acc;
    }
  }
  return load;
}

/// Helmholtz operator stiffness - kappa^2 mass + robin_sign * i kappa robin_mass.
/// The default sign follows the outgoing-wave convention of the scattering
/// problem; complex symmetric (equal to its plain transpose), not Hermitian.
inline ComplexSparse helmholtz_operator(const Mesh& mesh, double kappa,
                                        double robin_sign = -1.0)
{
  if (!(kappa > 0.0)) throw std::invalid_argument("wave number must be positive");
  bool has_robin = false;
  for (const auto& f : mesh.boundary)
    if (f.tag == BoundaryTag::Robin) {
      has_robin = true;
      break;
    }
  if (!has_robin)
    std::cerr << "[mspg] warning: Helmholtz operator without Robin facets; "
                 "the problem may be ill-posed near resonances\n";
  const RealSparse k = assemble_stiffness(mesh, 1.0);
  const RealSparse m = assemble_mass(mesh);
  const RealSparse r = assemble_robin_mass(mesh);
  ComplexSparse op = k.cast<Complex>();
  op -= ComplexSparse((kappa * kappa) * m.cast<Complex>());
  op += ComplexSparse(Complex(0.0, robin_sign * kappa) * r.cast<Complex>());
  op.makeCompressed();
  return op;
}

/// Prolongation (fine nodes x coarse nodes): exact P1 interpolation weights,
/// i.e. P[k,z] = lambda_z(x_k). Rows sum to one.
inline RealSparse prolongation(const MeshHierarchy& hier)
{
  const Mesh& fm = hier.fine;
  const Mesh& cm = hier.coarse;
  std::vector<Eigen::Triplet<double>> trips;
  std::vector<char> done(fm.n_nodes(), 0);
  trips.reserve(static_cast<std::size_t>(fm.n_nodes()) * (cm.dim + 1));
  for (int ce = 0; ce < cm.n_elements(); ++ce) {
    const auto grads = cm.gradients(ce);
    const auto& cel = cm.elements[ce];
    for (int fe : hier.children[ce]) {
      const auto& fel = fm.elements[fe];
      for (int v = 0; v < fm.verts_per_elem(); ++v) {
        const int fn = fel[v];
        if (done[fn]) continue;
        done[fn] = 1;
        const auto& x = fm.nodes[fn];
        for (int a = 0; a < cm.verts_per_elem(); ++a) {
          const auto& va = cm.nodes[cel[a]];
          const double w =
              1.0 + grads[a][0] * (x[0] - va[0]) + grads[a][1] * (x[1] - va[1]);
          if (w != 0.0) trips.emplace_back(fn, cel[a], w);
        }
      }
    }
  }
  RealSparse p(fm.n_nodes(), cm.n_nodes());
  p.setFromTriplets(trips.begin(), trips.end());
  p.makeCompressed();
  return p;
}

/// Reduced system on free nodes after eliminating Dirichlet values, with the
/// record needed to rebuild full vectors.
template <class Scalar>
struct ConstrainedSystem {
  SparseOperator<Scalar> reduced;
  FieldVector<Scalar> rhs;
  std::vector<int> free_nodes;
  std::vector<int> node_to_free; // -1 where constrained
  std::vector<int> dirichlet_nodes;
  FieldVector<Scalar> dirichlet_values;

  FieldVector<Scalar> full(const FieldVector<Scalar>& u_free) const
  {
    FieldVector<Scalar> u = FieldVector<Scalar>::Zero(node_to_free.size());
    for (std::size_t i = 0; i < free_nodes.size(); ++i) u[free_nodes[i]] = u_free[i];
    for (std::size_t i = 0; i < dirichlet_nodes.size(); ++i)
      u[dirichlet_nodes[i]] = dirichlet_values[i];
    return u;
  }
};

/// Eliminates the given Dirichlet nodes: rhs <- rhs - op * lifting on the free
/// block. Every constrained node must actually be tagged Dirichlet in `mesh`.
template <class Scalar>
ConstrainedSystem<Scalar> constrain_dirichlet(const SparseOperator<Scalar>& op,
                                              const FieldVector<Scalar>& rhs,
                                              const Mesh& mesh,
                                              const std::vector<int>& nodes,
                                              const FieldVector<Scalar>& values)
{
  const int n = static_cast<int>(op.rows());
  if (op.cols() != n || rhs.size() != n || n != mesh.n_nodes())
    throw std::invalid_argument("operator/rhs/mesh size mismatch");
  if (static_cast<Eigen::Index>(nodes.size()) != values.size())
    throw std::invalid_argument("dirichlet node/value count mismatch");

  std::vector<char> tagged(n, 0);
  for (const auto& f : mesh.boundary)
    if (f.tag == BoundaryTag::Dirichlet)
      for (int k = 0; k < (mesh.dim == 1 ? 1 : 2); ++k) tagged[f.nodes[k]] = 1;
  for (int nd : nodes)
    if (nd < 0 || nd >= n || !tagged[nd])
      throw std::invalid_argument("Dirichlet value prescribed at non-Dirichlet node " +
                                  std::to_string(nd));

  ConstrainedSystem<Scalar> sys;
  sys.dirichlet_nodes = nodes;
  sys.dirichlet_values = values;
  sys.node_to_free.assign(n, -1);
  std::vector<char> constrained(n, 0);
  for (int nd : nodes) constrained[nd] = 1;
  for (int i = 0; i < n; ++i) {
    if (constrained[i]) continue;
    sys.node_to_free[i] = static_cast<int>(sys.free_nodes.size());
    sys.free_nodes.push_back(i);
  }

  FieldVector<Scalar> lifting = FieldVector<Scalar>::Zero(n);
  for (std::size_t i = 0; i < nodes.size(); ++i) lifting[nodes[i]] = values[i];
  const FieldVector<Scalar> shifted = rhs - op * lifting;

  const int nfree = static_cast<int>(sys.free_nodes.size());
  sys.rhs.resize(nfree);
  for (int i = 0; i < nfree; ++i) sys.rhs[i] = shifted[sys.free_nodes[i]];

  std::vector<Eigen::Triplet<Scalar>> trips;
  trips.reserve(op.nonZeros());
  for (int i = 0; i < nfree; ++i) {
    const int row = sys.free_nodes[i];
    for (typename SparseOperator<Scalar>::InnerIterator it(op, row); it; ++it) {
      const int j = sys.node_to_free[it.col()];
      if (j >= 0) trips.emplace_back(i, j, it.value());
    }
  }
  sys.reduced.resize(nfree, nfree);
  sys.reduced.setFromTriplets(trips.begin(), trips.end());
  sys.reduced.makeCompressed();
  return sys;
}

enum class SolveMethod { DirectLU, ConjugateGradient, Gmres };

struct SolveFailure : std::runtime_error {
  double best_residual;
  SolveFailure(const std::string& what, double res)
      : std::runtime_error(what), best_residual(res)
  {
  }
};

namespace detail {

template <class Scalar>
double relative_residual(const SparseOperator<Scalar>& op, const FieldVector<Scalar>& x,
                         const FieldVector<Scalar>& rhs)
{
  const double denom = rhs.norm();
  if (denom == 0.0) return (op * x).norm();
  return (op * x - rhs).norm() / denom;
}

template <class Scalar>
bool numerically_symmetric(const SparseOperator<Scalar>& op)
{
  SparseOperator<Scalar> diff = SparseOperator<Scalar>(op.transpose()) - op;
  double scale = 0.0, err = 0.0;
  for (int k = 0; k < op.outerSize(); ++k)
    for (typename SparseOperator<Scalar>::InnerIterator it(op, k); it; ++it)
      scale = std::max(scale, std::abs(it.value()));
  for (int k = 0; k < diff.outerSize(); ++k)
    for (typename SparseOperator<Scalar>::InnerIterator it(diff, k); it; ++it)
      err = std::max(err, std::abs(it.value()));
  return err <= 1e-12 * std::max(scale, 1e-300);
}

} // namespace detail

/// Direct or iterative solve with a relative-residual contract.
template <class Scalar>
FieldVector<Scalar> solve(const SparseOperator<Scalar>& op, const FieldVector<Scalar>& rhs,
                          SolveMethod method = SolveMethod::DirectLU, double tol = 1e-12)
{
  using ColMajor = Eigen::SparseMatrix<Scalar, Eigen::ColMajor, int>;
  if (op.rows() != op.cols() || op.rows() != rhs.size())
    throw std::invalid_argument("solve: dimension mismatch");
  FieldVector<Scalar> x;

  switch (method) {
    case SolveMethod::DirectLU: {
      ColMajor a(op);
      Eigen::SparseLU<ColMajor, Eigen::COLAMDOrdering<int>> lu;
      lu.compute(a);
      if (lu.info() != Eigen::Success)
        throw SolveFailure("sparse LU factorization failed", std::numeric_limits<double>::infinity());
      x = lu.solve(rhs);
      // a few refinement sweeps keep the contract on ill-conditioned systems
      for (int sweep = 0; sweep < 3; ++sweep) {
        if (detail::relative_residual(op, x, rhs) <= tol) break;
        x += lu.solve(FieldVector<Scalar>(rhs - op * x));
      }
      break;
    }
    case SolveMethod::ConjugateGradient: {
      if constexpr (is_complex_v<Scalar>) {
        throw std::invalid_argument("CG requested for a complex (non-SPD) operator");
      } else {
        bool diag_positive = true;
        for (int i = 0; i < op.rows(); ++i)
          if (!(op.coeff(i, i) > Scalar(0))) diag_positive = false;
        if (!diag_positive || !detail::numerically_symmetric(op))
          throw std::invalid_argument("CG requested for a non-SPD operator");
        ColMajor a(op);
        Eigen::ConjugateGradient<ColMajor, Eigen::Lower | Eigen::Upper> cg;
        cg.setTolerance(tol);
        cg.setMaxIterations(20 * op.rows());
        cg.compute(a);
        x = cg.solve(rhs);
        if (cg.info() != Eigen::Success)
          throw SolveFailure("CG did not reach tolerance", cg.error());
      }
      break;
    }
    case SolveMethod::Gmres: {
      ColMajor a(op);
      Eigen::GMRES<ColMajor, Eigen::IdentityPreconditioner> gmres;
      gmres.setTolerance(tol);
      gmres.setMaxIterations(10 * op.rows());
      gmres.compute(a);
      x = gmres.solve(rhs);
      if (gmres.info() != Eigen::Success)
        throw SolveFailure("GMRES did not reach tolerance", gmres.error());
      break;
    }
  }

  const double res = detail::relative_residual(op, x, rhs);
  if (!(res <= tol) && rhs.norm() > 0.0)
    throw SolveFailure("solve residual " + std::to_string(res) + " above tolerance", res);
  return x;
}

/// Extracts op(rows, cols) with local indices; index lists must be sorted.
template <class Scalar>
SparseOperator<Scalar> submatrix(const SparseOperator<Scalar>& op,
                                 const std::vector<int>& rows, const std::vector<int>& cols)
{
  std::vector<int> col_local(op.cols(), -1);
  for (std::size_t j = 0; j < cols.size(); ++j) col_local[cols[j]] = static_cast<int>(j);
  std::vector<Eigen::Triplet<Scalar>> trips;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (typename SparseOperator<Scalar>::InnerIterator it(op, rows[i]); it; ++it) {
      const int j = col_local[it.col()];
      if (j >= 0) trips.emplace_back(static_cast<int>(i), j, it.value());
    }
  }
  SparseOperator<Scalar> out(static_cast<int>(rows.size()), static_cast<int>(cols.size()));
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

/// Coordinate text export: one `row col value` triplet per line (two value
/// columns, real then imaginary, for complex operators).
template <class Scalar>
void export_triplets(const SparseOperator<Scalar>& op, std::ostream& os)
{
  for (int k = 0; k < op.outerSize(); ++k) {
    for (typename SparseOperator<Scalar>::InnerIterator it(op, k); it; ++it) {
      os << it.row() << ' ' << it.col() << ' ';
      if constexpr (is_complex_v<Scalar>)
        os << it.value().real() << ' ' << it.value().imag();
      else
        os << it.value();
      os << '\n';
    }
  }
}

} // namespace mspg
