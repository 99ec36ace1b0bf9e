/// @file analysis.hpp
/// @brief Error norms against fine references, coarse best-approximation
///        comparators, corrector decay profiles and the discrete inf-sup
///        diagnostic.
#pragma once

#include "mspg/discretization.hpp"
#include "mspg/interpolation.hpp"
#include "mspg/mesh.hpp"

#include <Eigen/Cholesky>
#include <Eigen/SVD>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace mspg {

struct ErrorPair {
  double l2_rel = 0.0;
  double v_rel = 0.0;
};

namespace detail {

template <class Scalar>
double quadratic_form(const RealSparse& g, const FieldVector<Scalar>& v)
{
  if constexpr (is_complex_v<Scalar>) {
    return v.real().dot(g * v.real()) + v.imag().dot(g * v.imag());
  } else {
    return v.dot(g * v);
  }
}

} // namespace detail

/// Relative L2 and V-norm errors of a coarse solution (full coarse nodal
/// vector, prolonged internally) against a fine reference.
template <class Scalar>
ErrorPair error_norms(const FieldVector<Scalar>& u_coarse_full,
                      const FieldVector<Scalar>& u_ref, const MeshHierarchy& hier,
                      const DiscreteOperators<Scalar>& d)
{
  if (u_coarse_full.size() != hier.coarse.n_nodes())
    throw std::invalid_argument("coarse vector does not match the coarse mesh");
  if (u_ref.size() != hier.fine.n_nodes() || d.mesh != &hier.fine)
    throw std::invalid_argument("reference vector does not match the fine mesh");

  const RealSparse p = prolongation(hier);
  FieldVector<Scalar> diff(hier.fine.n_nodes());
  if constexpr (is_complex_v<Scalar>) {
    diff.real() = p * u_coarse_full.real();
    diff.imag() = p * u_coarse_full.imag();
  } else {
    diff = p * u_coarse_full;
  }
  diff -= u_ref;

  const RealSparse vg = d.v_norm_gram();
  ErrorPair err;
  const double l2_den = detail::quadratic_form(d.mass, u_ref);
  const double v_den = detail::quadratic_form(vg, u_ref);
  err.l2_rel = std::sqrt(detail::quadratic_form(d.mass, diff) / l2_den);
  err.v_rel = std::sqrt(detail::quadratic_form(vg, diff) / v_den);
  return err;
}

enum class NormSelector { L2, V };

/// Relative error of the G-orthogonal projection of u_ref onto the prolonged
/// coarse space (free nodes span, Dirichlet data fixed by the problem): the
/// best approximation the coarse mesh admits in the selected norm.
template <class Scalar>
double best_approximation(const FieldVector<Scalar>& u_ref, const MeshHierarchy& hier,
                          const DiscreteOperators<Scalar>& d, NormSelector norm,
                          const QuasiInterpolator& ih)
{
  const RealSparse g = norm == NormSelector::L2 ? d.mass : d.v_norm_gram();
  const RealSparse p = prolongation(hier);
  std::vector<int> all(hier.fine.n_nodes());
  for (int i = 0; i < hier.fine.n_nodes(); ++i) all[i] = i;
  const RealSparse pf = submatrix(p, all, ih.free_nodes);

  // fix the coarse Dirichlet data, project the remainder onto the free span
  FieldVector<Scalar> g_coarse = FieldVector<Scalar>::Zero(hier.coarse.n_nodes());
  for (int z : hier.coarse.tagged_nodes(BoundaryTag::Dirichlet)) {
    const auto& pt = hier.coarse.nodes[z];
    const Complex gz = d.spec.dirichlet_value(pt[0], pt[1]);
    if constexpr (is_complex_v<Scalar>)
      g_coarse[z] = gz;
    else
      g_coarse[z] = gz.real();
  }
  FieldVector<Scalar> target = u_ref;
  if constexpr (is_complex_v<Scalar>) {
    target.real() -= p * g_coarse.real();
    target.imag() -= p * g_coarse.imag();
  } else {
    target -= p * g_coarse;
  }

  const Eigen::SparseMatrix<double> pfc(pf);
  const Eigen::SparseMatrix<double> gp = Eigen::SparseMatrix<double>(g) * pfc;
  const Eigen::SparseMatrix<double> gram = Eigen::SparseMatrix<double>(pfc.transpose()) * gp;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(gram);
  if (ldlt.info() != Eigen::Success)
    throw std::invalid_argument("projection Gram matrix is not SPD");

  const RealSparse pft(pf.transpose());
  FieldVector<Scalar> residual = target;
  if constexpr (is_complex_v<Scalar>) {
    RealVector cre = ldlt.solve(pft * (g * target.real()));
    RealVector cim = ldlt.solve(pft * (g * target.imag()));
    residual.real() -= pf * cre;
    residual.imag() -= pf * cim;
  } else {
    FieldVector<Scalar> c = ldlt.solve(pft * (g * target));
    residual -= pf * c;
  }
  return std::sqrt(detail::quadratic_form(g, residual) /
                   detail::quadratic_form(g, u_ref));
}

/// Tail norms of a corrector outside growing balls around its node, with the
/// fitted exponential decay rate.
struct DecayProfile {
  int node = -1;                 // coarse node z
  std::vector<double> radii;     // R_k = k H
  std::vector<double> tails;     // ||phi||_{V, Omega \ B_{R_k}(z)}
  int window = 0;                // leading tails above the noise floor
  double rate_c = 0.0;           // fitted slope of -log(tail) vs R/H
  double intercept = 0.0;        // fitted log C
  double r_squared = 0.0;
  double max_ratio = 0.0;        // max tail_{k+1}/tail_k within the window
};

template <class Scalar>
DecayProfile decay_profile(const FieldVector<Scalar>& phi, int z, const MeshHierarchy& hier,
                           const DiscreteOperators<Scalar>& d, double floor_rel = 1e-7)
{
  if (phi.size() != hier.fine.n_nodes())
    throw std::invalid_argument("corrector vector does not match the fine mesh");
  const Mesh& fm = hier.fine;
  const auto& center = hier.coarse.nodes[z];
  const double H = hier.H();

  // elementwise V-norm energies (kappa-weighted for Helmholtz)
  std::vector<double> energy(fm.n_elements(), 0.0);
  std::vector<double> dist(fm.n_elements(), 0.0);
  const int nv = fm.verts_per_elem();
  for (int e = 0; e < fm.n_elements(); ++e) {
    const auto k = element_stiffness(fm, e, 1.0);
    const auto m = element_mass(fm, e);
    const auto& el = fm.elements[e];
    double acc = 0.0;
    for (int i = 0; i < nv; ++i)
      for (int j = 0; j < nv; ++j) {
        const double w = k(i, j) + d.kappa * d.kappa * m(i, j);
        if constexpr (is_complex_v<Scalar>)
          acc += w * (std::conj(phi[el[i]]) * phi[el[j]]).real();
        else
          acc += w * phi[el[i]] * phi[el[j]];
      }
    energy[e] = std::max(acc, 0.0);
    const auto c = fm.centroid(e);
    dist[e] = std::hypot(c[0] - center[0], c[1] - center[1]);
  }
  const double total = std::sqrt(std::accumulate(energy.begin(), energy.end(), 0.0));
  const double max_dist = *std::max_element(dist.begin(), dist.end());

  DecayProfile prof;
  prof.node = z;
  for (int k = 1; k * H <= max_dist + H; ++k) {
    const double r = k * H;
    double tail = 0.0;
    for (int e = 0; e < fm.n_elements(); ++e)
      if (dist[e] > r) tail += energy[e];
    prof.radii.push_back(r);
    prof.tails.push_back(std::sqrt(tail));
    if (tail == 0.0) break;
  }

  // fit window: tails above the solver noise floor
  int usable = 0;
  while (usable < static_cast<int>(prof.tails.size()) &&
         prof.tails[usable] > floor_rel * total)
    ++usable;
  prof.window = usable;
  if (usable < 3)
    throw std::runtime_error("decay profile has fewer than 3 usable radii");

  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (int k = 0; k < usable; ++k) {
    const double x = prof.radii[k] / H;
    const double y = std::log(prof.tails[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
  }
  const double n = usable;
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  prof.rate_c = -slope;
  prof.intercept = (sy - slope * sx) / n;
  const double ss_tot = syy - sy * sy / n;
  double ss_res = 0.0;
  for (int k = 0; k < usable; ++k) {
    const double x = prof.radii[k] / H;
    const double y = std::log(prof.tails[k]);
    const double fit = prof.intercept + slope * x;
    ss_res += (y - fit) * (y - fit);
  }
  prof.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 0.0;
  prof.max_ratio = 0.0;
  for (int k = 0; k + 1 < usable; ++k)
    prof.max_ratio = std::max(prof.max_ratio, prof.tails[k + 1] / prof.tails[k]);
  return prof;
}

/// Smallest generalized singular value of the coarse matrix in the metrics
/// (trial Gram, test Gram): the discrete inf-sup diagnostic. Dense; meant for
/// the moderate coarse dimensions of this artifact. Grams must be Hermitian
/// positive definite.
template <class Scalar>
double infsup_estimate(const SparseOperator<Scalar>& m, const SparseOperator<Scalar>& gram_trial,
                       const SparseOperator<Scalar>& gram_test)
{
  const int n = static_cast<int>(m.rows());
  if (m.cols() != n || gram_trial.rows() != n || gram_test.rows() != n)
    throw std::invalid_argument("inf-sup estimate: dimension mismatch");

  using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Dense gv(gram_trial);
  Dense gw(gram_test);
  Eigen::LLT<Dense> lltv(gv);
  Eigen::LLT<Dense> lltw(gw);
  if (lltv.info() != Eigen::Success || lltw.info() != Eigen::Success)
    throw std::invalid_argument("inf-sup estimate: Gram matrix is not SPD");

  Dense md(m);
  Dense x = lltw.matrixL().solve(md);              // L_W^-1 M
  Dense y = lltv.matrixL().solve(Dense(x.adjoint())); // L_V^-1 (L_W^-1 M)^H
  Dense b = y.adjoint();                           // L_W^-1 M L_V^-H
  Eigen::JacobiSVD<Dense> svd(b);
  return svd.singularValues()[n - 1];
}

} // namespace mspg
