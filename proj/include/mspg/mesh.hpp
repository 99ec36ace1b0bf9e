/// @file mesh.hpp
/// @brief Structured simplicial meshes on the unit interval/square, uniform
///        refinement hierarchies, adjacency and l-layer element patches.
///
/// 2D meshes are Friedrichs-Keller triangulations: every square cell of the
/// lattice is split along the diagonal from (x,y) to (x+H,y+H), so uniform
/// refinement nests exactly and grid-conforming triangular holes can be
/// removed on all levels consistently.
#pragma once

#include "mspg/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <unordered_map>
#include <vector>

namespace mspg {

enum class BoundaryTag { None, Dirichlet, Robin };

inline const char* to_string(BoundaryTag t)
{
  switch (t) {
    case BoundaryTag::Dirichlet: return "DIRICHLET";
    case BoundaryTag::Robin: return "ROBIN";
    default: return "NONE";
  }
}

/// Facet on the topological boundary: a node in 1D, an edge in 2D.
struct BoundaryFacet {
  std::array<int, 2> nodes{-1, -1}; // nodes[1] unused in 1D
  BoundaryTag tag = BoundaryTag::None;
  int element = -1; // owning element
};

enum class DomainShape { Interval, Square, SquareWithHole };

/// How boundary facets are tagged, fixed by the model problem.
enum class BoundaryRule {
  AllDirichlet,
  AllRobin,
  LeftDirichletRightRobin, // 1D: x=0 Dirichlet, x=1 Robin
  HoleDirichletOuterRobin  // 2D scattering: hole Dirichlet, outer square Robin
};

struct DomainSpec {
  DomainShape shape = DomainShape::Interval;
  BoundaryRule boundary = BoundaryRule::AllDirichlet;
  // Hole triangle vertices in unit coordinates (SquareWithHole only).
  std::array<std::array<double, 2>, 3> hole{{{0.25, 0.25}, {0.75, 0.75}, {0.25, 0.75}}};

  static DomainSpec interval(BoundaryRule rule = BoundaryRule::AllDirichlet)
  {
    return DomainSpec{DomainShape::Interval, rule, {}};
  }
  static DomainSpec square(BoundaryRule rule = BoundaryRule::AllDirichlet)
  {
    return DomainSpec{DomainShape::Square, rule, {}};
  }
  static DomainSpec square_with_hole(BoundaryRule rule = BoundaryRule::HoleDirichletOuterRobin)
  {
    DomainSpec s;
    s.shape = DomainShape::SquareWithHole;
    s.boundary = rule;
    return s;
  }
};

struct Mesh {
  int dim = 1;
  int level = 0;                               // width = 2^-level
  std::vector<std::array<double, 2>> nodes;    // y = 0 in 1D
  std::vector<std::array<int, 2>> lattice;     // integer node coords at this level
  std::vector<std::array<int, 3>> elements;    // last index = -1 in 1D
  std::vector<BoundaryFacet> boundary;

  // Adjacency (always built): node->element CSR and facet-sharing neighbors.
  std::vector<int> node_elem_offsets;
  std::vector<int> node_elem_data;
  std::vector<std::array<int, 3>> elem_neighbors; // -1 = no neighbor across facet

  int verts_per_elem() const { return dim + 1; }
  int n_nodes() const { return static_cast<int>(nodes.size()); }
  int n_elements() const { return static_cast<int>(elements.size()); }
  double width() const { return std::ldexp(1.0, -level); }

  double measure(int e) const
  {
    const auto& el = elements[e];
    if (dim == 1) return nodes[el[1]][0] - nodes[el[0]][0];
    const auto& a = nodes[el[0]];
    const auto& b = nodes[el[1]];
    const auto& c = nodes[el[2]];
    return 0.5 * std::abs((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
  }

  std::array<double, 2> centroid(int e) const
  {
    const auto& el = elements[e];
    std::array<double, 2> c{0.0, 0.0};
    const int nv = verts_per_elem();
    for (int v = 0; v < nv; ++v) {
      c[0] += nodes[el[v]][0];
      c[1] += nodes[el[v]][1];
    }
    c[0] /= nv;
    c[1] /= nv;
    return c;
  }

  /// Constant P1 basis gradients on element e; grads[v] pairs with vertex v.
  std::array<std::array<double, 2>, 3> gradients(int e) const
  {
    std::array<std::array<double, 2>, 3> g{};
    const auto& el = elements[e];
    if (dim == 1) {
      const double len = nodes[el[1]][0] - nodes[el[0]][0];
      g[0] = {-1.0 / len, 0.0};
      g[1] = {1.0 / len, 0.0};
      return g;
    }
    const auto& a = nodes[el[0]];
    const auto& b = nodes[el[1]];
    const auto& c = nodes[el[2]];
    const double det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    g[0] = {(b[1] - c[1]) / det, (c[0] - b[0]) / det};
    g[1] = {(c[1] - a[1]) / det, (a[0] - c[0]) / det};
    g[2] = {(a[1] - b[1]) / det, (b[0] - a[0]) / det};
    return g;
  }

  std::vector<int> node_elements(int n) const
  {
    return {node_elem_data.begin() + node_elem_offsets[n],
            node_elem_data.begin() + node_elem_offsets[n + 1]};
  }

  /// Nodes lying on at least one facet with the given tag.
  std::vector<int> tagged_nodes(BoundaryTag tag) const
  {
    std::vector<char> mark(nodes.size(), 0);
    for (const auto& f : boundary)
      if (f.tag == tag)
        for (int k = 0; k < (dim == 1 ? 1 : 2); ++k) mark[f.nodes[k]] = 1;
    std::vector<int> out;
    for (int i = 0; i < n_nodes(); ++i)
      if (mark[i]) out.push_back(i);
    return out;
  }
};

namespace detail {

// Exact point-in-closed-triangle test on the integer lattice (coords scaled
// so that centroids become integral).
inline bool in_closed_triangle(std::int64_t px, std::int64_t py,
                               const std::array<std::array<std::int64_t, 2>, 3>& tri)
{
  auto cross = [](std::int64_t ax, std::int64_t ay, std::int64_t bx, std::int64_t by,
                  std::int64_t cx, std::int64_t cy) {
    return (bx - ax) * (cy - ay) - (cx - ax) * (by - ay);
  };
  const std::int64_t d0 = cross(tri[0][0], tri[0][1], tri[1][0], tri[1][1], px, py);
  const std::int64_t d1 = cross(tri[1][0], tri[1][1], tri[2][0], tri[2][1], px, py);
  const std::int64_t d2 = cross(tri[2][0], tri[2][1], tri[0][0], tri[0][1], px, py);
  const bool has_neg = (d0 < 0) || (d1 < 0) || (d2 < 0);
  const bool has_pos = (d0 > 0) || (d1 > 0) || (d2 > 0);
  return !(has_neg && has_pos);
}

struct HoleLattice {
  bool active = false;
  std::array<std::array<std::int64_t, 2>, 3> tri{}; // scaled by 3N
};

inline HoleLattice hole_on_lattice(const DomainSpec& spec, int level)
{
  HoleLattice h;
  if (spec.shape != DomainShape::SquareWithHole) return h;
  const std::int64_t n = std::int64_t{1} << level;
  for (int v = 0; v < 3; ++v) {
    for (int c = 0; c < 2; ++c) {
      const double scaled = spec.hole[v][c] * static_cast<double>(n);
      const double snapped = std::round(scaled);
      if (std::abs(scaled - snapped) > 1e-12)
        throw std::invalid_argument(
            "hole vertex (" + std::to_string(spec.hole[v][0]) + "," +
            std::to_string(spec.hole[v][1]) + ") not representable on the 2^-" +
            std::to_string(level) + " lattice");
      h.tri[v][c] = 3 * static_cast<std::int64_t>(snapped);
    }
  }
  // Edges must follow lattice lines or the Friedrichs-Keller diagonal.
  for (int v = 0; v < 3; ++v) {
    const auto& a = h.tri[v];
    const auto& b = h.tri[(v + 1) % 3];
    const std::int64_t dx = b[0] - a[0], dy = b[1] - a[1];
    if (!(dx == 0 || dy == 0 || dx == dy))
      throw std::invalid_argument("hole edge not conforming to the mesh diagonals");
  }
  h.active = true;
  return h;
}

// true if the FK triangle (cell ix,iy, half 0=lower/1=upper) lies inside the hole
inline bool triangle_in_hole(const HoleLattice& hole, std::int64_t ix, std::int64_t iy,
                             int half)
{
  if (!hole.active) return false;
  // centroid * 3 of the half-cell triangles
  const std::int64_t cx = 3 * ix + (half == 0 ? 2 : 1);
  const std::int64_t cy = 3 * iy + (half == 0 ? 1 : 2);
  return in_closed_triangle(cx, cy, hole.tri);
}

inline void build_adjacency(Mesh& mesh)
{
  const int nn = mesh.n_nodes();
  const int nv = mesh.verts_per_elem();
  mesh.node_elem_offsets.assign(nn + 1, 0);
  for (const auto& el : mesh.elements)
    for (int v = 0; v < nv; ++v) ++mesh.node_elem_offsets[el[v] + 1];
  for (int i = 0; i < nn; ++i) mesh.node_elem_offsets[i + 1] += mesh.node_elem_offsets[i];
  mesh.node_elem_data.assign(mesh.node_elem_offsets.back(), -1);
  std::vector<int> cursor(mesh.node_elem_offsets.begin(), mesh.node_elem_offsets.end() - 1);
  for (int e = 0; e < mesh.n_elements(); ++e)
    for (int v = 0; v < nv; ++v) mesh.node_elem_data[cursor[mesh.elements[e][v]]++] = e;

  // facet -> elements; facets are (node) in 1D, sorted (node,node) in 2D
  auto facet_key = [&](int e, int f) -> std::uint64_t {
    const auto& el = mesh.elements[e];
    if (mesh.dim == 1) return static_cast<std::uint64_t>(el[f]);
    int a = el[f], b = el[(f + 1) % 3];
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
  };
  const int nf = mesh.dim == 1 ? 2 : 3; // facets per element
  std::unordered_map<std::uint64_t, std::array<int, 2>> facets;
  facets.reserve(mesh.n_elements() * nf);
  for (int e = 0; e < mesh.n_elements(); ++e) {
    for (int f = 0; f < nf; ++f) {
      auto [it, inserted] = facets.try_emplace(facet_key(e, f), std::array<int, 2>{e, -1});
      if (!inserted) it->second[1] = e;
    }
  }
  mesh.elem_neighbors.assign(mesh.n_elements(), {-1, -1, -1});
  for (int e = 0; e < mesh.n_elements(); ++e) {
    for (int f = 0; f < nf; ++f) {
      const auto& pair = facets[facet_key(e, f)];
      mesh.elem_neighbors[e][f] = (pair[0] == e) ? pair[1] : pair[0];
    }
  }

  // boundary facets = facets owned by exactly one element
  mesh.boundary.clear();
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const auto& el = mesh.elements[e];
    for (int f = 0; f < nf; ++f) {
      if (mesh.elem_neighbors[e][f] != -1) continue;
      BoundaryFacet bf;
      bf.element = e;
      if (mesh.dim == 1) {
        bf.nodes = {el[f], -1};
      } else {
        bf.nodes = {el[f], el[(f + 1) % 3]};
      }
      mesh.boundary.push_back(bf);
    }
  }
}

inline void tag_boundary(Mesh& mesh, const DomainSpec& spec)
{
  const std::int64_t n = std::int64_t{1} << mesh.level;
  auto on_outer = [&](int node) {
    const auto& l = mesh.lattice[node];
    if (mesh.dim == 1) return l[0] == 0 || l[0] == n;
    return l[0] == 0 || l[0] == n || l[1] == 0 || l[1] == n;
  };
  for (auto& f : mesh.boundary) {
    switch (spec.boundary) {
      case BoundaryRule::AllDirichlet: f.tag = BoundaryTag::Dirichlet; break;
      case BoundaryRule::AllRobin: f.tag = BoundaryTag::Robin; break;
      case BoundaryRule::LeftDirichletRightRobin:
        f.tag = (mesh.lattice[f.nodes[0]][0] == 0) ? BoundaryTag::Dirichlet : BoundaryTag::Robin;
        break;
      case BoundaryRule::HoleDirichletOuterRobin: {
        const bool outer =
            on_outer(f.nodes[0]) && (mesh.dim == 1 || on_outer(f.nodes[1]));
        f.tag = outer ? BoundaryTag::Robin : BoundaryTag::Dirichlet;
        break;
      }
    }
  }
}

// Structured lattice info retained while building hierarchies.
struct LatticeIndex {
  // 1D: elem_of_cell[i]; 2D: elem_of_cell[2*(iy*n+ix)+half]; -1 = removed
  std::vector<int> elem_of_cell;
  std::vector<int> node_of_lattice; // (iy*(n+1)+ix) -> node id or -1
  std::int64_t n = 0;
};

inline Mesh build_mesh(const DomainSpec& spec, int level, LatticeIndex* index)
{
  if (level < 0) throw std::invalid_argument("mesh level must be >= 0");
  Mesh mesh;
  mesh.level = level;
  const std::int64_t n = std::int64_t{1} << level;

  if (spec.shape == DomainShape::Interval) {
    mesh.dim = 1;
    mesh.nodes.resize(n + 1);
    mesh.lattice.resize(n + 1);
    const double h = 1.0 / static_cast<double>(n);
    for (std::int64_t i = 0; i <= n; ++i) {
      mesh.nodes[i] = {static_cast<double>(i) * h, 0.0};
      mesh.lattice[i] = {static_cast<int>(i), 0};
    }
    mesh.elements.resize(n);
    for (std::int64_t i = 0; i < n; ++i)
      mesh.elements[i] = {static_cast<int>(i), static_cast<int>(i + 1), -1};
    if (index) {
      index->n = n;
      index->elem_of_cell.resize(n);
      for (std::int64_t i = 0; i < n; ++i) index->elem_of_cell[i] = static_cast<int>(i);
      index->node_of_lattice.resize(n + 1);
      for (std::int64_t i = 0; i <= n; ++i) index->node_of_lattice[i] = static_cast<int>(i);
    }
  } else {
    mesh.dim = 2;
    const HoleLattice hole = hole_on_lattice(spec, level);
    const double h = 1.0 / static_cast<double>(n);

    std::vector<int> node_id((n + 1) * (n + 1), -1);
    std::vector<int> cell_elem(2 * n * n, -1);
    auto lat = [&](std::int64_t ix, std::int64_t iy) { return iy * (n + 1) + ix; };

    // mark used nodes, then number nodes and elements in lattice order
    std::vector<char> used((n + 1) * (n + 1), 0);
    for (std::int64_t iy = 0; iy < n; ++iy) {
      for (std::int64_t ix = 0; ix < n; ++ix) {
        for (int half = 0; half < 2; ++half) {
          if (triangle_in_hole(hole, ix, iy, half)) continue;
          if (half == 0) {
            used[lat(ix, iy)] = used[lat(ix + 1, iy)] = used[lat(ix + 1, iy + 1)] = 1;
          } else {
            used[lat(ix, iy)] = used[lat(ix + 1, iy + 1)] = used[lat(ix, iy + 1)] = 1;
          }
        }
      }
    }
    for (std::int64_t iy = 0; iy <= n; ++iy) {
      for (std::int64_t ix = 0; ix <= n; ++ix) {
        if (!used[lat(ix, iy)]) continue;
        node_id[lat(ix, iy)] = mesh.n_nodes();
        mesh.nodes.push_back({static_cast<double>(ix) * h, static_cast<double>(iy) * h});
        mesh.lattice.push_back({static_cast<int>(ix), static_cast<int>(iy)});
      }
    }
    for (std::int64_t iy = 0; iy < n; ++iy) {
      for (std::int64_t ix = 0; ix < n; ++ix) {
        for (int half = 0; half < 2; ++half) {
          if (triangle_in_hole(hole, ix, iy, half)) continue;
          std::array<int, 3> el;
          if (half == 0) {
            el = {node_id[lat(ix, iy)], node_id[lat(ix + 1, iy)], node_id[lat(ix + 1, iy + 1)]};
          } else {
            el = {node_id[lat(ix, iy)], node_id[lat(ix + 1, iy + 1)], node_id[lat(ix, iy + 1)]};
          }
          cell_elem[2 * (iy * n + ix) + half] = mesh.n_elements();
          mesh.elements.push_back(el);
        }
      }
    }
    if (mesh.n_elements() == 0)
      throw std::invalid_argument("domain is empty at level " + std::to_string(level));
    if (index) {
      index->n = n;
      index->elem_of_cell = std::move(cell_elem);
      index->node_of_lattice = std::move(node_id);
    }
  }

  build_adjacency(mesh);
  tag_boundary(mesh, spec);
  return mesh;
}

} // namespace detail

/// Coarse/fine mesh pair with parent/child maps from uniform red refinement.
struct MeshHierarchy {
  DomainSpec domain;
  Mesh coarse;
  Mesh fine;
  int level_coarse = 0;
  int level_fine = 0;
  std::vector<std::vector<int>> children; // coarse element -> fine elements
  std::vector<int> parent;                // fine element -> coarse element
  std::vector<int> coarse_to_fine_node;   // coarse node -> fine node

  double H() const { return coarse.width(); }
  double h() const { return fine.width(); }
  int refinement_ratio() const { return 1 << (level_fine - level_coarse); }
};

/// Builds nested meshes at widths 2^-coarse_level and 2^-fine_level.
/// Holes are removed consistently on both levels; boundary tags follow the
/// domain spec. Equal levels yield the degenerate identity hierarchy.
inline MeshHierarchy build_hierarchy(const DomainSpec& spec, int coarse_level, int fine_level)
{
  if (fine_level < coarse_level)
    throw std::invalid_argument("fine level must be >= coarse level");
  MeshHierarchy hier;
  hier.domain = spec;
  hier.level_coarse = coarse_level;
  hier.level_fine = fine_level;

  detail::LatticeIndex ci, fi;
  hier.coarse = detail::build_mesh(spec, coarse_level, &ci);
  hier.fine = detail::build_mesh(spec, fine_level, &fi);

  const std::int64_t r = std::int64_t{1} << (fine_level - coarse_level);
  const std::int64_t nc = ci.n;

  hier.children.assign(hier.coarse.n_elements(), {});
  hier.parent.assign(hier.fine.n_elements(), -1);

  if (spec.shape == DomainShape::Interval) {
    for (std::int64_t c = 0; c < nc; ++c) {
      const int ce = ci.elem_of_cell[c];
      for (std::int64_t k = 0; k < r; ++k) {
        const int fe = fi.elem_of_cell[c * r + k];
        hier.children[ce].push_back(fe);
        hier.parent[fe] = ce;
      }
    }
    hier.coarse_to_fine_node.resize(hier.coarse.n_nodes());
    for (std::int64_t i = 0; i <= nc; ++i)
      hier.coarse_to_fine_node[i] = fi.node_of_lattice[i * r];
  } else {
    const std::int64_t nf = fi.n;
    for (std::int64_t cy = 0; cy < nc; ++cy) {
      for (std::int64_t cx = 0; cx < nc; ++cx) {
        const int lower = ci.elem_of_cell[2 * (cy * nc + cx)];
        const int upper = ci.elem_of_cell[2 * (cy * nc + cx) + 1];
        if (lower == -1 && upper == -1) continue;
        for (std::int64_t fy = cy * r; fy < (cy + 1) * r; ++fy) {
          for (std::int64_t fx = cx * r; fx < (cx + 1) * r; ++fx) {
            for (int half = 0; half < 2; ++half) {
              const int fe = fi.elem_of_cell[2 * (fy * nf + fx) + half];
              if (fe == -1) continue;
              // side of the coarse-cell diagonal, exact on the 3x lattice
              const std::int64_t px = 3 * fx + (half == 0 ? 2 : 1);
              const std::int64_t py = 3 * fy + (half == 0 ? 1 : 2);
              const std::int64_t side = (py - 3 * cy * r) - (px - 3 * cx * r);
              const int ce = side < 0 ? lower : upper;
              if (ce == -1)
                throw std::logic_error("refinement produced an orphan fine element");
              hier.children[ce].push_back(fe);
              hier.parent[fe] = ce;
            }
          }
        }
      }
    }
    hier.coarse_to_fine_node.assign(hier.coarse.n_nodes(), -1);
    for (int cn = 0; cn < hier.coarse.n_nodes(); ++cn) {
      const auto& l = hier.coarse.lattice[cn];
      hier.coarse_to_fine_node[cn] =
          fi.node_of_lattice[static_cast<std::int64_t>(l[1]) * r * (nf + 1) +
                             static_cast<std::int64_t>(l[0]) * r];
    }
  }
  for (int cn = 0; cn < hier.coarse.n_nodes(); ++cn)
    if (hier.coarse_to_fine_node[cn] < 0)
      throw std::logic_error("coarse node missing from fine mesh");
  return hier;
}

enum class PatchNodeClass : std::uint8_t { Interior, Artificial, TrueDirichlet, TrueRobin };

/// l-th order element patch: the coarse elements reachable from T by l rounds
/// of vertex adjacency, with its fine-scale index sets and boundary
/// classification (ARTIFICIAL = interior cut, TRUE = on the physical boundary).
struct Patch {
  int owner = -1;
  int ell = 1;
  bool saturated = false;
  std::vector<int> coarse_elements;           // sorted
  std::vector<int> fine_elements;             // sorted
  std::vector<int> fine_nodes;                // sorted
  std::vector<PatchNodeClass> node_class;     // parallel to fine_nodes
  std::vector<int> free_fine_nodes;           // Interior or TrueRobin, sorted
};

inline Patch element_patch(const MeshHierarchy& hier, int T, int ell)
{
  if (ell < 1) throw std::invalid_argument("patch order ell must be >= 1");
  if (T < 0 || T >= hier.coarse.n_elements())
    throw std::invalid_argument("patch owner element out of range");

  const Mesh& cm = hier.coarse;
  Patch patch;
  patch.owner = T;
  patch.ell = ell;

  std::vector<char> in_patch(cm.n_elements(), 0);
  std::vector<int> current{T};
  in_patch[T] = 1;
  for (int round = 0; round < ell && !current.empty(); ++round) {
    std::vector<int> next;
    for (int e : current) {
      const auto& el = cm.elements[e];
      for (int v = 0; v < cm.verts_per_elem(); ++v) {
        for (int k = cm.node_elem_offsets[el[v]]; k < cm.node_elem_offsets[el[v] + 1]; ++k) {
          const int ne = cm.node_elem_data[k];
          if (!in_patch[ne]) {
            in_patch[ne] = 1;
            next.push_back(ne);
          }
        }
      }
    }
    current = std::move(next);
  }
  for (int e = 0; e < cm.n_elements(); ++e)
    if (in_patch[e]) patch.coarse_elements.push_back(e);
  patch.saturated = static_cast<int>(patch.coarse_elements.size()) == cm.n_elements();

  for (int ce : patch.coarse_elements)
    patch.fine_elements.insert(patch.fine_elements.end(), hier.children[ce].begin(),
                               hier.children[ce].end());
  std::sort(patch.fine_elements.begin(), patch.fine_elements.end());

  const Mesh& fm = hier.fine;
  std::vector<char> node_seen(fm.n_nodes(), 0);
  for (int fe : patch.fine_elements) {
    const auto& el = fm.elements[fe];
    for (int v = 0; v < fm.verts_per_elem(); ++v) node_seen[el[v]] = 1;
  }
  for (int nid = 0; nid < fm.n_nodes(); ++nid)
    if (node_seen[nid]) patch.fine_nodes.push_back(nid);

  // Patch boundary facets: facets of patch elements seen exactly once.
  // Each is either a global boundary facet (TRUE, keeps its tag) or an
  // interior cut (ARTIFICIAL).
  std::unordered_map<std::uint64_t, int> facet_count;
  std::unordered_map<std::uint64_t, BoundaryTag> global_tag;
  auto key2 = [](int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
  };
  for (const auto& bf : fm.boundary)
    global_tag[fm.dim == 1 ? static_cast<std::uint64_t>(bf.nodes[0])
                           : key2(bf.nodes[0], bf.nodes[1])] = bf.tag;
  const int nf = fm.dim == 1 ? 2 : 3;
  for (int fe : patch.fine_elements) {
    const auto& el = fm.elements[fe];
    for (int f = 0; f < nf; ++f) {
      const std::uint64_t k = fm.dim == 1 ? static_cast<std::uint64_t>(el[f])
                                          : key2(el[f], el[(f + 1) % 3]);
      ++facet_count[k];
    }
  }

  // Rank: Artificial > TrueDirichlet > TrueRobin > Interior.
  std::unordered_map<int, PatchNodeClass> cls;
  auto raise = [&](int node, PatchNodeClass c) {
    auto [it, inserted] = cls.try_emplace(node, c);
    if (inserted) return;
    auto rank = [](PatchNodeClass x) {
      switch (x) {
        case PatchNodeClass::Artificial: return 3;
        case PatchNodeClass::TrueDirichlet: return 2;
        case PatchNodeClass::TrueRobin: return 1;
        default: return 0;
      }
    };
    if (rank(c) > rank(it->second)) it->second = c;
  };
  for (int fe : patch.fine_elements) {
    const auto& el = fm.elements[fe];
    for (int f = 0; f < nf; ++f) {
      const int a = el[f];
      const int b = fm.dim == 1 ? -1 : el[(f + 1) % 3];
      const std::uint64_t k =
          fm.dim == 1 ? static_cast<std::uint64_t>(a) : key2(a, b);
      if (facet_count[k] != 1) continue;
      auto it = global_tag.find(k);
      PatchNodeClass c = PatchNodeClass::Artificial;
      if (it != global_tag.end())
        c = it->second == BoundaryTag::Dirichlet ? PatchNodeClass::TrueDirichlet
                                                 : PatchNodeClass::TrueRobin;
      raise(a, c);
      if (b != -1) raise(b, c);
    }
  }

  patch.node_class.resize(patch.fine_nodes.size(), PatchNodeClass::Interior);
  for (std::size_t i = 0; i < patch.fine_nodes.size(); ++i) {
    auto it = cls.find(patch.fine_nodes[i]);
    if (it != cls.end()) patch.node_class[i] = it->second;
    if (patch.node_class[i] == PatchNodeClass::Interior ||
        patch.node_class[i] == PatchNodeClass::TrueRobin)
      patch.free_fine_nodes.push_back(patch.fine_nodes[i]);
  }
  return patch;
}

/// Plain-text mesh dump: `d nnodes nelems`, node coordinates, element node
/// indices, boundary facets with tags.
inline void dump_mesh(const Mesh& mesh, std::ostream& os)
{
  os << mesh.dim << ' ' << mesh.n_nodes() << ' ' << mesh.n_elements() << '\n';
  for (const auto& p : mesh.nodes) {
    os << p[0];
    if (mesh.dim == 2) os << ' ' << p[1];
    os << '\n';
  }
  for (const auto& el : mesh.elements) {
    os << el[0] << ' ' << el[1];
    if (mesh.dim == 2) os << ' ' << el[2];
    os << '\n';
  }
  for (const auto& f : mesh.boundary) {
    os << f.nodes[0];
    if (mesh.dim == 2) os << ' ' << f.nodes[1];
    os << ' ' << to_string(f.tag) << '\n';
  }
}

} // namespace mspg
