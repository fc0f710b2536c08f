#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "amrlab/geometry.hpp"

namespace amr {

using Index = std::uint32_t;

struct BoundaryEdge {
  Index a, b;
  BoundaryTag tag;
};

/// A triangle, stored counter-clockwise. Local edge i connects vertices
/// (i, (i+1)%3); `refinement_edge` is the local index of the edge holding the
/// next bisection midpoint (the edge opposite the newest vertex).
struct Element {
  std::array<Index, 3> v;
  std::uint8_t refinement_edge = 2;
};

struct MarkVector {
  std::vector<bool> marks;
};

/// Parent -> children element indices across one refinement. Unrefined
/// elements map to a singleton holding their own new index.
struct RefinementMap {
  std::vector<std::vector<Index>> children;
};

class composition_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class location_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Conforming triangular mesh. Immutable after construction: refinement
/// produces a new mesh that keeps a shared handle to its parent, so point
/// location can descend the refinement tree instead of scanning.
class TriMesh {
 public:
  TriMesh() = default;
  TriMesh(std::vector<Vec2> vertices, std::vector<Element> elements,
          std::vector<BoundaryEdge> boundary_edges, int generation = 0);

  const std::vector<Vec2>& vertices() const { return vertices_; }
  const std::vector<Element>& elements() const { return elements_; }
  const std::vector<BoundaryEdge>& boundary_edges() const { return boundary_edges_; }
  int generation() const { return generation_; }

  Index n_vertices() const { return static_cast<Index>(vertices_.size()); }
  Index n_elements() const { return static_cast<Index>(elements_.size()); }

  Vec2 vertex(Index i) const { return vertices_[i]; }
  std::array<Vec2, 3> corners(Index e) const {
    const auto& el = elements_[e];
    return {vertices_[el.v[0]], vertices_[el.v[1]], vertices_[el.v[2]]};
  }

  double element_area(Index e) const;
  Vec2 element_midpoint(Index e) const;
  double element_diameter(Index e) const;

  /// Ancestor chain set by refine/uniform_refine; null for a root mesh.
  const std::shared_ptr<const TriMesh>& parent() const { return parent_; }
  const std::shared_ptr<const RefinementMap>& parent_map() const { return parent_map_; }

  double total_area() const;

 private:
  friend std::pair<TriMesh, RefinementMap> refine(const TriMesh&, const MarkVector&);

  std::vector<Vec2> vertices_;
  std::vector<Element> elements_;
  std::vector<BoundaryEdge> boundary_edges_;
  int generation_ = 0;
  std::shared_ptr<const TriMesh> parent_;
  std::shared_ptr<const RefinementMap> parent_map_;
};

/// Covers `domain` exactly with right triangles from a tensor grid whose cut
/// lines pass through the hole/cutoff corners. All element diameters are
/// bounded by max_element_diameter. Refinement edges start on the cell
/// diagonals (the strictly longest edge), so the mesh bisects into a single
/// similarity class.
TriMesh build_initial_mesh(const DomainGeometry& domain, double max_element_diameter);

/// Newest-vertex bisection. Marked elements are quartered (two nested
/// bisections); unmarked elements are bisected once or quartered as needed to
/// keep the mesh conforming. Children counts are therefore always 1, 2 or 4.
std::pair<TriMesh, RefinementMap> refine(const TriMesh& mesh, const MarkVector& marks);

/// k rounds of refine with every element marked; multiplies element count by 4^k.
TriMesh uniform_refine(const TriMesh& mesh, int k);

/// Chains parent->children maps across consecutive refinements.
RefinementMap compose_refinement_maps(const std::vector<RefinementMap>& maps);

RefinementMap identity_refinement_map(Index n_elements);

struct ElementGeometry {
  std::vector<double> areas;
  std::vector<Vec2> midpoints;
};

ElementGeometry element_geometry(const TriMesh& mesh);

/// Ordered pairs (i, j), both directions, for every pair of elements sharing
/// a full edge. Sorted lexicographically.
std::vector<std::pair<Index, Index>> element_adjacency(const TriMesh& mesh);

struct PointLocation {
  Index element;
  Barycentric bary;
};

/// Containing element and barycentric coordinates of p. Points on shared
/// edges resolve to the lowest element index. Walks the ancestry chain when
/// available, otherwise scans. Throws location_error if p lies outside every
/// element by more than `tol`.
PointLocation locate_point(const TriMesh& mesh, Vec2 p, double tol = 1e-10);

/// locate_point with the root-mesh scan skipped: descends from the given
/// element of the mesh's root ancestor.
PointLocation locate_point_seeded(const TriMesh& mesh, Vec2 p, Index root_element,
                                  double tol = 1e-10);

/// For each element, the index of its ancestor in the root mesh of the
/// ancestry chain (identity for a root mesh). Pure index bookkeeping.
std::vector<Index> root_ancestors(const TriMesh& mesh);

/// Interior-edge conformity check: true iff every non-boundary edge is shared
/// by exactly two elements and every boundary edge by exactly one.
bool is_conforming(const TriMesh& mesh);

double min_angle(const TriMesh& mesh);

}  // namespace amr
