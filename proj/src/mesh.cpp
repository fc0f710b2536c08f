#include "amrlab/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace amr {

namespace {

using EdgeKey = std::uint64_t;

EdgeKey edge_key(Index a, Index b) {
  if (a > b) std::swap(a, b);
  return (static_cast<EdgeKey>(a) << 32) | b;
}

EdgeKey local_edge_key(const Element& el, int i) {
  return edge_key(el.v[i], el.v[(i + 1) % 3]);
}

}  // namespace

TriMesh::TriMesh(std::vector<Vec2> vertices, std::vector<Element> elements,
                 std::vector<BoundaryEdge> boundary_edges, int generation)
    : vertices_(std::move(vertices)),
      elements_(std::move(elements)),
      boundary_edges_(std::move(boundary_edges)),
      generation_(generation) {
  for (const Element& el : elements_) {
    if (el.v[0] == el.v[1] || el.v[1] == el.v[2] || el.v[0] == el.v[2])
      throw std::invalid_argument("mesh: element with repeated vertices");
    if (signed_area2(vertices_[el.v[0]], vertices_[el.v[1]], vertices_[el.v[2]]) <= 0.0)
      throw std::invalid_argument("mesh: element not counter-clockwise / zero area");
  }
}

double TriMesh::element_area(Index e) const {
  const auto c = corners(e);
  return 0.5 * signed_area2(c[0], c[1], c[2]);
}

Vec2 TriMesh::element_midpoint(Index e) const {
  const auto c = corners(e);
  return {(c[0].x + c[1].x + c[2].x) / 3.0, (c[0].y + c[1].y + c[2].y) / 3.0};
}

double TriMesh::element_diameter(Index e) const {
  const auto c = corners(e);
  return std::max({distance(c[0], c[1]), distance(c[1], c[2]), distance(c[2], c[0])});
}

double TriMesh::total_area() const {
  double sum = 0.0;
  for (Index e = 0; e < n_elements(); ++e) sum += element_area(e);
  return sum;
}

TriMesh build_initial_mesh(const DomainGeometry& domain, double max_element_diameter) {
  domain.validate();
  if (!(max_element_diameter > 0.0))
    throw std::invalid_argument("build_initial_mesh: non-positive diameter bound");

  const double step = max_element_diameter / std::sqrt(2.0);

  auto make_cuts = [&](std::vector<double> anchors) {
    anchors.push_back(0.0);
    anchors.push_back(1.0);
    std::sort(anchors.begin(), anchors.end());
    anchors.erase(std::unique(anchors.begin(), anchors.end()), anchors.end());
    std::vector<double> cuts;
    for (std::size_t k = 0; k + 1 < anchors.size(); ++k) {
      const double a = anchors[k], b = anchors[k + 1];
      const int parts = std::max(1, static_cast<int>(std::ceil((b - a) / step - 1e-12)));
      for (int i = 0; i < parts; ++i) cuts.push_back(a + (b - a) * i / parts);
    }
    cuts.push_back(1.0);
    return cuts;
  };

  std::vector<double> ax, ay;
  if (domain.kind == DomainKind::square_with_hole) {
    ax = {domain.hole_lo.x, domain.hole_hi.x};
    ay = {domain.hole_lo.y, domain.hole_hi.y};
  } else if (domain.kind == DomainKind::l_shaped) {
    ax = {domain.cutoff.x};
    ay = {domain.cutoff.y};
  }
  const std::vector<double> xs = make_cuts(ax);
  const std::vector<double> ys = make_cuts(ay);
  const int nx = static_cast<int>(xs.size());
  const int ny = static_cast<int>(ys.size());

  auto cell_kept = [&](int i, int j) {
    const Vec2 center{0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])};
    return domain.contains(center, 1e-12);
  };

  // Grid vertices, numbered row-major over the points actually used.
  std::vector<Index> grid_id(static_cast<std::size_t>(nx) * ny, Index(-1));
  std::vector<bool> used(grid_id.size(), false);
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i)
      if (cell_kept(i, j))
        for (int dj = 0; dj <= 1; ++dj)
          for (int di = 0; di <= 1; ++di) used[(j + dj) * nx + (i + di)] = true;

  std::vector<Vec2> vertices;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      if (used[j * nx + i]) {
        grid_id[j * nx + i] = static_cast<Index>(vertices.size());
        vertices.push_back({xs[i], ys[j]});
      }

  std::vector<Element> elements;
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      if (!cell_kept(i, j)) continue;
      const Index ll = grid_id[j * nx + i];
      const Index lr = grid_id[j * nx + i + 1];
      const Index ur = grid_id[(j + 1) * nx + i + 1];
      const Index ul = grid_id[(j + 1) * nx + i];
      // Diagonal ll-ur is the strictly longest edge of both triangles.
      elements.push_back({{ll, lr, ur}, 2});
      elements.push_back({{ll, ur, ul}, 0});
    }
  if (elements.empty()) throw invalid_domain_error("build_initial_mesh: empty mesh");

  // Edges owned by exactly one element are boundary.
  std::unordered_map<EdgeKey, int> edge_count;
  for (const Element& el : elements)
    for (int i = 0; i < 3; ++i) ++edge_count[local_edge_key(el, i)];

  auto on_hole_boundary = [&](Vec2 p) {
    if (domain.kind != DomainKind::square_with_hole) return false;
    const Vec2 lo = domain.hole_lo, hi = domain.hole_hi;
    const double eps = 1e-12;
    const bool on_x = (std::abs(p.x - lo.x) < eps || std::abs(p.x - hi.x) < eps) &&
                      p.y > lo.y - eps && p.y < hi.y + eps;
    const bool on_y = (std::abs(p.y - lo.y) < eps || std::abs(p.y - hi.y) < eps) &&
                      p.x > lo.x - eps && p.x < hi.x + eps;
    return on_x || on_y;
  };

  std::vector<BoundaryEdge> boundary;
  std::unordered_set<EdgeKey> seen;
  for (const Element& el : elements)
    for (int i = 0; i < 3; ++i) {
      const EdgeKey key = local_edge_key(el, i);
      if (edge_count[key] != 1 || !seen.insert(key).second) continue;
      const Index a = el.v[i], b = el.v[(i + 1) % 3];
      const Vec2 mid = (vertices[a] + vertices[b]) * 0.5;
      boundary.push_back({a, b, on_hole_boundary(mid) ? BoundaryTag::inner : BoundaryTag::outer});
    }

  return TriMesh(std::move(vertices), std::move(elements), std::move(boundary), 0);
}

namespace {

struct Bisection {
  Element c1, c2;
};

// Split across the refinement edge (p -> q, peak w): the two halves keep the
// midpoint as their newest vertex and inherit the parent's remaining original
// edges as refinement edges (always landing at local index 2).
Bisection bisect(const Element& el, Index midpoint) {
  const int r = el.refinement_edge;
  const Index p = el.v[r], q = el.v[(r + 1) % 3], w = el.v[(r + 2) % 3];
  return {Element{{w, midpoint, q}, 2}, Element{{p, midpoint, w}, 2}};
}

}  // namespace

std::pair<TriMesh, RefinementMap> refine(const TriMesh& mesh, const MarkVector& marks) {
  const Index n = mesh.n_elements();
  if (marks.marks.size() != n)
    throw std::invalid_argument("refine: mark vector length mismatch");

  struct EdgePair {
    std::array<Index, 2> e{Index(-1), Index(-1)};
  };
  std::unordered_map<EdgeKey, EdgePair> edge_elems;
  edge_elems.reserve(n * 2);
  for (Index e = 0; e < n; ++e)
    for (int i = 0; i < 3; ++i) {
      auto& slot = edge_elems[local_edge_key(mesh.elements()[e], i)];
      if (slot.e[0] == Index(-1))
        slot.e[0] = e;
      else
        slot.e[1] = e;
    }

  // Closure fixpoint. Marked elements quarter (splitting all three edges); an
  // element hit on its refinement edge bisects once, an element hit anywhere
  // else must quarter too. States only increase, so this terminates.
  enum : char { kNone = 0, kBisect = 1, kQuarter = 2 };
  std::vector<char> state(n, kNone);
  std::unordered_set<EdgeKey> required;
  std::vector<EdgeKey> work;

  auto require_edge = [&](EdgeKey key) {
    if (required.insert(key).second) work.push_back(key);
  };
  auto quarter = [&](Index e) {
    if (state[e] == kQuarter) return;
    state[e] = kQuarter;
    for (int i = 0; i < 3; ++i) require_edge(local_edge_key(mesh.elements()[e], i));
  };

  for (Index e = 0; e < n; ++e)
    if (marks.marks[e]) quarter(e);

  while (!work.empty()) {
    const EdgeKey key = work.back();
    work.pop_back();
    for (Index e : edge_elems.at(key).e) {
      if (e == Index(-1) || state[e] == kQuarter) continue;
      const Element& el = mesh.elements()[e];
      if (local_edge_key(el, el.refinement_edge) == key)
        state[e] = kBisect;
      else
        quarter(e);
    }
  }

  // New vertices: one midpoint per required edge, numbered in element order.
  std::vector<Vec2> vertices = mesh.vertices();
  std::unordered_map<EdgeKey, Index> midpoint;
  midpoint.reserve(required.size());
  for (Index e = 0; e < n; ++e) {
    if (state[e] == kNone) continue;
    const Element& el = mesh.elements()[e];
    for (int i = 0; i < 3; ++i) {
      const EdgeKey key = local_edge_key(el, i);
      if (!required.contains(key) || midpoint.contains(key)) continue;
      midpoint.emplace(key, static_cast<Index>(vertices.size()));
      vertices.push_back((vertices[el.v[i]] + vertices[el.v[(i + 1) % 3]]) * 0.5);
    }
  }

  auto midpoint_of = [&](const Element& el) {
    return midpoint.at(local_edge_key(el, el.refinement_edge));
  };

  std::vector<Element> elements;
  elements.reserve(n + 3 * midpoint.size());
  RefinementMap map;
  map.children.resize(n);
  for (Index e = 0; e < n; ++e) {
    const Element& el = mesh.elements()[e];
    auto emit = [&](const Element& child) {
      map.children[e].push_back(static_cast<Index>(elements.size()));
      elements.push_back(child);
    };
    if (state[e] == kNone) {
      emit(el);
    } else if (state[e] == kBisect) {
      const Bisection b = bisect(el, midpoint_of(el));
      emit(b.c1);
      emit(b.c2);
    } else {
      const Bisection b = bisect(el, midpoint_of(el));
      const Bisection b1 = bisect(b.c1, midpoint_of(b.c1));
      const Bisection b2 = bisect(b.c2, midpoint_of(b.c2));
      emit(b1.c1);
      emit(b1.c2);
      emit(b2.c1);
      emit(b2.c2);
    }
  }

  std::vector<BoundaryEdge> boundary;
  boundary.reserve(mesh.boundary_edges().size());
  for (const BoundaryEdge& be : mesh.boundary_edges()) {
    const auto it = midpoint.find(edge_key(be.a, be.b));
    if (it == midpoint.end()) {
      boundary.push_back(be);
    } else {
      boundary.push_back({be.a, it->second, be.tag});
      boundary.push_back({it->second, be.b, be.tag});
    }
  }

  TriMesh out(std::move(vertices), std::move(elements), std::move(boundary),
              mesh.generation() + 1);
  out.parent_ = std::make_shared<const TriMesh>(mesh);
  out.parent_map_ = std::make_shared<const RefinementMap>(map);
  return {std::move(out), std::move(map)};
}

TriMesh uniform_refine(const TriMesh& mesh, int k) {
  if (k < 0) throw std::invalid_argument("uniform_refine: negative k");
  TriMesh out = mesh;
  for (int i = 0; i < k; ++i) {
    MarkVector all;
    all.marks.assign(out.n_elements(), true);
    out = refine(out, all).first;
  }
  return out;
}

RefinementMap identity_refinement_map(Index n_elements) {
  RefinementMap map;
  map.children.resize(n_elements);
  for (Index i = 0; i < n_elements; ++i) map.children[i] = {i};
  return map;
}

RefinementMap compose_refinement_maps(const std::vector<RefinementMap>& maps) {
  if (maps.empty()) throw composition_error("compose_refinement_maps: empty sequence");
  RefinementMap acc = maps.front();
  for (std::size_t k = 1; k < maps.size(); ++k) {
    const RefinementMap& next = maps[k];
    RefinementMap out;
    out.children.resize(acc.children.size());
    for (std::size_t i = 0; i < acc.children.size(); ++i) {
      for (Index mid : acc.children[i]) {
        if (mid >= next.children.size())
          throw composition_error("compose_refinement_maps: index mismatch between steps");
        const auto& grand = next.children[mid];
        out.children[i].insert(out.children[i].end(), grand.begin(), grand.end());
      }
      std::sort(out.children[i].begin(), out.children[i].end());
    }
    acc = std::move(out);
  }
  return acc;
}

ElementGeometry element_geometry(const TriMesh& mesh) {
  ElementGeometry g;
  g.areas.resize(mesh.n_elements());
  g.midpoints.resize(mesh.n_elements());
  for (Index e = 0; e < mesh.n_elements(); ++e) {
    g.areas[e] = mesh.element_area(e);
    g.midpoints[e] = mesh.element_midpoint(e);
  }
  return g;
}

std::vector<std::pair<Index, Index>> element_adjacency(const TriMesh& mesh) {
  std::unordered_map<EdgeKey, Index> first_owner;
  std::vector<std::pair<Index, Index>> pairs;
  for (Index e = 0; e < mesh.n_elements(); ++e)
    for (int i = 0; i < 3; ++i) {
      const EdgeKey key = local_edge_key(mesh.elements()[e], i);
      auto [it, inserted] = first_owner.emplace(key, e);
      if (!inserted) {
        pairs.emplace_back(it->second, e);
        pairs.emplace_back(e, it->second);
      }
    }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

namespace {

bool bary_inside(const Barycentric& b, double tol) { return b.min() >= -tol; }

PointLocation scan_locate(const TriMesh& mesh, Vec2 p, double tol) {
  for (Index e = 0; e < mesh.n_elements(); ++e) {
    const auto c = mesh.corners(e);
    const Barycentric b = barycentric_coords(p, c[0], c[1], c[2]);
    if (bary_inside(b, tol)) return {e, b};
  }
  throw location_error("locate_point: point outside mesh");
}

}  // namespace

namespace {

std::vector<const TriMesh*> ancestry_chain(const TriMesh& mesh) {
  std::vector<const TriMesh*> chain{&mesh};
  while (chain.back()->parent()) chain.push_back(chain.back()->parent().get());
  std::reverse(chain.begin(), chain.end());
  return chain;
}

PointLocation descend(const TriMesh& mesh, const std::vector<const TriMesh*>& chain, Vec2 p,
                      Index root_element, double tol) {
  Index e = root_element;
  for (std::size_t level = 1; level < chain.size(); ++level) {
    const TriMesh& fine = *chain[level];
    const auto& children = fine.parent_map()->children[e];
    Index best = children.front();
    double best_min = -std::numeric_limits<double>::infinity();
    for (Index c : children) {
      const auto corner = fine.corners(c);
      const Barycentric b = barycentric_coords(p, corner[0], corner[1], corner[2]);
      if (bary_inside(b, tol)) {
        best = c;
        best_min = 1.0;
        break;
      }
      // Nesting guarantees some child contains p; on a shared edge roundoff
      // may leave all tests slightly negative, so keep the least-outside one.
      if (b.min() > best_min) {
        best_min = b.min();
        best = c;
      }
    }
    e = best;
  }
  const auto c = mesh.corners(e);
  return {e, barycentric_coords(p, c[0], c[1], c[2])};
}

}  // namespace

PointLocation locate_point(const TriMesh& mesh, Vec2 p, double tol) {
  if (!mesh.parent()) return scan_locate(mesh, p, tol);
  const auto chain = ancestry_chain(mesh);
  const Index root = scan_locate(*chain.front(), p, tol).element;
  return descend(mesh, chain, p, root, tol);
}

PointLocation locate_point_seeded(const TriMesh& mesh, Vec2 p, Index root_element, double tol) {
  if (!mesh.parent()) {
    const auto c = mesh.corners(root_element);
    return {root_element, barycentric_coords(p, c[0], c[1], c[2])};
  }
  return descend(mesh, ancestry_chain(mesh), p, root_element, tol);
}

std::vector<Index> root_ancestors(const TriMesh& mesh) {
  std::vector<Index> ids(mesh.n_elements());
  for (Index i = 0; i < mesh.n_elements(); ++i) ids[i] = i;
  const TriMesh* cur = &mesh;
  while (cur->parent()) {
    const RefinementMap& map = *cur->parent_map();
    std::vector<Index> parent_of(cur->n_elements());
    for (Index p = 0; p < map.children.size(); ++p)
      for (Index c : map.children[p]) parent_of[c] = p;
    for (Index& id : ids) id = parent_of[id];
    cur = cur->parent().get();
  }
  return ids;
}

bool is_conforming(const TriMesh& mesh) {
  std::unordered_map<EdgeKey, int> count;
  for (const Element& el : mesh.elements())
    for (int i = 0; i < 3; ++i) ++count[local_edge_key(el, i)];

  std::unordered_set<EdgeKey> boundary;
  for (const BoundaryEdge& be : mesh.boundary_edges())
    if (!boundary.insert(edge_key(be.a, be.b)).second) return false;  // duplicate

  for (const auto& [key, c] : count) {
    const bool is_boundary = boundary.contains(key);
    if (is_boundary && c != 1) return false;
    if (!is_boundary && c != 2) return false;
  }
  // Every listed boundary edge must exist in the element set.
  for (const BoundaryEdge& be : mesh.boundary_edges())
    if (!count.contains(edge_key(be.a, be.b))) return false;
  return true;
}

double min_angle(const TriMesh& mesh) {
  double best = std::numeric_limits<double>::infinity();
  for (Index e = 0; e < mesh.n_elements(); ++e) {
    const auto c = mesh.corners(e);
    for (int i = 0; i < 3; ++i) {
      const Vec2 u = c[(i + 1) % 3] - c[i];
      const Vec2 v = c[(i + 2) % 3] - c[i];
      best = std::min(best, std::atan2(std::abs(u.cross(v)), u.dot(v)));
    }
  }
  return best;
}

}  // namespace amr
