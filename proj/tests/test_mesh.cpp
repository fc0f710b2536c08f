#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "amrlab/mesh.hpp"
#include "amrlab/mesh_io.hpp"
#include "amrlab/rng.hpp"
#include "doctest.h"

using namespace amr;

namespace {

DomainGeometry unit_square() {
  DomainGeometry d;
  d.kind = DomainKind::unit_square;
  return d;
}

DomainGeometry square_with_hole(Vec2 lo, Vec2 hi) {
  DomainGeometry d;
  d.kind = DomainKind::square_with_hole;
  d.hole_lo = lo;
  d.hole_hi = hi;
  return d;
}

DomainGeometry l_shaped(Vec2 cutoff) {
  DomainGeometry d;
  d.kind = DomainKind::l_shaped;
  d.cutoff = cutoff;
  return d;
}

MarkVector marks_of(const TriMesh& m, bool value) {
  MarkVector mv;
  mv.marks.assign(m.n_elements(), value);
  return mv;
}

MarkVector random_marks(const TriMesh& m, Rng& rng, double p) {
  MarkVector mv;
  mv.marks.resize(m.n_elements());
  for (std::size_t i = 0; i < mv.marks.size(); ++i) mv.marks[i] = rng.bernoulli(p);
  return mv;
}

// Child vertices must lie inside the parent triangle (strict nesting).
bool nested_in_parent(const TriMesh& fine, const TriMesh& coarse, const RefinementMap& map,
                      double tol) {
  for (Index p = 0; p < coarse.n_elements(); ++p) {
    const auto pc = coarse.corners(p);
    for (Index c : map.children[p])
      for (const Vec2 v : fine.corners(c)) {
        const Barycentric b = barycentric_coords(v, pc[0], pc[1], pc[2]);
        if (b.min() < -tol) return false;
      }
  }
  return true;
}

}  // namespace

TEST_CASE("build_initial_mesh: unit square with loose bound is two triangles") {
  const TriMesh m = build_initial_mesh(unit_square(), 1.5);
  CHECK(m.n_elements() == 2);
  CHECK(m.n_vertices() == 4);
  CHECK(m.total_area() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(is_conforming(m));
}

TEST_CASE("build_initial_mesh: hole is excluded exactly and tagged inner") {
  const TriMesh m = build_initial_mesh(square_with_hole({0.4, 0.4}, {0.5, 0.5}), 0.4);
  CHECK(std::abs(m.total_area() - (1.0 - 0.01)) < 1e-12);
  int inner = 0;
  for (const BoundaryEdge& be : m.boundary_edges())
    if (be.tag == BoundaryTag::inner) ++inner;
  CHECK(inner >= 4);
  CHECK(is_conforming(m));
  for (Index e = 0; e < m.n_elements(); ++e) CHECK(m.element_diameter(e) <= 0.4 + 1e-12);
}

TEST_CASE("build_initial_mesh: L-shaped domain has area 0.75") {
  const TriMesh m = build_initial_mesh(l_shaped({0.5, 0.5}), 0.4);
  CHECK(std::abs(m.total_area() - 0.75) < 1e-12);
  CHECK(is_conforming(m));
  for (const BoundaryEdge& be : m.boundary_edges()) CHECK(be.tag == BoundaryTag::outer);
}

TEST_CASE("build_initial_mesh: degenerate domains are rejected") {
  CHECK_THROWS_AS(build_initial_mesh(square_with_hole({0.4, 0.4}, {0.4, 0.5}), 0.4),
                  invalid_domain_error);
  CHECK_THROWS_AS(build_initial_mesh(square_with_hole({0.0, 0.4}, {0.5, 0.5}), 0.4),
                  invalid_domain_error);
  CHECK_THROWS_AS(build_initial_mesh(l_shaped({1.0, 0.5}), 0.4), invalid_domain_error);
}

TEST_CASE("build_initial_mesh: default-ish bound lands in a coarse range") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const double cx = rng.uniform(0.3, 0.7), cy = rng.uniform(0.3, 0.7);
    const double w = rng.uniform(0.05, 0.12);
    const TriMesh m = build_initial_mesh(square_with_hole({cx - w, cy - w}, {cx + w, cy + w}), 0.4);
    CHECK(m.n_elements() >= 8);
    CHECK(m.n_elements() <= 120);
  }
}

TEST_CASE("refine: marking a lone triangle yields four quarters") {
  const TriMesh m(
      {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}, {Element{{0, 1, 2}, 2}},
      {{0, 1, BoundaryTag::outer}, {1, 2, BoundaryTag::outer}, {2, 0, BoundaryTag::outer}});
  const auto [fine, map] = refine(m, marks_of(m, true));
  CHECK(fine.n_elements() == 4);
  REQUIRE(map.children[0].size() == 4);
  for (Index c : map.children[0])
    CHECK(fine.element_area(c) == doctest::Approx(m.element_area(0) / 4).epsilon(1e-12));
  CHECK(is_conforming(fine));
  CHECK(nested_in_parent(fine, m, map, 1e-12));
}

TEST_CASE("refine: no marks is the identity") {
  const TriMesh m = build_initial_mesh(unit_square(), 0.5);
  const auto [same, map] = refine(m, marks_of(m, false));
  REQUIRE(same.n_elements() == m.n_elements());
  CHECK(same.n_vertices() == m.n_vertices());
  for (Index e = 0; e < m.n_elements(); ++e) {
    CHECK(same.elements()[e].v == m.elements()[e].v);
    REQUIRE(map.children[e].size() == 1);
    CHECK(map.children[e][0] == e);
  }
}

TEST_CASE("refine: closure bisects the diagonal neighbour") {
  const TriMesh m = build_initial_mesh(unit_square(), 1.5);
  MarkVector mv;
  mv.marks = {true, false};
  const auto [fine, map] = refine(m, mv);
  CHECK(map.children[0].size() == 4);
  CHECK(map.children[1].size() >= 2);
  CHECK(is_conforming(fine));
  double area = 0.0;
  for (Index e = 0; e < fine.n_elements(); ++e) area += fine.element_area(e);
  CHECK(area == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("uniform_refine multiplies element count by 4^k") {
  const TriMesh m = build_initial_mesh(unit_square(), 1.5);
  CHECK(uniform_refine(m, 1).n_elements() == 8);
  CHECK(uniform_refine(m, 0).n_elements() == 2);
  CHECK(uniform_refine(m, 4).n_elements() == 512);
}

TEST_CASE("compose_refinement_maps") {
  RefinementMap a;
  a.children = {{0, 1}};
  RefinementMap b;
  b.children = {{0, 1}, {2}};

  SUBCASE("with identity") {
    const RefinementMap id = identity_refinement_map(2);
    const RefinementMap ab = compose_refinement_maps({a, id});
    CHECK(ab.children == a.children);
  }
  SUBCASE("unions children") {
    const RefinementMap ab = compose_refinement_maps({a, b});
    REQUIRE(ab.children.size() == 1);
    CHECK(ab.children[0] == std::vector<Index>{0, 1, 2});
  }
  SUBCASE("index mismatch throws") {
    RefinementMap bad;
    bad.children = {{5}};
    CHECK_THROWS_AS(compose_refinement_maps({bad, b}), composition_error);
  }
  SUBCASE("fuzz: composed descendants cover the final mesh") {
    Rng rng(21);
    for (int trial = 0; trial < 100; ++trial) {
      TriMesh m = build_initial_mesh(unit_square(), 1.0);
      std::vector<RefinementMap> maps;
      for (int step = 0; step < 3; ++step) {
        auto [next, map] = refine(m, random_marks(m, rng, 0.35));
        maps.push_back(map);
        m = next;
      }
      const RefinementMap total = compose_refinement_maps(maps);
      std::size_t count = 0;
      std::set<Index> all;
      for (const auto& kids : total.children) {
        count += kids.size();
        all.insert(kids.begin(), kids.end());
      }
      CHECK(count == m.n_elements());
      CHECK(all.size() == m.n_elements());
    }
  }
}

TEST_CASE("element_geometry: shoelace areas and centroids") {
  const TriMesh tri(
      {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}, {Element{{0, 1, 2}, 2}},
      {{0, 1, BoundaryTag::outer}, {1, 2, BoundaryTag::outer}, {2, 0, BoundaryTag::outer}});
  const ElementGeometry g = element_geometry(tri);
  CHECK(g.areas[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(g.midpoints[0].x == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK(g.midpoints[0].y == doctest::Approx(1.0 / 3).epsilon(1e-15));

  const TriMesh sq = build_initial_mesh(unit_square(), 1.5);
  const ElementGeometry gs = element_geometry(sq);
  CHECK(gs.areas[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(gs.areas[1] == doctest::Approx(0.5).epsilon(1e-15));

  const TriMesh fine = uniform_refine(sq, 3);
  for (double a : element_geometry(fine).areas) CHECK(a > 0.0);
}

TEST_CASE("element_adjacency") {
  SUBCASE("two-element square") {
    const TriMesh m = build_initial_mesh(unit_square(), 1.5);
    const auto adj = element_adjacency(m);
    REQUIRE(adj.size() == 2);
    CHECK(adj[0] == std::pair<Index, Index>{0, 1});
    CHECK(adj[1] == std::pair<Index, Index>{1, 0});
  }
  SUBCASE("single element has no neighbours") {
    const TriMesh tri(
        {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}, {Element{{0, 1, 2}, 2}},
        {{0, 1, BoundaryTag::outer}, {1, 2, BoundaryTag::outer}, {2, 0, BoundaryTag::outer}});
    CHECK(element_adjacency(tri).empty());
  }
  SUBCASE("quartered triangle: three interior edges, degree pattern 2-2-1-1") {
    // Two nested bisections do not produce the red pattern; the four children
    // form a path in the adjacency graph.
    const TriMesh tri(
        {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}}, {Element{{0, 1, 2}, 2}},
        {{0, 1, BoundaryTag::outer}, {1, 2, BoundaryTag::outer}, {2, 0, BoundaryTag::outer}});
    const TriMesh fine = uniform_refine(tri, 1);
    const auto adj = element_adjacency(fine);
    CHECK(adj.size() == 6);  // 3 interior edges, both directions
    std::array<int, 4> degree{};
    for (const auto& [i, j] : adj) ++degree[i];
    std::sort(degree.begin(), degree.end());
    CHECK(degree == std::array<int, 4>{1, 1, 2, 2});
  }
}

TEST_CASE("locate_point: centroids, vertices, round trips") {
  Rng rng(3);
  TriMesh m = build_initial_mesh(square_with_hole({0.4, 0.4}, {0.55, 0.6}), 0.45);
  for (int step = 0; step < 2; ++step) m = refine(m, random_marks(m, rng, 0.4)).first;

  SUBCASE("centroid of element k locates k") {
    for (Index e = 0; e < m.n_elements(); ++e) {
      const PointLocation loc = locate_point(m, m.element_midpoint(e));
      CHECK(loc.element == e);
      for (double w : loc.bary.w) CHECK(w == doctest::Approx(1.0 / 3).epsilon(1e-9));
    }
  }
  SUBCASE("mesh vertex locates an incident element with a unit coordinate") {
    const Vec2 p = m.vertex(m.elements()[5].v[0]);
    const PointLocation loc = locate_point(m, p);
    const double mx = *std::max_element(loc.bary.w.begin(), loc.bary.w.end());
    CHECK(mx == doctest::Approx(1.0).epsilon(1e-10));
  }
  SUBCASE("outside point throws") {
    CHECK_THROWS_AS(locate_point(m, {2.0, 2.0}), location_error);
    CHECK_THROWS_AS(locate_point(m, {0.47, 0.5}), location_error);  // in the hole
  }
  SUBCASE("1000 random interior points reconstruct within 1e-10") {
    int tested = 0;
    while (tested < 1000) {
      const Vec2 p{rng.next_double(), rng.next_double()};
      if (!m.corners(0).size()) break;
      DomainGeometry d = square_with_hole({0.4, 0.4}, {0.55, 0.6});
      if (!d.contains(p, -1e-9)) continue;
      const PointLocation loc = locate_point(m, p);
      const auto c = m.corners(loc.element);
      const Vec2 back = c[0] * loc.bary.w[0] + c[1] * loc.bary.w[1] + c[2] * loc.bary.w[2];
      CHECK(distance(back, p) < 1e-10);
      for (double w : loc.bary.w) CHECK(w >= -1e-10);
      ++tested;
    }
  }
}

TEST_CASE("locate_point ties resolve to the lowest element index") {
  const TriMesh m = build_initial_mesh(unit_square(), 1.5);
  const PointLocation loc = locate_point(m, {0.5, 0.5});  // on the diagonal
  CHECK(loc.element == 0);
}

TEST_CASE("refinement invariants under random mark sequences") {
  Rng rng(11);
  for (int trial = 0; trial < 60; ++trial) {
    TriMesh m = trial % 3 == 0 ? build_initial_mesh(unit_square(), 1.5)
               : trial % 3 == 1
                   ? build_initial_mesh(square_with_hole({0.45, 0.3}, {0.6, 0.45}), 0.5)
                   : build_initial_mesh(l_shaped({0.6, 0.35}), 0.5);
    const double initial_area = m.total_area();
    for (int step = 0; step < 4; ++step) {
      const MarkVector mv = random_marks(m, rng, rng.uniform(0.1, 0.6));
      const auto [fine, map] = refine(m, mv);
      CHECK(is_conforming(fine));
      CHECK(nested_in_parent(fine, m, map, 1e-12));
      for (Index e = 0; e < m.n_elements(); ++e) {
        const std::size_t k = map.children[e].size();
        CHECK((k == 1 || k == 2 || k == 4));
        if (mv.marks[e]) CHECK(k == 4);
      }
      CHECK(std::abs(fine.total_area() - initial_area) <= 1e-12 * initial_area);
      m = fine;
    }
  }
}

TEST_CASE("shape regularity: bounded similarity classes, stable minimum angle") {
  const TriMesh tri(
      {{0.0, 0.0}, {1.0, 0.0}, {0.3, 0.8}}, {Element{{0, 1, 2}, 0}},
      {{0, 1, BoundaryTag::outer}, {1, 2, BoundaryTag::outer}, {2, 0, BoundaryTag::outer}});
  const double angle0 = min_angle(tri);
  const TriMesh fine = uniform_refine(tri, 4);
  CHECK(min_angle(fine) >= 0.5 * angle0);

  std::set<std::array<long long, 3>> classes;
  for (Index e = 0; e < fine.n_elements(); ++e) {
    const auto c = fine.corners(e);
    std::array<double, 3> lens{distance(c[0], c[1]), distance(c[1], c[2]), distance(c[2], c[0])};
    std::sort(lens.begin(), lens.end());
    std::array<long long, 3> key;
    for (int i = 0; i < 3; ++i) key[i] = std::llround(lens[i] / lens[2] * 1e9);
    classes.insert(key);
  }
  CHECK(classes.size() <= 4);
}

TEST_CASE("mesh text format round trip") {
  Rng rng(5);
  TriMesh m = build_initial_mesh(square_with_hole({0.35, 0.4}, {0.5, 0.55}), 0.45);
  m = refine(m, random_marks(m, rng, 0.3)).first;
  std::vector<double> sol(m.n_vertices());
  for (auto& v : sol) v = rng.uniform(-2.0, 2.0);

  const std::string text = mesh_to_string(m, &sol);
  std::istringstream is(text);
  const LoadedMesh back = read_mesh(is);
  REQUIRE(back.mesh.n_vertices() == m.n_vertices());
  REQUIRE(back.mesh.n_elements() == m.n_elements());
  for (Index v = 0; v < m.n_vertices(); ++v) {
    CHECK(back.mesh.vertex(v).x == m.vertex(v).x);
    CHECK(back.mesh.vertex(v).y == m.vertex(v).y);
  }
  for (Index e = 0; e < m.n_elements(); ++e) CHECK(back.mesh.elements()[e].v == m.elements()[e].v);
  CHECK(back.mesh.boundary_edges().size() == m.boundary_edges().size());
  REQUIRE(back.solution.has_value());
  for (Index v = 0; v < m.n_vertices(); ++v) CHECK((*back.solution)[v] == sol[v]);

  std::istringstream bad("tri-mesh v2\n0 0\n");
  CHECK_THROWS_AS(read_mesh(bad), format_error);
}

TEST_CASE("svg rendering emits one polygon per element") {
  const TriMesh m = build_initial_mesh(unit_square(), 0.6);
  std::vector<double> scalar(m.n_elements());
  for (Index e = 0; e < m.n_elements(); ++e) scalar[e] = static_cast<double>(e);
  const std::string svg = mesh_to_svg(m, scalar);
  std::size_t polys = 0, pos = 0;
  while ((pos = svg.find("<polygon", pos)) != std::string::npos) {
    ++polys;
    pos += 8;
  }
  CHECK(polys == m.n_elements());
}
