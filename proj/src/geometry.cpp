#include "amrlab/geometry.hpp"

#include <algorithm>

namespace amr {

double point_segment_distance(Vec2 p, const Segment& s) {
  const Vec2 d = s.b - s.a;
  const double len2 = d.dot(d);
  if (len2 == 0.0) return distance(p, s.a);
  double t = (p - s.a).dot(d) / len2;
  t = std::clamp(t, 0.0, 1.0);
  return distance(p, s.a + d * t);
}

Barycentric barycentric_coords(Vec2 p, Vec2 a, Vec2 b, Vec2 c) {
  const double total = signed_area2(a, b, c);
  const double wa = signed_area2(p, b, c) / total;
  const double wb = signed_area2(a, p, c) / total;
  const double wc = 1.0 - wa - wb;
  return Barycentric{{wa, wb, wc}};
}

namespace {

std::vector<Segment> rectangle_segments(Vec2 lo, Vec2 hi) {
  return {{{lo.x, lo.y}, {hi.x, lo.y}},
          {{hi.x, lo.y}, {hi.x, hi.y}},
          {{hi.x, hi.y}, {lo.x, hi.y}},
          {{lo.x, hi.y}, {lo.x, lo.y}}};
}

}  // namespace

double DomainGeometry::area() const {
  if (kind == DomainKind::unit_square) return 1.0;
  if (kind == DomainKind::square_with_hole) {
    return 1.0 - (hole_hi.x - hole_lo.x) * (hole_hi.y - hole_lo.y);
  }
  return 1.0 - (1.0 - cutoff.x) * (1.0 - cutoff.y);
}

bool DomainGeometry::contains(Vec2 p, double tol) const {
  if (p.x < -tol || p.x > 1.0 + tol || p.y < -tol || p.y > 1.0 + tol) return false;
  if (kind == DomainKind::unit_square) return true;
  if (kind == DomainKind::square_with_hole) {
    const bool in_hole = p.x > hole_lo.x + tol && p.x < hole_hi.x - tol &&
                         p.y > hole_lo.y + tol && p.y < hole_hi.y - tol;
    return !in_hole;
  }
  const bool in_cutoff = p.x > cutoff.x + tol && p.y > cutoff.y + tol;
  return !in_cutoff;
}

std::vector<Segment> DomainGeometry::outer_boundary() const {
  if (kind != DomainKind::l_shaped) {
    return rectangle_segments({0.0, 0.0}, {1.0, 1.0});
  }
  // L-shape traversed CCW starting at the origin.
  const Vec2 p0 = cutoff;
  return {{{0.0, 0.0}, {1.0, 0.0}}, {{1.0, 0.0}, {1.0, p0.y}},
          {{1.0, p0.y}, {p0.x, p0.y}}, {{p0.x, p0.y}, {p0.x, 1.0}},
          {{p0.x, 1.0}, {0.0, 1.0}}, {{0.0, 1.0}, {0.0, 0.0}}};
}

std::vector<Segment> DomainGeometry::inner_boundary() const {
  if (kind == DomainKind::square_with_hole) return rectangle_segments(hole_lo, hole_hi);
  return {};
}

double DomainGeometry::distance_to_boundary(Vec2 p) const {
  double best = std::numeric_limits<double>::infinity();
  for (const Segment& s : outer_boundary()) best = std::min(best, point_segment_distance(p, s));
  for (const Segment& s : inner_boundary()) best = std::min(best, point_segment_distance(p, s));
  return best;
}

double DomainGeometry::distance_to_inner_boundary(Vec2 p) const {
  double best = std::numeric_limits<double>::infinity();
  for (const Segment& s : inner_boundary()) best = std::min(best, point_segment_distance(p, s));
  return best;
}

void DomainGeometry::validate() const {
  if (kind == DomainKind::unit_square) return;
  if (kind == DomainKind::square_with_hole) {
    if (hole_hi.x <= hole_lo.x || hole_hi.y <= hole_lo.y)
      throw invalid_domain_error("domain: hole has non-positive extent");
    if (hole_lo.x <= 0.0 || hole_lo.y <= 0.0 || hole_hi.x >= 1.0 || hole_hi.y >= 1.0)
      throw invalid_domain_error("domain: hole touches or leaves the outer boundary");
  } else if (kind == DomainKind::l_shaped) {
    if (cutoff.x <= 0.0 || cutoff.y <= 0.0 || cutoff.x >= 1.0 || cutoff.y >= 1.0)
      throw invalid_domain_error("domain: cutoff corner outside the open unit square");
  }
}

}  // namespace amr
