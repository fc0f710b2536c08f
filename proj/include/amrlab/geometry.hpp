#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace amr {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

struct Segment {
  Vec2 a, b;
};

/// Distance from point p to the closed segment [a, b].
double point_segment_distance(Vec2 p, const Segment& s);

/// Twice the signed area of triangle (a, b, c); positive for CCW.
inline double signed_area2(Vec2 a, Vec2 b, Vec2 c) { return (b - a).cross(c - a); }

struct Barycentric {
  std::array<double, 3> w;  // weights on the triangle's three vertices, sum 1

  double min() const { return std::min(w[0], std::min(w[1], w[2])); }
};

/// Barycentric coordinates of p in triangle (a, b, c). Requires non-degenerate
/// triangle.
Barycentric barycentric_coords(Vec2 p, Vec2 a, Vec2 b, Vec2 c);

class invalid_domain_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BoundaryTag : unsigned char { outer = 0, inner = 1 };

enum class DomainKind { unit_square, square_with_hole, l_shaped };

/// The sampled domain families: the unit square with an axis-aligned
/// rectangular hole, and the unit square with its upper-right corner cut off
/// at p0. The plain unit square is kept for manufactured test problems.
/// Coordinates are normalized to (0,1)^2.
struct DomainGeometry {
  DomainKind kind = DomainKind::square_with_hole;
  Vec2 hole_lo{0.45, 0.45};  // square_with_hole: hole rectangle corners
  Vec2 hole_hi{0.55, 0.55};
  Vec2 cutoff{0.5, 0.5};  // l_shaped: lower-left corner of the removed rectangle

  double area() const;
  bool contains(Vec2 p, double tol = 1e-10) const;
  std::vector<Segment> outer_boundary() const;
  std::vector<Segment> inner_boundary() const;  // empty for l_shaped

  double distance_to_boundary(Vec2 p) const;
  double distance_to_inner_boundary(Vec2 p) const;

  /// Throws invalid_domain_error for degenerate configurations (zero-area
  /// hole, hole touching the outer boundary, cutoff outside the square).
  void validate() const;
};

}  // namespace amr
