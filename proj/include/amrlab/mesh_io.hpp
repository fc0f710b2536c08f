#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "amrlab/mesh.hpp"

namespace amr {

class format_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Plain-text mesh format:
///   tri-mesh v1
///   <vertex count> <element count>
///   x y                      (one line per vertex)
///   i j k f0 f1 f2           (one line per element; f* tags local edge *:
///                             0 interior, 1 outer boundary, 2 inner boundary)
/// If `solution` is given, one value per vertex line follows.
void write_mesh(std::ostream& os, const TriMesh& mesh,
                const std::vector<double>* solution = nullptr);
std::string mesh_to_string(const TriMesh& mesh, const std::vector<double>* solution = nullptr);

struct LoadedMesh {
  TriMesh mesh;
  std::optional<std::vector<double>> solution;
};

/// Parses the format above. Refinement edges are re-derived from the longest
/// edge; lineage is not part of the format.
LoadedMesh read_mesh(std::istream& is);

/// SVG rendering: triangles filled by a per-element scalar mapped onto a
/// blue-white-red ramp, edges stroked thin.
std::string mesh_to_svg(const TriMesh& mesh, const std::vector<double>& element_scalar,
                        int width_px = 640);

}  // namespace amr
