#include "amrlab/mesh_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace amr {

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_mesh(std::ostream& os, const TriMesh& mesh, const std::vector<double>* solution) {
  if (solution && solution->size() != mesh.n_vertices())
    throw format_error("write_mesh: solution size does not match vertex count");
  os << "tri-mesh v1\n" << mesh.n_vertices() << ' ' << mesh.n_elements() << '\n';
  for (const Vec2& v : mesh.vertices()) os << fmt_double(v.x) << ' ' << fmt_double(v.y) << '\n';

  // Per-element edge tags reconstructed from the boundary list.
  std::vector<int> flags(mesh.n_elements() * 3, 0);
  auto key = [](Index a, Index b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
  };
  std::unordered_map<std::uint64_t, int> tag;
  for (const BoundaryEdge& be : mesh.boundary_edges())
    tag[key(be.a, be.b)] = be.tag == BoundaryTag::outer ? 1 : 2;
  for (Index e = 0; e < mesh.n_elements(); ++e) {
    const Element& el = mesh.elements()[e];
    for (int i = 0; i < 3; ++i) {
      auto it = tag.find(key(el.v[i], el.v[(i + 1) % 3]));
      if (it != tag.end()) flags[e * 3 + i] = it->second;
    }
  }
  for (Index e = 0; e < mesh.n_elements(); ++e) {
    const Element& el = mesh.elements()[e];
    os << el.v[0] << ' ' << el.v[1] << ' ' << el.v[2] << ' ' << flags[e * 3] << ' '
       << flags[e * 3 + 1] << ' ' << flags[e * 3 + 2] << '\n';
  }
  if (solution)
    for (double v : *solution) os << fmt_double(v) << '\n';
}

std::string mesh_to_string(const TriMesh& mesh, const std::vector<double>* solution) {
  std::ostringstream os;
  write_mesh(os, mesh, solution);
  return os.str();
}

LoadedMesh read_mesh(std::istream& is) {
  std::string header;
  std::getline(is, header);
  if (header != "tri-mesh v1") throw format_error("read_mesh: bad header: " + header);
  std::size_t nv = 0, ne = 0;
  if (!(is >> nv >> ne)) throw format_error("read_mesh: bad counts");

  std::vector<Vec2> vertices(nv);
  for (auto& v : vertices)
    if (!(is >> v.x >> v.y)) throw format_error("read_mesh: bad vertex line");

  std::vector<Element> elements(ne);
  std::vector<BoundaryEdge> boundary;
  for (auto& el : elements) {
    int f0, f1, f2;
    if (!(is >> el.v[0] >> el.v[1] >> el.v[2] >> f0 >> f1 >> f2))
      throw format_error("read_mesh: bad element line");
    const int fl[3] = {f0, f1, f2};
    for (int i = 0; i < 3; ++i)
      if (fl[i] != 0)
        boundary.push_back(
            {el.v[i], el.v[(i + 1) % 3], fl[i] == 1 ? BoundaryTag::outer : BoundaryTag::inner});
    // Refinement edge: longest, ties to the lowest local index.
    double best = -1.0;
    for (int i = 0; i < 3; ++i) {
      const double len = distance(vertices[el.v[i]], vertices[el.v[(i + 1) % 3]]);
      if (len > best + 1e-15) {
        best = len;
        el.refinement_edge = static_cast<std::uint8_t>(i);
      }
    }
  }

  LoadedMesh out{TriMesh(std::move(vertices), std::move(elements), std::move(boundary)), {}};
  std::vector<double> solution(nv);
  bool have_solution = nv > 0;
  for (auto& v : solution)
    if (!(is >> v)) {
      have_solution = false;
      break;
    }
  if (have_solution) out.solution = std::move(solution);
  return out;
}

namespace {

struct Rgb {
  int r, g, b;
};

// Blue -> white -> red, t in [0,1].
Rgb ramp(double t) {
  t = std::clamp(t, 0.0, 1.0);
  auto mix = [](int a, int b, double u) { return static_cast<int>(a + (b - a) * u + 0.5); };
  if (t < 0.5) {
    const double u = t * 2.0;
    return {mix(42, 247, u), mix(80, 247, u), mix(190, 247, u)};
  }
  const double u = (t - 0.5) * 2.0;
  return {mix(247, 200, u), mix(247, 46, u), mix(247, 38, u)};
}

}  // namespace

std::string mesh_to_svg(const TriMesh& mesh, const std::vector<double>& element_scalar,
                        int width_px) {
  if (element_scalar.size() != mesh.n_elements())
    throw format_error("mesh_to_svg: scalar size does not match element count");
  double lo = 0.0, hi = 1.0;
  if (!element_scalar.empty()) {
    lo = *std::min_element(element_scalar.begin(), element_scalar.end());
    hi = *std::max_element(element_scalar.begin(), element_scalar.end());
    if (hi - lo < 1e-300) hi = lo + 1.0;
  }

  const double scale = width_px;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_px << "\" height=\""
     << width_px << "\" viewBox=\"0 0 " << width_px << ' ' << width_px << "\">\n";
  char buf[256];
  for (Index e = 0; e < mesh.n_elements(); ++e) {
    const auto c = mesh.corners(e);
    const Rgb col = ramp((element_scalar[e] - lo) / (hi - lo));
    std::snprintf(buf, sizeof buf,
                  "<polygon points=\"%.2f,%.2f %.2f,%.2f %.2f,%.2f\" "
                  "fill=\"rgb(%d,%d,%d)\" stroke=\"#333\" stroke-width=\"0.4\"/>\n",
                  c[0].x * scale, (1.0 - c[0].y) * scale, c[1].x * scale, (1.0 - c[1].y) * scale,
                  c[2].x * scale, (1.0 - c[2].y) * scale, col.r, col.g, col.b);
    os << buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"4\" y=\"14\" font-size=\"12\" fill=\"#000\">min %.6g max %.6g</text>\n",
                lo, hi);
  os << buf;
  os << "</svg>\n";
  return os.str();
}

}  // namespace amr
