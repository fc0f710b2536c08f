#include "amrlab/fem.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "amrlab/kernels.hpp"

namespace amr {

double SparseSystem::entry(Index row, Index col) const {
  for (std::size_t k = row_offsets[row]; k < row_offsets[row + 1]; ++k)
    if (col_indices[k] == col) return values[k];
  return 0.0;
}

void SparseSystem::multiply(const std::vector<double>& x, std::vector<double>& y) const {
  spmv(y, row_offsets, col_indices, values, x);
}

SparseSystem assemble_stiffness(const TriMesh& mesh) {
  const Index nv = mesh.n_vertices();

  // Sparsity pattern: vertex self plus every vertex sharing an element.
  std::vector<std::vector<Index>> nbrs(nv);
  for (Index v = 0; v < nv; ++v) nbrs[v].push_back(v);
  for (const Element& el : mesh.elements())
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (i != j) nbrs[el.v[i]].push_back(el.v[j]);

  SparseSystem sys;
  sys.row_offsets.assign(nv + 1, 0);
  for (Index v = 0; v < nv; ++v) {
    auto& row = nbrs[v];
    std::sort(row.begin(), row.end());
    row.erase(std::unique(row.begin(), row.end()), row.end());
    sys.row_offsets[v + 1] = sys.row_offsets[v] + row.size();
  }
  sys.col_indices.reserve(sys.row_offsets[nv]);
  for (Index v = 0; v < nv; ++v)
    sys.col_indices.insert(sys.col_indices.end(), nbrs[v].begin(), nbrs[v].end());
  sys.values.assign(sys.row_offsets[nv], 0.0);
  sys.rhs.assign(nv, 0.0);

  auto slot_of = [&](Index row, Index col) {
    const auto begin = sys.col_indices.begin() + sys.row_offsets[row];
    const auto end = sys.col_indices.begin() + sys.row_offsets[row + 1];
    const auto it = std::lower_bound(begin, end, col);
    return static_cast<std::size_t>(it - sys.col_indices.begin());
  };

  // Contributions are accumulated per slot in sorted order, so the assembled
  // matrix is bit-identical under any element reordering.
  std::vector<std::pair<std::size_t, double>> contrib;
  contrib.reserve(mesh.n_elements() * 9);
  for (Index e = 0; e < mesh.n_elements(); ++e) {
    const auto c = mesh.corners(e);
    const double area = 0.5 * signed_area2(c[0], c[1], c[2]);
    if (area < 1e-14) throw assembly_error("assemble_stiffness: degenerate element");
    Vec2 grad[3];
    for (int i = 0; i < 3; ++i) {
      const Vec2 opp = c[(i + 2) % 3] - c[(i + 1) % 3];
      grad[i] = Vec2{-opp.y, opp.x} * (1.0 / (2.0 * area));
    }
    const auto& v = mesh.elements()[e].v;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        contrib.emplace_back(slot_of(v[i], v[j]), area * grad[i].dot(grad[j]));
  }
  std::sort(contrib.begin(), contrib.end());
  for (const auto& [slot, value] : contrib) sys.values[slot] += value;
  return sys;
}

std::vector<double> assemble_load(const TriMesh& mesh, const ScalarField& f) {
  const Index ne = mesh.n_elements();
  // Per-element contributions in a parallel map, then an ordered scatter, so
  // the result does not depend on the thread count.
  std::vector<std::array<double, 3>> local(ne);
#pragma omp parallel for schedule(static)
  for (long long e = 0; e < static_cast<long long>(ne); ++e) {
    const auto c = mesh.corners(static_cast<Index>(e));
    const double area = 0.5 * signed_area2(c[0], c[1], c[2]);
    double fm[3];
    for (int i = 0; i < 3; ++i) fm[i] = f((c[i] + c[(i + 1) % 3]) * 0.5);
    // Edge-midpoint rule: hat function phi_i is 1/2 on its two adjacent
    // midpoints and 0 on the opposite one.
    for (int i = 0; i < 3; ++i) local[e][i] = (area / 3.0) * 0.5 * (fm[i] + fm[(i + 2) % 3]);
  }
  std::vector<std::pair<Index, double>> contrib;
  contrib.reserve(ne * 3);
  for (Index e = 0; e < ne; ++e)
    for (int i = 0; i < 3; ++i) {
      if (!std::isfinite(local[e][i]))
        throw evaluation_error("assemble_load: non-finite load value");
      contrib.emplace_back(mesh.elements()[e].v[i], local[e][i]);
    }
  std::sort(contrib.begin(), contrib.end());
  std::vector<double> rhs(mesh.n_vertices(), 0.0);
  for (const auto& [vertex, value] : contrib) rhs[vertex] += value;
  return rhs;
}

SparseSystem apply_dirichlet(const SparseSystem& system, const DirichletBC& bc) {
  if (bc.indices.size() != bc.values.size())
    throw std::invalid_argument("apply_dirichlet: index/value size mismatch");
  SparseSystem out = system;
  const std::size_t n = system.n();

  std::vector<char> fixed(n, 0);
  std::vector<double> fixed_value(n, 0.0);
  std::unordered_set<Index> seen;
  for (std::size_t k = 0; k < bc.indices.size(); ++k) {
    const Index idx = bc.indices[k];
    if (idx >= n || !seen.insert(idx).second)
      throw std::invalid_argument("apply_dirichlet: invalid or duplicate index");
    fixed[idx] = 1;
    fixed_value[idx] = bc.values[k];
  }

  for (Index r = 0; r < n; ++r) {
    for (std::size_t k = out.row_offsets[r]; k < out.row_offsets[r + 1]; ++k) {
      const Index c = out.col_indices[k];
      if (fixed[r]) {
        out.values[k] = (c == r) ? 1.0 : 0.0;
      } else if (fixed[c]) {
        out.rhs[r] -= out.values[k] * fixed_value[c];
        out.values[k] = 0.0;
      }
    }
    if (fixed[r]) out.rhs[r] = fixed_value[r];
  }
  out.constrained = bc.indices;
  out.constrained_values = bc.values;
  return out;
}

Solution solve(const SparseSystem& system, double tol) {
  const std::size_t n = system.n();
  const std::vector<double>& b = system.rhs;
  std::vector<double> x(n, 0.0);

  const double bnorm = std::sqrt(dot(b, b));
  if (bnorm == 0.0) {
    Solution s{std::move(x)};
    for (std::size_t k = 0; k < system.constrained.size(); ++k)
      s.values[system.constrained[k]] = system.constrained_values[k];
    return s;
  }

  std::vector<double> diag(n, 1.0);
  for (Index r = 0; r < n; ++r) {
    const double d = system.entry(r, r);
    if (d > 0.0) diag[r] = 1.0 / d;
  }

  std::vector<double> r = b, z(n), p(n), ap(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = diag[i] * r[i];
  p = z;
  double rz = dot(r, z);

  const std::size_t max_iter = std::max<std::size_t>(1000, 20 * n);
  double rel = 1.0;
  for (std::size_t it = 0; it < max_iter; ++it) {
    system.multiply(p, ap);
    const double pap = dot(p, ap);
    if (!(pap > 0.0))
      throw solver_error("solve: matrix not positive definite along search direction");
    const double alpha = rz / pap;
    for (std::size_t i = 0; i < n; ++i) x[i] += alpha * p[i];
    for (std::size_t i = 0; i < n; ++i) r[i] -= alpha * ap[i];
    rel = std::sqrt(dot(r, r)) / bnorm;
    if (rel <= tol) {
      Solution s{std::move(x)};
      for (std::size_t k = 0; k < system.constrained.size(); ++k)
        s.values[system.constrained[k]] = system.constrained_values[k];
      return s;
    }
    for (std::size_t i = 0; i < n; ++i) z[i] = diag[i] * r[i];
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  char msg[128];
  std::snprintf(msg, sizeof msg, "solve: no convergence, relative residual %.3e after %zu iters",
                rel, max_iter);
  throw solver_error(msg);
}

DirichletBC boundary_conditions(const PdeProblem& problem, const TriMesh& mesh) {
  std::vector<char> tagged(mesh.n_vertices(), 0);
  std::vector<double> value(mesh.n_vertices(), 0.0);
  for (const BoundaryEdge& be : mesh.boundary_edges()) {
    const auto it = problem.bc.find(be.tag);
    if (it == problem.bc.end()) continue;
    for (Index v : {be.a, be.b}) {
      tagged[v] = 1;
      value[v] = it->second;
    }
  }
  DirichletBC bc;
  for (Index v = 0; v < mesh.n_vertices(); ++v)
    if (tagged[v]) {
      bc.indices.push_back(v);
      bc.values.push_back(value[v]);
    }
  return bc;
}

Solution solve_problem(const PdeProblem& problem, const TriMesh& mesh) {
  SparseSystem sys = assemble_stiffness(mesh);
  if (problem.family() == PdeFamily::poisson)
    sys.rhs = assemble_load(mesh, [&](Vec2 p) { return -eval_load(problem, p); });
  const DirichletBC bc = boundary_conditions(problem, mesh);
  return solve(apply_dirichlet(sys, bc));
}

double interpolate(const TriMesh& mesh, const Solution& solution, Vec2 p) {
  const PointLocation loc = locate_point(mesh, p);
  const auto& v = mesh.elements()[loc.element].v;
  return loc.bary.w[0] * solution.values[v[0]] + loc.bary.w[1] * solution.values[v[1]] +
         loc.bary.w[2] * solution.values[v[2]];
}

double energy_norm_squared(const SparseSystem& stiffness, const std::vector<double>& x) {
  std::vector<double> y(x.size());
  stiffness.multiply(x, y);
  return dot(x, y);
}

}  // namespace amr
