#include "amrlab/error_metrics.hpp"

#include <cmath>

namespace amr {

ReferenceSolution make_reference(const TriMesh& initial, int depth, const MeshSolver& solver) {
  ReferenceSolution ref;
  ref.depth = depth;
  ref.mesh = uniform_refine(initial, depth);
  ref.solution = solver(ref.mesh);

  const Index ne = ref.mesh.n_elements();
  ref.midpoints.resize(ne);
  ref.areas.resize(ne);
  ref.midpoint_values.resize(ne);
  for (Index e = 0; e < ne; ++e) {
    ref.midpoints[e] = ref.mesh.element_midpoint(e);
    ref.areas[e] = ref.mesh.element_area(e);
    const auto& v = ref.mesh.elements()[e].v;
    ref.midpoint_values[e] = (ref.solution.values[v[0]] + ref.solution.values[v[1]] +
                              ref.solution.values[v[2]]) / 3.0;
  }
  ref.root_elements = root_ancestors(ref.mesh);
  return ref;
}

ReferenceSolution make_reference(const PdeProblem& problem, const TriMesh& initial, int depth) {
  return make_reference(initial, depth,
                        [&](const TriMesh& m) { return solve_problem(problem, m); });
}

namespace {

// Interpolated current-mesh value at every reference midpoint, plus the
// containing element. Parallel map; accumulation happens afterwards in
// midpoint order, so results do not depend on the thread count.
void assign_midpoints(const TriMesh& mesh, const Solution& solution,
                      const ReferenceSolution& reference, std::vector<Index>& element,
                      std::vector<double>& value, bool parallel) {
  const long long nm = static_cast<long long>(reference.midpoints.size());
  element.resize(nm);
  value.resize(nm);
  bool failed = false;
#pragma omp parallel for schedule(static) if (parallel)
  for (long long r = 0; r < nm; ++r) {
    try {
      const PointLocation loc =
          locate_point_seeded(mesh, reference.midpoints[r], reference.root_elements[r]);
      element[r] = loc.element;
      const auto& v = mesh.elements()[loc.element].v;
      value[r] = loc.bary.w[0] * solution.values[v[0]] + loc.bary.w[1] * solution.values[v[1]] +
                 loc.bary.w[2] * solution.values[v[2]];
    } catch (const location_error&) {
#pragma omp critical
      failed = true;
    }
  }
  if (failed) throw integration_error("raw_element_errors: unassigned reference midpoint");
}

std::vector<double> raw_errors_impl(const TriMesh& mesh, const Solution& solution,
                                    const ReferenceSolution& reference, bool parallel) {
  if (solution.values.size() != mesh.n_vertices())
    throw std::invalid_argument("raw_element_errors: solution/mesh size mismatch");
  std::vector<Index> element;
  std::vector<double> value;
  assign_midpoints(mesh, solution, reference, element, value, parallel);

  std::vector<double> err(mesh.n_elements(), 0.0);
  for (std::size_t r = 0; r < element.size(); ++r)
    err[element[r]] += reference.areas[r] * std::abs(reference.midpoint_values[r] - value[r]);
  return err;
}

}  // namespace

std::vector<double> raw_element_errors(const TriMesh& mesh, const Solution& solution,
                                       const ReferenceSolution& reference) {
  return raw_errors_impl(mesh, solution, reference, true);
}

std::vector<double> raw_element_errors_serial(const TriMesh& mesh, const Solution& solution,
                                              const ReferenceSolution& reference) {
  return raw_errors_impl(mesh, solution, reference, false);
}

std::vector<double> normalize_errors(const std::vector<double>& raw, double initial_total) {
  if (!(initial_total > 1e-15))
    throw degenerate_problem_error("normalize_errors: vanishing initial error");
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = raw[i] / initial_total;
  return out;
}

ElementErrors element_errors(const TriMesh& mesh, const Solution& solution,
                             const ReferenceSolution& reference, double initial_total) {
  ElementErrors e;
  e.raw = raw_element_errors(mesh, solution, reference);
  e.normalized = normalize_errors(e.raw, initial_total);
  e.initial_total = initial_total;
  return e;
}

namespace {

double deviation_sum(const TriMesh& mesh, const Solution& solution,
                     const ReferenceSolution& reference, int exponent) {
  std::vector<Index> element;
  std::vector<double> value;
  assign_midpoints(mesh, solution, reference, element, value, true);
  double acc = 0.0;
  for (std::size_t r = 0; r < value.size(); ++r) {
    const double d = std::abs(reference.midpoint_values[r] - value[r]);
    acc += reference.areas[r] * (exponent == 2 ? d * d : d);
  }
  return acc;
}

double normalized_metric(const TriMesh& final_mesh, const Solution& final_solution,
                         const TriMesh& initial_mesh, const Solution& initial_solution,
                         const ReferenceSolution& reference, int exponent) {
  const double num = deviation_sum(final_mesh, final_solution, reference, exponent);
  const double den = deviation_sum(initial_mesh, initial_solution, reference, exponent);
  if (!(den > 0.0))
    throw degenerate_problem_error("normalized error: zero initial deviation");
  return num / den;
}

}  // namespace

double normalized_squared_error(const TriMesh& final_mesh, const Solution& final_solution,
                                const TriMesh& initial_mesh, const Solution& initial_solution,
                                const ReferenceSolution& reference) {
  return normalized_metric(final_mesh, final_solution, initial_mesh, initial_solution, reference,
                           2);
}

double normalized_linear_error(const TriMesh& final_mesh, const Solution& final_solution,
                               const TriMesh& initial_mesh, const Solution& initial_solution,
                               const ReferenceSolution& reference) {
  return normalized_metric(final_mesh, final_solution, initial_mesh, initial_solution, reference,
                           1);
}

}  // namespace amr
