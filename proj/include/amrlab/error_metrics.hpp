#pragma once

#include <functional>

#include "amrlab/fem.hpp"
#include "amrlab/mesh.hpp"
#include "amrlab/problems.hpp"

namespace amr {

class integration_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class degenerate_problem_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solution on the uniformly refined reference mesh, with the per-element
/// midpoints, areas and solution values cached, plus each midpoint's ancestor
/// element in the coarse root mesh (tracked through the refinement maps, so
/// the assignment needs no geometric tolerance).
struct ReferenceSolution {
  TriMesh mesh;
  Solution solution;
  std::vector<Vec2> midpoints;
  std::vector<double> areas;
  std::vector<double> midpoint_values;
  std::vector<Index> root_elements;
  int depth = 0;
};

using MeshSolver = std::function<Solution(const TriMesh&)>;

/// Builds the reference as `depth` uniform refinements of `initial`, solved
/// by `solver`.
ReferenceSolution make_reference(const TriMesh& initial, int depth, const MeshSolver& solver);
ReferenceSolution make_reference(const PdeProblem& problem, const TriMesh& initial, int depth);

/// Per-element error against the reference: for each reference midpoint p
/// inside element i, accumulate Area_ref * |u_ref(p) - u_mesh(p)|. Every
/// midpoint lands in exactly one element (lowest index on ties), so the
/// per-element values partition the total. Throws integration_error when a
/// midpoint cannot be located.
std::vector<double> raw_element_errors(const TriMesh& mesh, const Solution& solution,
                                       const ReferenceSolution& reference);
std::vector<double> raw_element_errors_serial(const TriMesh& mesh, const Solution& solution,
                                              const ReferenceSolution& reference);

struct ElementErrors {
  std::vector<double> raw;
  std::vector<double> normalized;
  double initial_total = 0.0;
};

/// Divides by the initial mesh's total error. Throws
/// degenerate_problem_error when that total is below 1e-15.
std::vector<double> normalize_errors(const std::vector<double>& raw, double initial_total);

ElementErrors element_errors(const TriMesh& mesh, const Solution& solution,
                             const ReferenceSolution& reference, double initial_total);

/// Area-weighted squared midpoint deviation of the final solution from the
/// reference, normalized by the initial mesh's deviation.
double normalized_squared_error(const TriMesh& final_mesh, const Solution& final_solution,
                                const TriMesh& initial_mesh, const Solution& initial_solution,
                                const ReferenceSolution& reference);

/// Same with absolute instead of squared differences.
double normalized_linear_error(const TriMesh& final_mesh, const Solution& final_solution,
                               const TriMesh& initial_mesh, const Solution& initial_solution,
                               const ReferenceSolution& reference);

}  // namespace amr
