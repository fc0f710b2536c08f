#pragma once

#include <functional>
#include <vector>

#include "amrlab/mesh.hpp"
#include "amrlab/problems.hpp"

namespace amr {

class assembly_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class evaluation_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class solver_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Symmetric sparse system in compressed-row layout, one unknown per mesh
/// vertex. After apply_dirichlet the constrained unknowns have identity rows
/// and their indices/values are recorded so solutions carry them exactly.
struct SparseSystem {
  std::vector<std::size_t> row_offsets;
  std::vector<Index> col_indices;
  std::vector<double> values;
  std::vector<double> rhs;

  std::vector<Index> constrained;
  std::vector<double> constrained_values;

  std::size_t n() const { return row_offsets.empty() ? 0 : row_offsets.size() - 1; }
  double entry(Index row, Index col) const;
  void multiply(const std::vector<double>& x, std::vector<double>& y) const;
};

/// P1 coefficients, one value per mesh vertex.
struct Solution {
  std::vector<double> values;
};

struct DirichletBC {
  std::vector<Index> indices;
  std::vector<double> values;
};

using ScalarField = std::function<double(Vec2)>;

/// Stiffness matrix of the Laplace bilinear form; rhs zero. P1 gradients are
/// constant per element, so entries are exact. Throws assembly_error on
/// elements with area < 1e-14.
SparseSystem assemble_stiffness(const TriMesh& mesh);

/// Per-vertex load vector by the 3-point edge-midpoint rule (exact for
/// quadratics). Throws evaluation_error when f returns a non-finite value.
std::vector<double> assemble_load(const TriMesh& mesh, const ScalarField& f);

/// Symmetric elimination of the constrained unknowns: their rows/columns are
/// zeroed (diagonal 1), the rhs absorbs the coupling. Duplicate or invalid
/// indices throw.
SparseSystem apply_dirichlet(const SparseSystem& system, const DirichletBC& bc);

/// Jacobi-preconditioned conjugate gradients to relative residual <= tol.
/// Constrained values are written back exactly. Throws solver_error when the
/// iteration cap is reached, reporting the residual.
Solution solve(const SparseSystem& system, double tol = 1e-10);

/// Dirichlet data for a problem on a mesh: boundary vertices take the value
/// of their tag in problem.bc.
DirichletBC boundary_conditions(const PdeProblem& problem, const TriMesh& mesh);

/// Assembles and solves the problem's weak form (Laplace: zero load,
/// two-valued boundary; Poisson: GMM load, zero boundary).
Solution solve_problem(const PdeProblem& problem, const TriMesh& mesh);

/// P1 interpolation at p (barycentric combination in the containing element).
double interpolate(const TriMesh& mesh, const Solution& solution, Vec2 p);

/// x^T K x for an (unconstrained) stiffness matrix.
double energy_norm_squared(const SparseSystem& stiffness, const std::vector<double>& x);

}  // namespace amr
