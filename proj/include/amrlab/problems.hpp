#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <vector>

#include "amrlab/geometry.hpp"
#include "amrlab/rng.hpp"

namespace amr {

class sampling_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class invalid_problem_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GmmComponent {
  Vec2 mean;
  // Symmetric positive-definite covariance (xx, xy, yy).
  double cov_xx = 1.0, cov_xy = 0.0, cov_yy = 1.0;
  double weight = 1.0;
};

/// Mixture of bivariate normals; the load f(x) is the weighted density sum.
struct GmmLoad {
  std::vector<GmmComponent> components;

  double density(Vec2 p) const;
};

enum class PdeFamily { laplace, poisson };

/// A sampled PDE instance. Laplace problems carry no load and a two-valued
/// boundary condition; Poisson problems carry a GMM load and zero boundary.
struct PdeProblem {
  DomainGeometry geometry;
  std::optional<GmmLoad> load;
  std::map<BoundaryTag, double> bc;
  std::uint64_t seed = 0;

  PdeFamily family() const { return load ? PdeFamily::poisson : PdeFamily::laplace; }
};

/// Unit square with a uniformly sampled rectangular hole; u = 0 on the outer
/// square and u = 1 on the hole boundary (swap via `swap_bc`).
PdeProblem sample_laplace(Rng& rng, bool swap_bc = false);
PdeProblem sample_laplace(std::uint64_t seed, bool swap_bc = false);

/// L-shaped domain with a 3-component GMM load and zero boundary values.
/// Means are rejection-sampled into the domain (capped at 1e4 attempts).
PdeProblem sample_poisson(Rng& rng);
PdeProblem sample_poisson(std::uint64_t seed);

/// Load value at p; only valid for Poisson problems.
double eval_load(const PdeProblem& problem, Vec2 p);

/// Deterministic fixed evaluation suite: n problems derived from `seed` by
/// stream splitting, identical across runs and processes.
std::vector<PdeProblem> sample_eval_suite(PdeFamily family, std::uint64_t seed, int n = 100);

/// Text serialization with hex-float fields; round trips are bit exact.
void write_problem(std::ostream& os, const PdeProblem& p);
std::string problem_to_string(const PdeProblem& p);
PdeProblem read_problem(std::istream& is);

}  // namespace amr
