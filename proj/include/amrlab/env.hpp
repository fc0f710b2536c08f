#pragma once

#include <optional>

#include "amrlab/error_metrics.hpp"
#include "amrlab/observation.hpp"
#include "amrlab/problems.hpp"

namespace amr {

class episode_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class RewardVariant {
  asmr,      // per-agent, error drop scaled by 1/area, minus alpha penalty
  unscaled,  // per-agent without the area scaling
  shared,    // sum of the unscaled rewards broadcast to every agent
};

struct EnvConfig {
  PdeFamily family = PdeFamily::poisson;
  int episode_length = 4;  // refinement steps per episode
  int reference_depth = 4;
  double alpha = 0.05;
  RewardVariant reward_variant = RewardVariant::asmr;
  /// Zeroes rewards of elements with singleton lineage. The literal reward
  /// leaves them slightly nonzero through global solve coupling.
  bool force_zero_unrefined = false;
  /// Observation ablation: drop the solution mean/std node features.
  bool observe_solution = true;
  double max_element_diameter = 0.4;
  bool swap_laplace_bc = false;
  int max_reset_attempts = 20;

  int node_dim() const { return observe_solution ? 5 : 3; }
  static constexpr int edge_dim() { return 1; }
  static constexpr int global_dim() { return 3; }
};

struct EpisodeState {
  PdeProblem problem;
  TriMesh mesh;
  Solution solution;
  ElementErrors errors;
  ReferenceSolution reference;
  int step = 0;
  double initial_total_error = 0.0;
};

struct StepResult {
  ObservationGraph observation;
  std::vector<double> rewards;  // indexed by pre-step elements
  RefinementMap delta;
  bool done = false;
};

/// Eq.-style per-element rewards. `pre`/`post` are normalized errors on the
/// meshes before/after the refinement, `delta` maps pre elements to their
/// children, `areas` are pre-step element areas.
std::vector<double> compute_rewards(const std::vector<double>& pre,
                                    const std::vector<double>& post, const RefinementMap& delta,
                                    const std::vector<double>& areas, double alpha,
                                    RewardVariant variant, bool force_zero_unrefined = false);

/// Discounted per-element returns along the refinement lineage:
/// J[t][i] = r[t][i] + gamma * sum over children j of J[t+1][j].
std::vector<std::vector<double>> lineage_returns(
    const std::vector<std::vector<double>>& rewards, const std::vector<RefinementMap>& deltas,
    double gamma);

/// Observation features (all Euclidean invariants):
///   node: [area, distance to boundary, solution mean, solution std,
///          family extra (Laplace: distance to the inner boundary,
///          Poisson: load at the midpoint)]
///   edge: midpoint distance. global: [elements, vertices, step].
/// Distances are measured against the mesh's tagged boundary edges.
ObservationGraph build_observation(const EpisodeState& state, const EnvConfig& config);

/// One refinement episode over a sampled PDE; elements act as agents.
class MeshRefineEnv {
 public:
  explicit MeshRefineEnv(EnvConfig config) : config_(std::move(config)) {}

  /// Samples a problem (resampling degenerate ones) and solves the initial
  /// and reference meshes.
  ObservationGraph reset(Rng& rng);
  /// Fixed-problem reset; throws degenerate_problem_error instead of
  /// resampling.
  ObservationGraph reset(const PdeProblem& problem);

  StepResult step(const MarkVector& marks);

  bool active() const { return state_.has_value(); }
  const EpisodeState& state() const;
  const EnvConfig& config() const { return config_; }

 private:
  ObservationGraph reset_with(const PdeProblem& problem);

  EnvConfig config_;
  std::optional<EpisodeState> state_;
};

}  // namespace amr
