#include "amrlab/env.hpp"

#include <cmath>

namespace amr {

std::vector<double> compute_rewards(const std::vector<double>& pre,
                                    const std::vector<double>& post, const RefinementMap& delta,
                                    const std::vector<double>& areas, double alpha,
                                    RewardVariant variant, bool force_zero_unrefined) {
  if (delta.children.size() != pre.size() || areas.size() != pre.size())
    throw std::invalid_argument("compute_rewards: size mismatch");
  const std::size_t n = pre.size();
  std::vector<double> out(n);
  double shared_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& kids = delta.children[i];
    double drop = pre[i];
    for (Index j : kids) drop -= post[j];
    const double penalty = alpha * (static_cast<double>(kids.size()) - 1.0);
    const double unscaled = drop - penalty;
    const bool zeroed = force_zero_unrefined && kids.size() == 1;
    out[i] = zeroed ? 0.0
                    : (variant == RewardVariant::asmr ? drop / areas[i] - penalty : unscaled);
    if (!zeroed) shared_sum += unscaled;
  }
  if (variant == RewardVariant::shared) out.assign(n, shared_sum);
  return out;
}

std::vector<std::vector<double>> lineage_returns(
    const std::vector<std::vector<double>>& rewards, const std::vector<RefinementMap>& deltas,
    double gamma) {
  if (deltas.size() != rewards.size())
    throw std::invalid_argument("lineage_returns: rewards/deltas length mismatch");
  const int T = static_cast<int>(rewards.size());
  std::vector<std::vector<double>> J(T);
  for (int t = T - 1; t >= 0; --t) {
    const std::size_t n = rewards[t].size();
    if (deltas[t].children.size() != n)
      throw std::invalid_argument("lineage_returns: delta size mismatch at step " +
                                  std::to_string(t));
    J[t].resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double acc = rewards[t][i];
      if (t + 1 < T)
        for (Index j : deltas[t].children[i]) acc += gamma * J[t + 1][j];
      J[t][i] = acc;
    }
  }
  return J;
}

namespace {

double distance_to_edges(const TriMesh& mesh, Vec2 p, bool inner_only) {
  double best = std::numeric_limits<double>::infinity();
  for (const BoundaryEdge& be : mesh.boundary_edges()) {
    if (inner_only && be.tag != BoundaryTag::inner) continue;
    best = std::min(best, point_segment_distance(p, {mesh.vertex(be.a), mesh.vertex(be.b)}));
  }
  return std::isfinite(best) ? best : 0.0;
}

}  // namespace

ObservationGraph build_observation(const EpisodeState& state, const EnvConfig& config) {
  const TriMesh& mesh = state.mesh;
  const int n = static_cast<int>(mesh.n_elements());
  const bool poisson = state.problem.family() == PdeFamily::poisson;

  ObservationGraph g;
  g.node_features = Tensor(n, config.node_dim());
  for (int e = 0; e < n; ++e) {
    const Vec2 mid = mesh.element_midpoint(e);
    double* row = g.node_features.row(e);
    int k = 0;
    row[k++] = mesh.element_area(e);
    row[k++] = distance_to_edges(mesh, mid, false);
    if (config.observe_solution) {
      const auto& v = mesh.elements()[e].v;
      const double a = state.solution.values[v[0]];
      const double b = state.solution.values[v[1]];
      const double c = state.solution.values[v[2]];
      const double mean = (a + b + c) / 3.0;
      const double var =
          ((a - mean) * (a - mean) + (b - mean) * (b - mean) + (c - mean) * (c - mean)) / 3.0;
      row[k++] = mean;
      row[k++] = std::sqrt(var);
    }
    row[k++] = poisson ? eval_load(state.problem, mid) : distance_to_edges(mesh, mid, true);
  }

  const auto adjacency = element_adjacency(mesh);
  g.edge_features = Tensor(static_cast<int>(adjacency.size()), EnvConfig::edge_dim());
  g.senders.reserve(adjacency.size());
  g.receivers.reserve(adjacency.size());
  for (std::size_t k = 0; k < adjacency.size(); ++k) {
    const auto [i, j] = adjacency[k];
    g.senders.push_back(static_cast<int>(i));
    g.receivers.push_back(static_cast<int>(j));
    g.edge_features.v[k] = distance(mesh.element_midpoint(i), mesh.element_midpoint(j));
  }

  g.global_features = Tensor(1, EnvConfig::global_dim());
  g.global_features.v = {static_cast<double>(mesh.n_elements()),
                         static_cast<double>(mesh.n_vertices()),
                         static_cast<double>(state.step)};
  return g;
}

ObservationGraph MeshRefineEnv::reset_with(const PdeProblem& problem) {
  EpisodeState s;
  s.problem = problem;
  s.mesh = build_initial_mesh(problem.geometry, config_.max_element_diameter);
  s.reference = make_reference(problem, s.mesh, config_.reference_depth);
  s.solution = solve_problem(problem, s.mesh);
  const auto raw = raw_element_errors(s.mesh, s.solution, s.reference);
  double total = 0.0;
  for (double e : raw) total += e;
  s.errors.raw = raw;
  s.errors.normalized = normalize_errors(raw, total);  // throws when degenerate
  s.errors.initial_total = total;
  s.initial_total_error = total;
  s.step = 0;
  state_ = std::move(s);
  return build_observation(*state_, config_);
}

ObservationGraph MeshRefineEnv::reset(Rng& rng) {
  for (int attempt = 0; attempt < config_.max_reset_attempts; ++attempt) {
    const PdeProblem problem = config_.family == PdeFamily::laplace
                                   ? sample_laplace(rng, config_.swap_laplace_bc)
                                   : sample_poisson(rng);
    try {
      return reset_with(problem);
    } catch (const degenerate_problem_error&) {
      continue;
    }
  }
  throw episode_error("reset: no valid problem after bounded retries");
}

ObservationGraph MeshRefineEnv::reset(const PdeProblem& problem) { return reset_with(problem); }

const EpisodeState& MeshRefineEnv::state() const {
  if (!state_) throw episode_error("environment has no active episode");
  return *state_;
}

StepResult MeshRefineEnv::step(const MarkVector& marks) {
  if (!state_) throw episode_error("step before reset");
  EpisodeState& s = *state_;
  if (s.step >= config_.episode_length) throw episode_error("step past the episode end");

  const std::vector<double> pre = s.errors.normalized;
  std::vector<double> areas(s.mesh.n_elements());
  for (Index e = 0; e < s.mesh.n_elements(); ++e) areas[e] = s.mesh.element_area(e);

  auto [fine, delta] = refine(s.mesh, marks);
  Solution solution;
  ElementErrors errors;
  try {
    solution = solve_problem(s.problem, fine);
    errors.raw = raw_element_errors(fine, solution, s.reference);
    errors.normalized = normalize_errors(errors.raw, s.initial_total_error);
    errors.initial_total = s.initial_total_error;
  } catch (const std::runtime_error& err) {
    state_.reset();
    throw episode_error(std::string("episode aborted: ") + err.what());
  }

  StepResult out;
  out.rewards = compute_rewards(pre, errors.normalized, delta, areas, config_.alpha,
                                config_.reward_variant, config_.force_zero_unrefined);
  out.delta = delta;

  s.mesh = std::move(fine);
  s.solution = std::move(solution);
  s.errors = std::move(errors);
  s.step += 1;
  out.done = s.step >= config_.episode_length;
  out.observation = build_observation(s, config_);
  return out;
}

}  // namespace amr
