#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "amrlab/env.hpp"
#include "amrlab/graphnet.hpp"

namespace amr {

enum class Method { asmr, shared, unscaled, vdqn, argmax, heuristic, uniform, random };

Method method_from_string(const std::string& name);
std::string method_name(Method m);
bool method_is_learned(Method m);

struct PpoConfig {
  PdeFamily family = PdeFamily::poisson;
  Method method = Method::asmr;
  double alpha = 0.05;

  int iterations = 500;
  int samples_per_iteration = 256;  // environment steps per iteration
  int epochs = 5;
  int batch_size = 32;  // environment steps per minibatch
  double learning_rate = 3.0e-4;
  double clip = 0.2;
  double value_coef = 0.5;
  double grad_norm_clip = 0.5;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  bool value_clipping = true;

  int episode_length = 4;  // argmax baseline sweeps {20, 60, 100}
  int reference_depth = 4;
  double max_element_diameter = 0.4;
  int checkpoint_every = 50;

  // Observation/network ablations.
  bool observe_solution = true;
  bool zero_global_features = false;
  bool global_messages = true;

  MpnConfig net_config() const;
  EnvConfig env_config() const;
  std::uint64_t hash() const;
};

/// Per-feature running mean/variance, kept separately for node, edge and
/// global features. Normalized observations are clipped to [-10, 10].
class RunningNormalizer {
 public:
  RunningNormalizer(int node_dim, int edge_dim, int global_dim);

  void update(const ObservationGraph& raw);
  ObservationGraph normalize(const ObservationGraph& raw) const;

  std::vector<std::pair<std::string, Tensor>> to_tensors() const;
  void from_tensors(const std::vector<std::pair<std::string, Tensor>>& tensors);

 private:
  struct Moments {
    Tensor mean, m2;  // [1, dim]
    double count = 0.0;

    explicit Moments(int dim) : mean(1, dim), m2(1, dim) {}
    void merge(const Tensor& rows);
    void apply(Tensor& rows) const;
  };

  Moments node_, edge_, global_;
  friend class NormalizerTestPeer;
};

struct Agent {
  PpoConfig config;
  MpnParameters policy;
  MpnParameters value;
  RunningNormalizer normalizer;
};

Agent make_agent(const PpoConfig& config, Rng& rng);

void save_agent(std::ostream& os, const Agent& agent);
Agent load_agent(std::istream& is, const PpoConfig& config);

/// Environment interface the rollout collector drives; MeshRefineEnv is the
/// production implementation, tests plug in toy dynamics.
class SwarmEnv {
 public:
  virtual ~SwarmEnv() = default;
  virtual ObservationGraph env_reset(Rng& rng) = 0;
  virtual StepResult env_step(const MarkVector& marks) = 0;
};

class MeshSwarmEnv : public SwarmEnv {
 public:
  explicit MeshSwarmEnv(const EnvConfig& config) : env_(config) {}
  ObservationGraph env_reset(Rng& rng) override { return env_.reset(rng); }
  StepResult env_step(const MarkVector& marks) override { return env_.step(marks); }
  MeshRefineEnv& env() { return env_; }

 private:
  MeshRefineEnv env_;
};

struct RolloutStep {
  ObservationGraph obs;  // normalized, as the policy saw it
  std::vector<std::uint8_t> actions;
  int action_index = -1;        // argmax variant: the marked element
  std::vector<double> logp;     // per agent (Bernoulli) or one entry (argmax)
  std::vector<double> rewards;  // reward stream: per agent or one entry
  std::vector<double> values;   // value stream, same length as rewards
  RefinementMap delta;          // stream lineage (identity for scalar streams)
  bool done = false;
};

struct RolloutBuffer {
  std::vector<RolloutStep> steps;
  std::vector<std::size_t> episode_starts;
  int discarded_episodes = 0;
  double mean_episode_return = 0.0;
  double mean_final_elements = 0.0;
};

/// Action selection from normalized observations. With `rng` the Bernoulli /
/// categorical distribution is sampled; without it actions are deterministic
/// (mark iff p >= 0.5; argmax with lowest-index ties).
struct SelectedActions {
  MarkVector marks;
  std::vector<std::uint8_t> actions;
  int action_index = -1;
  std::vector<double> logp;
};
SelectedActions select_actions(const ObservationGraph& obs, const Agent& agent, Rng* rng);

/// Value stream for the variant: per-agent values (asmr/unscaled), their sum
/// (vdqn), or the global head (shared/argmax).
std::vector<double> stream_values(const ObservationGraph& obs, const Agent& agent);

/// Runs full episodes until at least `n` environment steps are in the
/// buffer. Observations are normalized (and the normalizer updated) before
/// the policy sees them. Aborted episodes are discarded and resampled.
RolloutBuffer collect_rollouts(SwarmEnv& env, Agent& agent, int n, Rng& rng);

struct GaeResult {
  std::vector<std::vector<double>> advantages;     // per step, per stream agent
  std::vector<std::vector<double>> value_targets;  // advantage + value
};

/// Generalized advantage estimation along the refinement lineage: the
/// bootstrap of agent i sums the values of its children.
GaeResult per_agent_gae(const RolloutBuffer& buffer, double gamma, double lambda);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double grad_norm = 0.0;  // mean pre-clip norm
  int minibatches = 0;
  int skipped_minibatches = 0;  // non-finite loss
};

/// Adam state for one policy/value pair.
struct AdamState {
  GradientBuffer policy_m, policy_v, value_m, value_v;
  long long step = 0;

  explicit AdamState(const Agent& agent)
      : policy_m(agent.policy), policy_v(agent.policy), value_m(agent.value),
        value_v(agent.value) {}
};

UpdateStats ppo_update(const RolloutBuffer& buffer, const GaeResult& gae, Agent& agent,
                       AdamState& adam, Rng& rng);

struct IterationLog {
  int iteration = 0;
  double mean_episode_return = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double grad_norm = 0.0;
  double mean_final_elements = 0.0;
};

struct TrainResult {
  Agent agent;
  std::vector<IterationLog> log;
};

/// Full training run: collect / GAE / update for config.iterations rounds,
/// checkpointing every checkpoint_every iterations into out_dir (unless
/// empty). Deterministic in (config, seed).
TrainResult train(const PpoConfig& config, std::uint64_t seed,
                  const std::string& out_dir = "");

std::string training_log_csv(const std::vector<IterationLog>& log);

/// Oracle-error heuristic: mark element i iff err[i] > theta * max err.
MarkVector heuristic_policy(const std::vector<double>& normalized_errors, double theta);

}  // namespace amr
