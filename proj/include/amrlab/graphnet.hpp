#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "amrlab/observation.hpp"
#include "amrlab/rng.hpp"
#include "amrlab/tensor.hpp"

namespace amr {

class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MpnConfig {
  int node_dim = 5;
  int edge_dim = 1;
  int global_dim = 3;
  int latent = 32;
  int hidden = 32;
  int message_passing_steps = 2;

  // Observation ablations: zero the raw global inputs but keep the global
  // pathway, or drop the global stream entirely.
  bool zero_global_features = false;
  bool global_messages = true;

  std::uint64_t hash() const;
};

/// All learnable tensors of one network: linear embeddings, per-step
/// edge/node/global update MLPs with their layer norms, and the policy and
/// value heads. Tensors are stored in a fixed, named order.
struct MpnParameters {
  MpnConfig config;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  std::size_t count() const;  // total scalar parameter count
};

/// Same shapes as MpnParameters.tensors, used for gradients and moments.
struct GradientBuffer {
  std::vector<Tensor> tensors;

  explicit GradientBuffer(const MpnParameters& params);
  void zero();
  double squared_norm() const;
};

/// Uniform fan-in init: W ~ U(-sqrt(3/fan_in), sqrt(3/fan_in)) keeps unit
/// output variance for unit-variance inputs; biases zero, layer-norm gains 1.
MpnParameters init_parameters(Rng& rng, const MpnConfig& config);

/// Zero-valued tensors with the names/shapes the configuration dictates
/// (checkpoint loading target).
MpnParameters parameters_for(const MpnConfig& config);

/// Recorded forward pass. Latent ids index into the tape; `grads` may be
/// null for inference-only passes.
struct MpnForward {
  int node_latent = -1;    // [n_nodes, latent]
  int global_latent = -1;  // [1, latent]; -1 without global messages
};

MpnForward mpn_forward(Tape& tape, const ObservationGraph& graph, const MpnParameters& params,
                       GradientBuffer* grads = nullptr);

/// Per-node scalar logits parameterizing independent Bernoulli marks.
int policy_logits(Tape& tape, const MpnForward& fwd, const MpnParameters& params,
                  GradientBuffer* grads = nullptr);

enum class ValueMode { per_agent, global };

/// per_agent: the value head applied to each node latent -> [n, 1].
/// global: the same head applied to the global latent -> [1, 1] (falls back
/// to the mean node latent when global messages are disabled).
int value_estimates(Tape& tape, const MpnForward& fwd, const MpnParameters& params, ValueMode mode,
                    GradientBuffer* grads = nullptr);

/// Convenience inference helpers (no gradient tracking).
std::vector<double> eval_policy_logits(const ObservationGraph& graph,
                                       const MpnParameters& params);
std::vector<double> eval_values(const ObservationGraph& graph, const MpnParameters& params,
                                ValueMode mode);

/// "mpn-ckpt v1" tensor container: magic, config hash, then named tensors as
/// row-major 64-bit floats. Round trips are bit exact.
void write_tensors(std::ostream& os, std::uint64_t config_hash,
                   const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> read_tensors(std::istream& is,
                                                         std::uint64_t expected_hash);

}  // namespace amr
