#include "amrlab/graphnet.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <unordered_map>

namespace amr {

std::uint64_t MpnConfig::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](std::uint64_t x) {
    h ^= x;
    h *= 1099511628211ull;
  };
  mix(node_dim);
  mix(edge_dim);
  mix(global_dim);
  mix(latent);
  mix(hidden);
  mix(message_passing_steps);
  mix(zero_global_features ? 1 : 2);
  mix(global_messages ? 1 : 2);
  return h;
}

namespace {

void add_linear(MpnParameters& p, const std::string& prefix, int in, int out) {
  p.tensors.emplace_back(prefix + "/W", Tensor(in, out));
  p.tensors.emplace_back(prefix + "/b", Tensor(1, out));
}

void add_mlp(MpnParameters& p, const std::string& prefix, int in, int hidden, int out) {
  add_linear(p, prefix + "/l0", in, hidden);
  add_linear(p, prefix + "/l1", hidden, hidden);
  add_linear(p, prefix + "/l2", hidden, out);
}

void add_layer_norm(MpnParameters& p, const std::string& prefix, int width) {
  p.tensors.emplace_back(prefix + "/gamma", Tensor(1, width));
  p.tensors.emplace_back(prefix + "/beta", Tensor(1, width));
}

MpnParameters parameter_shapes(const MpnConfig& c) {
  MpnParameters p;
  p.config = c;
  const int L = c.latent;
  add_linear(p, "embed/node", c.node_dim, L);
  add_linear(p, "embed/edge", c.edge_dim, L);
  if (c.global_messages) add_linear(p, "embed/global", c.global_dim, L);
  const int g = c.global_messages ? L : 0;
  for (int l = 0; l < c.message_passing_steps; ++l) {
    const std::string step = "step" + std::to_string(l);
    add_mlp(p, step + "/edge", 3 * L + g, c.hidden, L);
    add_layer_norm(p, step + "/edge/ln", L);
    add_mlp(p, step + "/node", 2 * L + g, c.hidden, L);
    add_layer_norm(p, step + "/node/ln", L);
    if (c.global_messages) {
      add_mlp(p, step + "/global", 3 * L, c.hidden, L);
      add_layer_norm(p, step + "/global/ln", L);
    }
  }
  add_mlp(p, "head/policy", L, c.hidden, 1);
  add_mlp(p, "head/value", L, c.hidden, 1);
  return p;
}

}  // namespace

const Tensor& MpnParameters::get(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw config_error("MpnParameters: no tensor named " + name);
}

Tensor& MpnParameters::get(const std::string& name) {
  for (auto& [n, t] : tensors)
    if (n == name) return t;
  throw config_error("MpnParameters: no tensor named " + name);
}

std::size_t MpnParameters::count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors) n += t.size();
  return n;
}

GradientBuffer::GradientBuffer(const MpnParameters& params) {
  tensors.reserve(params.tensors.size());
  for (const auto& [name, t] : params.tensors) tensors.emplace_back(t.rows, t.cols);
}

void GradientBuffer::zero() {
  for (Tensor& t : tensors) std::fill(t.v.begin(), t.v.end(), 0.0);
}

double GradientBuffer::squared_norm() const {
  double acc = 0.0;
  for (const Tensor& t : tensors)
    for (double v : t.v) acc += v * v;
  return acc;
}

MpnParameters init_parameters(Rng& rng, const MpnConfig& config) {
  MpnParameters p = parameter_shapes(config);
  for (auto& [name, t] : p.tensors) {
    if (name.ends_with("/W")) {
      const double bound = std::sqrt(3.0 / t.rows);
      for (double& v : t.v) v = rng.uniform(-bound, bound);
    } else if (name.ends_with("/gamma")) {
      std::fill(t.v.begin(), t.v.end(), 1.0);
    }  // biases and betas stay zero
  }
  return p;
}

namespace {

/// Parameter nodes registered on a tape, addressable by name.
struct BoundParams {
  const MpnParameters& params;
  std::vector<int> ids;

  BoundParams(Tape& tape, const MpnParameters& p, GradientBuffer* grads) : params(p) {
    ids.reserve(p.tensors.size());
    for (std::size_t i = 0; i < p.tensors.size(); ++i)
      ids.push_back(tape.param(&p.tensors[i].second, grads ? &grads->tensors[i] : nullptr));
  }

  int operator()(const std::string& name) const {
    for (std::size_t i = 0; i < params.tensors.size(); ++i)
      if (params.tensors[i].first == name) return ids[i];
    throw config_error("forward: no tensor named " + name);
  }
};

int mlp(Tape& t, const BoundParams& bp, const std::string& prefix, int x) {
  int h = t.tanh(t.linear(x, bp(prefix + "/l0/W"), bp(prefix + "/l0/b")));
  h = t.tanh(t.linear(h, bp(prefix + "/l1/W"), bp(prefix + "/l1/b")));
  return t.linear(h, bp(prefix + "/l2/W"), bp(prefix + "/l2/b"));
}

int residual_norm(Tape& t, const BoundParams& bp, const std::string& ln_prefix, int x,
                  int update) {
  return t.layer_norm(t.add(x, update), bp(ln_prefix + "/gamma"), bp(ln_prefix + "/beta"));
}

}  // namespace

MpnForward mpn_forward(Tape& tape, const ObservationGraph& graph, const MpnParameters& params,
                       GradientBuffer* grads) {
  const MpnConfig& c = params.config;
  if (graph.node_features.cols != c.node_dim || graph.edge_features.cols != c.edge_dim ||
      graph.global_features.cols != c.global_dim)
    throw config_error("mpn_forward: feature dimensions do not match the configuration");
  if (graph.senders.size() != graph.receivers.size() ||
      static_cast<int>(graph.senders.size()) != graph.n_edges())
    throw config_error("mpn_forward: edge list inconsistent with edge features");

  const int N = graph.n_nodes();
  const int E = graph.n_edges();
  BoundParams bp(tape, params, grads);

  int x_v = tape.linear(tape.constant(graph.node_features), bp("embed/node/W"),
                        bp("embed/node/b"));
  int x_e = tape.linear(tape.constant(graph.edge_features), bp("embed/edge/W"),
                        bp("embed/edge/b"));
  int x_g = -1;
  if (c.global_messages) {
    Tensor raw = graph.global_features;
    if (c.zero_global_features) std::fill(raw.v.begin(), raw.v.end(), 0.0);
    x_g = tape.linear(tape.constant(std::move(raw)), bp("embed/global/W"), bp("embed/global/b"));
  }

  const std::vector<int> zeros_e(E, 0), zeros_n(N, 0);
  for (int l = 0; l < c.message_passing_steps; ++l) {
    const std::string step = "step" + std::to_string(l);

    std::vector<int> edge_in{tape.gather_rows(x_v, graph.receivers, E),
                             tape.gather_rows(x_v, graph.senders, E), x_e};
    if (x_g >= 0) edge_in.push_back(tape.gather_rows(x_g, zeros_e, E));
    const int e_new = mlp(tape, bp, step + "/edge", tape.concat(edge_in));
    x_e = residual_norm(tape, bp, step + "/edge/ln", x_e, e_new);

    std::vector<int> node_in{x_v, tape.segment_mean(x_e, graph.receivers, N)};
    if (x_g >= 0) node_in.push_back(tape.gather_rows(x_g, zeros_n, N));
    const int v_new = mlp(tape, bp, step + "/node", tape.concat(node_in));
    x_v = residual_norm(tape, bp, step + "/node/ln", x_v, v_new);

    if (x_g >= 0) {
      const int g_in = tape.concat({tape.segment_mean(x_v, zeros_n, 1),
                                    tape.segment_mean(x_e, zeros_e, 1), x_g});
      const int g_new = mlp(tape, bp, step + "/global", g_in);
      x_g = residual_norm(tape, bp, step + "/global/ln", x_g, g_new);
    }
  }
  return {x_v, x_g};
}

int policy_logits(Tape& tape, const MpnForward& fwd, const MpnParameters& params,
                  GradientBuffer* grads) {
  BoundParams bp(tape, params, grads);
  return mlp(tape, bp, "head/policy", fwd.node_latent);
}

int value_estimates(Tape& tape, const MpnForward& fwd, const MpnParameters& params,
                    ValueMode mode, GradientBuffer* grads) {
  BoundParams bp(tape, params, grads);
  if (mode == ValueMode::per_agent) return mlp(tape, bp, "head/value", fwd.node_latent);
  int input = fwd.global_latent;
  if (input < 0) {
    const int n = tape.value(fwd.node_latent).rows;
    input = tape.segment_mean(fwd.node_latent, std::vector<int>(n, 0), 1);
  }
  return mlp(tape, bp, "head/value", input);
}

std::vector<double> eval_policy_logits(const ObservationGraph& graph,
                                       const MpnParameters& params) {
  Tape tape;
  const MpnForward fwd = mpn_forward(tape, graph, params);
  const int out = policy_logits(tape, fwd, params);
  return tape.value(out).v;
}

std::vector<double> eval_values(const ObservationGraph& graph, const MpnParameters& params,
                                ValueMode mode) {
  Tape tape;
  const MpnForward fwd = mpn_forward(tape, graph, params);
  const int out = value_estimates(tape, fwd, params, mode);
  return tape.value(out).v;
}

namespace {
constexpr char kMagic[] = "mpn-ckpt v1\n";
}

void write_tensors(std::ostream& os, std::uint64_t config_hash,
                   const std::vector<std::pair<std::string, Tensor>>& tensors) {
  os.write(kMagic, sizeof kMagic - 1);
  os.write(reinterpret_cast<const char*>(&config_hash), sizeof config_hash);
  const std::uint32_t count = static_cast<std::uint32_t>(tensors.size());
  os.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (const auto& [name, t] : tensors) {
    const std::uint32_t len = static_cast<std::uint32_t>(name.size());
    os.write(reinterpret_cast<const char*>(&len), sizeof len);
    os.write(name.data(), len);
    const std::int32_t rows = t.rows, cols = t.cols;
    os.write(reinterpret_cast<const char*>(&rows), sizeof rows);
    os.write(reinterpret_cast<const char*>(&cols), sizeof cols);
    os.write(reinterpret_cast<const char*>(t.v.data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
}

std::vector<std::pair<std::string, Tensor>> read_tensors(std::istream& is,
                                                         std::uint64_t expected_hash) {
  char magic[sizeof kMagic - 1];
  is.read(magic, sizeof magic);
  if (!is || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw config_error("checkpoint: bad magic");
  std::uint64_t hash = 0;
  std::uint32_t count = 0;
  is.read(reinterpret_cast<char*>(&hash), sizeof hash);
  is.read(reinterpret_cast<char*>(&count), sizeof count);
  if (expected_hash != 0 && hash != expected_hash)
    throw config_error("checkpoint: configuration hash mismatch");

  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t len = 0;
    is.read(reinterpret_cast<char*>(&len), sizeof len);
    std::string name(len, '\0');
    is.read(name.data(), len);
    std::int32_t rows = 0, cols = 0;
    is.read(reinterpret_cast<char*>(&rows), sizeof rows);
    is.read(reinterpret_cast<char*>(&cols), sizeof cols);
    Tensor t(rows, cols);
    is.read(reinterpret_cast<char*>(t.v.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!is) throw config_error("checkpoint: truncated tensor data");
    out.emplace_back(std::move(name), std::move(t));
  }
  return out;
}

/// Zero-valued tensors with the names/shapes the configuration dictates.
MpnParameters parameters_for(const MpnConfig& config) { return parameter_shapes(config); }

}  // namespace amr
