#include <cmath>
#include <numeric>
#include <sstream>

#include "amrlab/graphnet.hpp"
#include "doctest.h"

using namespace amr;

namespace {

ObservationGraph random_graph(Rng& rng, int n_nodes, const MpnConfig& c, bool with_edges = true) {
  ObservationGraph g;
  g.node_features = Tensor(n_nodes, c.node_dim);
  for (double& v : g.node_features.v) v = rng.uniform(-1.0, 1.0);
  if (with_edges && n_nodes > 1) {
    for (int i = 0; i < n_nodes; ++i) {
      const int j = (i + 1) % n_nodes;
      g.senders.push_back(i);
      g.receivers.push_back(j);
      g.senders.push_back(j);
      g.receivers.push_back(i);
    }
  }
  g.edge_features = Tensor(static_cast<int>(g.senders.size()), c.edge_dim);
  for (double& v : g.edge_features.v) v = rng.uniform(0.0, 1.0);
  g.global_features = Tensor(1, c.global_dim);
  for (double& v : g.global_features.v) v = rng.uniform(-1.0, 1.0);
  return g;
}

MpnConfig small_config() {
  MpnConfig c;
  c.node_dim = 4;
  c.edge_dim = 1;
  c.global_dim = 3;
  c.latent = 8;
  c.hidden = 8;
  return c;
}

// Scalar test loss touching both heads and the trunk.
double loss_value(const ObservationGraph& g, const MpnParameters& p, GradientBuffer* grads) {
  Tape tape;
  const MpnForward fwd = mpn_forward(tape, g, p, grads);
  const int logits = policy_logits(tape, fwd, p, grads);
  const int values = value_estimates(tape, fwd, p, ValueMode::per_agent, grads);
  const int vglob = value_estimates(tape, fwd, p, ValueMode::global, grads);
  int loss = tape.add(tape.mean_all(tape.square(logits)), tape.mean_all(tape.square(values)));
  loss = tape.add(loss, tape.mean_all(tape.square(vglob)));
  const double out = tape.value(loss).v[0];
  if (grads) tape.backward(loss);
  return out;
}

}  // namespace

TEST_CASE("parameter count matches the closed form") {
  MpnConfig c = small_config();
  c.latent = 32;
  c.hidden = 32;
  Rng rng(1);
  const MpnParameters p = init_parameters(rng, c);

  const int L = 32, H = 32;
  auto linear = [](int in, int out) { return in * out + out; };
  auto mlp = [&](int in, int out) { return linear(in, H) + linear(H, H) + linear(H, out); };
  const int embed = linear(4, L) + linear(1, L) + linear(3, L);
  const int per_step = mlp(4 * L, L) + 2 * L   // edge + layer norm
                     + mlp(3 * L, L) + 2 * L   // node + layer norm
                     + mlp(3 * L, L) + 2 * L;  // global + layer norm
  const int heads = 2 * mlp(L, 1);
  CHECK(p.count() == static_cast<std::size_t>(embed + 2 * per_step + heads));
  CHECK(p.count() == 38370);
}

TEST_CASE("init is deterministic and keeps unit variance") {
  const MpnConfig c = small_config();
  Rng a(7), b(7);
  const MpnParameters pa = init_parameters(a, c);
  const MpnParameters pb = init_parameters(b, c);
  for (std::size_t i = 0; i < pa.tensors.size(); ++i)
    CHECK(pa.tensors[i].second.v == pb.tensors[i].second.v);

  // Empirical output variance of one initialized linear layer on
  // unit-variance input.
  Rng rng(11);
  const Tensor& W = pa.get("step0/node/l1/W");
  double acc = 0.0, acc2 = 0.0;
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) {
    std::vector<double> x(W.rows);
    for (double& v : x) v = rng.normal();
    const int o = static_cast<int>(rng.next_below(W.cols));
    double y = 0.0;
    for (int k = 0; k < W.rows; ++k) y += x[k] * W.at(k, o);
    acc += y;
    acc2 += y * y;
  }
  const double var = acc2 / draws - (acc / draws) * (acc / draws);
  CHECK(var > 0.5);
  CHECK(var < 2.0);
}

TEST_CASE("forward handles graphs without edges and duplicate nodes") {
  const MpnConfig c = small_config();
  Rng rng(3);
  const MpnParameters p = init_parameters(rng, c);

  SUBCASE("isolated node") {
    ObservationGraph g = random_graph(rng, 1, c, false);
    Tape tape;
    const MpnForward fwd = mpn_forward(tape, g, p);
    for (double v : tape.value(fwd.node_latent).v) CHECK(std::isfinite(v));
    const auto logits = eval_policy_logits(g, p);
    REQUIRE(logits.size() == 1);
    CHECK(std::isfinite(logits[0]));
  }
  SUBCASE("two identical nodes produce identical latents") {
    ObservationGraph g;
    g.node_features = Tensor(2, c.node_dim);
    for (int k = 0; k < c.node_dim; ++k)
      g.node_features.at(0, k) = g.node_features.at(1, k) = 0.3 * (k + 1);
    g.senders = {0, 1};
    g.receivers = {1, 0};
    g.edge_features = Tensor(2, c.edge_dim);
    g.edge_features.at(0, 0) = g.edge_features.at(1, 0) = 0.5;
    g.global_features = Tensor(1, c.global_dim);
    Tape tape;
    const MpnForward fwd = mpn_forward(tape, g, p);
    const Tensor& latent = tape.value(fwd.node_latent);
    for (int k = 0; k < c.latent; ++k)
      CHECK(latent.at(0, k) == doctest::Approx(latent.at(1, k)).epsilon(1e-12));
  }
  SUBCASE("dimension mismatch raises config_error") {
    ObservationGraph g = random_graph(rng, 3, c);
    g.global_features = Tensor(1, c.global_dim + 1);
    Tape tape;
    CHECK_THROWS_AS(mpn_forward(tape, g, p), config_error);
  }
}

TEST_CASE("permutation equivariance is exact") {
  const MpnConfig c = small_config();
  Rng rng(5);
  const MpnParameters p = init_parameters(rng, c);
  const ObservationGraph g = random_graph(rng, 6, c);

  // Relabel nodes with a permutation and shuffle edge order.
  const std::vector<int> perm{3, 0, 5, 1, 4, 2};
  std::vector<int> edge_order(g.n_edges());
  std::iota(edge_order.begin(), edge_order.end(), 0);
  for (std::size_t i = 0; i < edge_order.size(); ++i)
    std::swap(edge_order[i], edge_order[rng.next_below(edge_order.size())]);

  ObservationGraph h;
  h.node_features = Tensor(g.n_nodes(), c.node_dim);
  for (int i = 0; i < g.n_nodes(); ++i)
    for (int k = 0; k < c.node_dim; ++k) h.node_features.at(perm[i], k) = g.node_features.at(i, k);
  h.edge_features = Tensor(g.n_edges(), c.edge_dim);
  for (int e = 0; e < g.n_edges(); ++e) {
    const int src = edge_order[e];
    h.senders.push_back(perm[g.senders[src]]);
    h.receivers.push_back(perm[g.receivers[src]]);
    for (int k = 0; k < c.edge_dim; ++k) h.edge_features.at(e, k) = g.edge_features.at(src, k);
  }
  h.global_features = g.global_features;

  const auto logits_g = eval_policy_logits(g, p);
  const auto logits_h = eval_policy_logits(h, p);
  for (int i = 0; i < g.n_nodes(); ++i) CHECK(logits_h[perm[i]] == logits_g[i]);

  const auto vals_g = eval_values(g, p, ValueMode::global);
  const auto vals_h = eval_values(h, p, ValueMode::global);
  CHECK(vals_g[0] == vals_h[0]);
}

TEST_CASE("backward: analytic cases") {
  const MpnConfig c = small_config();
  Rng rng(9);
  MpnParameters p = init_parameters(rng, c);

  SUBCASE("loss = sum(p^2)/2 has gradient p") {
    GradientBuffer grads(p);
    Tape tape;
    int loss = -1;
    for (std::size_t i = 0; i < p.tensors.size(); ++i) {
      const int id = tape.param(&p.tensors[i].second, &grads.tensors[i]);
      const int term = tape.sum_all(tape.square(id));
      loss = loss < 0 ? term : tape.add(loss, term);
    }
    loss = tape.scale(loss, 0.5);
    tape.backward(loss);
    for (std::size_t i = 0; i < p.tensors.size(); ++i)
      for (std::size_t k = 0; k < grads.tensors[i].size(); ++k)
        CHECK(grads.tensors[i].v[k] == p.tensors[i].second.v[k]);
  }
  SUBCASE("zero loss gives zero gradients") {
    GradientBuffer grads(p);
    const ObservationGraph g = random_graph(rng, 4, c);
    Tape tape;
    const MpnForward fwd = mpn_forward(tape, g, p, &grads);
    const int logits = policy_logits(tape, fwd, p, &grads);
    tape.backward(tape.scale(tape.mean_all(logits), 0.0));
    CHECK(grads.squared_norm() == 0.0);
  }
  SUBCASE("unrecorded loss raises") {
    Tape tape;
    const int c1 = tape.constant(Tensor(1, 1));
    CHECK_THROWS_AS(tape.backward(c1), gradient_error);
  }
}

TEST_CASE("gradients match central finite differences") {
  const MpnConfig c = small_config();
  for (std::uint64_t seed : {1ull, 2ull}) {
    Rng rng(seed);
    MpnParameters p = init_parameters(rng, c);
    const ObservationGraph g = random_graph(rng, 5, c);

    GradientBuffer grads(p);
    loss_value(g, p, &grads);

    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t i = 0; i < p.tensors.size(); ++i) {
      Tensor& t = p.tensors[i].second;
      for (std::size_t k = 0; k < t.size(); ++k) {
        const double keep = t.v[k];
        t.v[k] = keep + h;
        const double up = loss_value(g, p, nullptr);
        t.v[k] = keep - h;
        const double dn = loss_value(g, p, nullptr);
        t.v[k] = keep;
        const double fd = (up - dn) / (2.0 * h);
        const double ad = grads.tensors[i].v[k];
        const double rel = std::abs(ad - fd) / std::max({1e-4, std::abs(ad), std::abs(fd)});
        worst = std::max(worst, rel);
      }
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("ablation variants change the wiring") {
  Rng rng(13);
  SUBCASE("zeroed global features still run the global pathway") {
    MpnConfig c = small_config();
    c.zero_global_features = true;
    const MpnParameters p = init_parameters(rng, c);
    const ObservationGraph g = random_graph(rng, 4, c);
    ObservationGraph g2 = g;
    for (double& v : g2.global_features.v) v += 5.0;  // must not matter
    CHECK(eval_policy_logits(g, p) == eval_policy_logits(g2, p));
  }
  SUBCASE("no global messages removes the global parameters") {
    MpnConfig c = small_config();
    c.global_messages = false;
    const MpnParameters p = init_parameters(rng, c);
    CHECK_THROWS_AS(p.get("step0/global/l0/W"), config_error);
    const ObservationGraph g = random_graph(rng, 4, c);
    Tape tape;
    const MpnForward fwd = mpn_forward(tape, g, p);
    CHECK(fwd.global_latent == -1);
    // Global value mode falls back to the mean node latent.
    const auto v = eval_values(g, p, ValueMode::global);
    REQUIRE(v.size() == 1);
    CHECK(std::isfinite(v[0]));
  }
}

TEST_CASE("zeroed heads give zero logits") {
  MpnConfig c = small_config();
  Rng rng(17);
  MpnParameters p = init_parameters(rng, c);
  for (auto& [name, t] : p.tensors)
    if (name.starts_with("head/policy")) std::fill(t.v.begin(), t.v.end(), 0.0);
  const ObservationGraph g = random_graph(rng, 3, c);
  for (double logit : eval_policy_logits(g, p)) CHECK(logit == 0.0);
}

TEST_CASE("checkpoint container round trips bit-exactly") {
  const MpnConfig c = small_config();
  Rng rng(19);
  const MpnParameters p = init_parameters(rng, c);

  std::ostringstream os(std::ios::binary);
  write_tensors(os, c.hash(), p.tensors);
  const std::string blob = os.str();

  std::istringstream is(blob, std::ios::binary);
  const auto back = read_tensors(is, c.hash());
  REQUIRE(back.size() == p.tensors.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].first == p.tensors[i].first);
    CHECK(back[i].second.v == p.tensors[i].second.v);
  }

  std::ostringstream os2(std::ios::binary);
  write_tensors(os2, c.hash(), back);
  CHECK(os2.str() == blob);

  std::istringstream badhash(blob, std::ios::binary);
  CHECK_THROWS_AS(read_tensors(badhash, c.hash() + 1), config_error);
  std::istringstream badmagic("mpn-ckpt v2\nxxxxxxxxxxxxxxxx", std::ios::binary);
  CHECK_THROWS_AS(read_tensors(badmagic, 0), config_error);
}
