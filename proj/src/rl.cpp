#include "amrlab/rl.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace amr {

Method method_from_string(const std::string& name) {
  if (name == "asmr") return Method::asmr;
  if (name == "shared") return Method::shared;
  if (name == "unscaled") return Method::unscaled;
  if (name == "vdqn") return Method::vdqn;
  if (name == "argmax") return Method::argmax;
  if (name == "heuristic") return Method::heuristic;
  if (name == "uniform") return Method::uniform;
  if (name == "random") return Method::random;
  throw config_error("unknown method: " + name);
}

std::string method_name(Method m) {
  switch (m) {
    case Method::asmr: return "asmr";
    case Method::shared: return "shared";
    case Method::unscaled: return "unscaled";
    case Method::vdqn: return "vdqn";
    case Method::argmax: return "argmax";
    case Method::heuristic: return "heuristic";
    case Method::uniform: return "uniform";
    case Method::random: return "random";
  }
  return "?";
}

bool method_is_learned(Method m) {
  return m == Method::asmr || m == Method::shared || m == Method::unscaled ||
         m == Method::vdqn || m == Method::argmax;
}

MpnConfig PpoConfig::net_config() const {
  MpnConfig c;
  c.node_dim = observe_solution ? 5 : 3;
  c.edge_dim = 1;
  c.global_dim = 3;
  c.zero_global_features = zero_global_features;
  c.global_messages = global_messages;
  return c;
}

EnvConfig PpoConfig::env_config() const {
  EnvConfig c;
  c.family = family;
  c.episode_length = episode_length;
  c.reference_depth = reference_depth;
  c.max_element_diameter = max_element_diameter;
  c.observe_solution = observe_solution;
  switch (method) {
    case Method::asmr:
      c.reward_variant = RewardVariant::asmr;
      c.alpha = alpha;
      break;
    case Method::unscaled:
      c.reward_variant = RewardVariant::unscaled;
      c.alpha = alpha;
      break;
    case Method::shared:
    case Method::vdqn:
      c.reward_variant = RewardVariant::shared;
      c.alpha = alpha;
      break;
    case Method::argmax:
      c.reward_variant = RewardVariant::shared;
      c.alpha = 0.0;  // the one-element-per-step baseline has no face penalty
      break;
    default:
      c.reward_variant = RewardVariant::asmr;
      c.alpha = alpha;
      break;
  }
  return c;
}

std::uint64_t PpoConfig::hash() const {
  std::uint64_t h = net_config().hash();
  auto mix = [&h](std::uint64_t x) {
    h ^= x + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
  };
  auto mixd = [&](double d) { mix(std::bit_cast<std::uint64_t>(d)); };
  mix(static_cast<std::uint64_t>(family));
  mix(static_cast<std::uint64_t>(method));
  mixd(alpha);
  mix(episode_length);
  mix(reference_depth);
  mixd(max_element_diameter);
  return h;
}

namespace {

bool scalar_stream(Method m) {
  return m == Method::shared || m == Method::vdqn || m == Method::argmax;
}

double log_sigmoid(double z) {  // log sigma(z), stable
  return z > 30.0 ? 0.0 : (z < -30.0 ? z : -std::log1p(std::exp(-z)));
}

}  // namespace

RunningNormalizer::RunningNormalizer(int node_dim, int edge_dim, int global_dim)
    : node_(node_dim), edge_(edge_dim), global_(global_dim) {}

void RunningNormalizer::Moments::merge(const Tensor& rows) {
  const int nb = rows.rows;
  if (nb == 0) return;
  const int dim = rows.cols;
  std::vector<double> bmean(dim, 0.0), bm2(dim, 0.0);
  for (int r = 0; r < nb; ++r)
    for (int c = 0; c < dim; ++c) bmean[c] += rows.at(r, c);
  for (int c = 0; c < dim; ++c) bmean[c] /= nb;
  for (int r = 0; r < nb; ++r)
    for (int c = 0; c < dim; ++c) {
      const double d = rows.at(r, c) - bmean[c];
      bm2[c] += d * d;
    }
  const double new_count = count + nb;
  for (int c = 0; c < dim; ++c) {
    const double delta = bmean[c] - mean.v[c];
    mean.v[c] += delta * nb / new_count;
    m2.v[c] += bm2[c] + delta * delta * count * nb / new_count;
  }
  count = new_count;
}

void RunningNormalizer::Moments::apply(Tensor& rows) const {
  if (count <= 0.0) return;
  for (int r = 0; r < rows.rows; ++r)
    for (int c = 0; c < rows.cols; ++c) {
      const double var = m2.v[c] / count;
      const double z = (rows.at(r, c) - mean.v[c]) / std::sqrt(var + 1e-8);
      rows.at(r, c) = std::clamp(z, -10.0, 10.0);
    }
}

void RunningNormalizer::update(const ObservationGraph& raw) {
  node_.merge(raw.node_features);
  edge_.merge(raw.edge_features);
  global_.merge(raw.global_features);
}

ObservationGraph RunningNormalizer::normalize(const ObservationGraph& raw) const {
  ObservationGraph out = raw;
  node_.apply(out.node_features);
  edge_.apply(out.edge_features);
  global_.apply(out.global_features);
  return out;
}

std::vector<std::pair<std::string, Tensor>> RunningNormalizer::to_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  auto emit = [&out](const std::string& name, const Moments& m) {
    out.emplace_back("norm/" + name + "/mean", m.mean);
    out.emplace_back("norm/" + name + "/m2", m.m2);
    Tensor c(1, 1);
    c.v[0] = m.count;
    out.emplace_back("norm/" + name + "/count", c);
  };
  emit("node", node_);
  emit("edge", edge_);
  emit("global", global_);
  return out;
}

void RunningNormalizer::from_tensors(const std::vector<std::pair<std::string, Tensor>>& tensors) {
  auto fill = [&](const std::string& name, Moments& m) {
    int found = 0;
    for (const auto& [n, t] : tensors) {
      if (n == "norm/" + name + "/mean") m.mean = t, ++found;
      if (n == "norm/" + name + "/m2") m.m2 = t, ++found;
      if (n == "norm/" + name + "/count") m.count = t.v[0], ++found;
    }
    if (found != 3) throw config_error("normalizer tensors missing for " + name);
  };
  fill("node", node_);
  fill("edge", edge_);
  fill("global", global_);
}

Agent make_agent(const PpoConfig& config, Rng& rng) {
  const MpnConfig net = config.net_config();
  Rng policy_rng = rng.split(1);
  Rng value_rng = rng.split(2);
  return Agent{config, init_parameters(policy_rng, net), init_parameters(value_rng, net),
               RunningNormalizer(net.node_dim, net.edge_dim, net.global_dim)};
}

void save_agent(std::ostream& os, const Agent& agent) {
  std::vector<std::pair<std::string, Tensor>> all;
  for (const auto& [name, t] : agent.policy.tensors) all.emplace_back("policy/" + name, t);
  for (const auto& [name, t] : agent.value.tensors) all.emplace_back("value/" + name, t);
  for (auto& nt : agent.normalizer.to_tensors()) all.push_back(std::move(nt));
  write_tensors(os, agent.config.hash(), all);
}

Agent load_agent(std::istream& is, const PpoConfig& config) {
  const auto all = read_tensors(is, config.hash());
  const MpnConfig net = config.net_config();
  Agent agent{config, parameters_for(net), parameters_for(net),
              RunningNormalizer(net.node_dim, net.edge_dim, net.global_dim)};
  std::vector<std::pair<std::string, Tensor>> norm;
  for (const auto& [name, t] : all) {
    if (name.starts_with("policy/")) {
      agent.policy.get(name.substr(7)) = t;
    } else if (name.starts_with("value/")) {
      agent.value.get(name.substr(6)) = t;
    } else if (name.starts_with("norm/")) {
      norm.emplace_back(name, t);
    }
  }
  agent.normalizer.from_tensors(norm);
  return agent;
}

SelectedActions select_actions(const ObservationGraph& obs, const Agent& agent, Rng* rng) {
  const std::vector<double> logits = eval_policy_logits(obs, agent.policy);
  const int n = static_cast<int>(logits.size());
  SelectedActions sel;
  sel.marks.marks.assign(n, false);

  if (agent.config.method == Method::argmax) {
    // Softmax over elements; exactly one mark per step.
    int chosen = 0;
    const double zmax = *std::max_element(logits.begin(), logits.end());
    double lse = 0.0;
    for (double z : logits) lse += std::exp(z - zmax);
    lse = zmax + std::log(lse);
    if (rng) {
      const double u = rng->next_double();
      double acc = 0.0;
      chosen = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += std::exp(logits[i] - lse);
        if (u < acc) {
          chosen = i;
          break;
        }
      }
    } else {
      for (int i = 1; i < n; ++i)
        if (logits[i] > logits[chosen]) chosen = i;  // ties keep the lowest index
    }
    sel.marks.marks[chosen] = true;
    sel.action_index = chosen;
    sel.actions.assign(n, 0);
    sel.actions[chosen] = 1;
    sel.logp = {logits[chosen] - lse};
    return sel;
  }

  sel.actions.resize(n);
  sel.logp.resize(n);
  for (int i = 0; i < n; ++i) {
    const double z = logits[i];
    bool mark;
    if (rng) {
      const double p = 1.0 / (1.0 + std::exp(-z));
      mark = rng->next_double() < p;
    } else {
      mark = z >= 0.0;  // p >= 0.5
    }
    sel.marks.marks[i] = mark;
    sel.actions[i] = mark ? 1 : 0;
    sel.logp[i] = mark ? log_sigmoid(z) : log_sigmoid(-z);
  }
  return sel;
}

std::vector<double> stream_values(const ObservationGraph& obs, const Agent& agent) {
  switch (agent.config.method) {
    case Method::asmr:
    case Method::unscaled:
      return eval_values(obs, agent.value, ValueMode::per_agent);
    case Method::vdqn: {
      const auto per = eval_values(obs, agent.value, ValueMode::per_agent);
      double sum = 0.0;
      for (double v : per) sum += v;
      return {sum};
    }
    default:
      return eval_values(obs, agent.value, ValueMode::global);
  }
}

RolloutBuffer collect_rollouts(SwarmEnv& env, Agent& agent, int n, Rng& rng) {
  RolloutBuffer buffer;
  const bool scalar = scalar_stream(agent.config.method);
  double return_sum = 0.0, elements_sum = 0.0;
  int episodes = 0;

  while (static_cast<int>(buffer.steps.size()) < n) {
    const std::size_t episode_start = buffer.steps.size();
    try {
      ObservationGraph raw = env.env_reset(rng);
      double episode_return = 0.0;
      for (;;) {
        agent.normalizer.update(raw);
        const ObservationGraph obs = agent.normalizer.normalize(raw);
        SelectedActions sel = select_actions(obs, agent, &rng);
        std::vector<double> values = stream_values(obs, agent);

        const StepResult res = env.env_step(sel.marks);
        RolloutStep st;
        st.obs = obs;
        st.actions = std::move(sel.actions);
        st.action_index = sel.action_index;
        st.logp = std::move(sel.logp);
        st.values = std::move(values);
        if (scalar) {
          st.rewards = {res.rewards.empty() ? 0.0 : res.rewards[0]};
          st.delta = identity_refinement_map(1);
        } else {
          st.rewards = res.rewards;
          st.delta = res.delta;
        }
        st.done = res.done;
        for (double r : st.rewards) episode_return += r;
        buffer.steps.push_back(std::move(st));
        if (res.done) {
          buffer.episode_starts.push_back(episode_start);
          return_sum += episode_return;
          elements_sum += res.observation.n_nodes();
          ++episodes;
          break;
        }
        raw = res.observation;
      }
    } catch (const episode_error&) {
      buffer.steps.resize(episode_start);
      ++buffer.discarded_episodes;
    }
  }
  buffer.mean_episode_return = episodes ? return_sum / episodes : 0.0;
  buffer.mean_final_elements = episodes ? elements_sum / episodes : 0.0;
  return buffer;
}

GaeResult per_agent_gae(const RolloutBuffer& buffer, double gamma, double lambda) {
  GaeResult out;
  out.advantages.resize(buffer.steps.size());
  out.value_targets.resize(buffer.steps.size());

  for (std::size_t e = 0; e < buffer.episode_starts.size(); ++e) {
    const std::size_t start = buffer.episode_starts[e];
    std::size_t end = start;
    while (end < buffer.steps.size() && !buffer.steps[end].done) ++end;
    if (end >= buffer.steps.size()) throw std::invalid_argument("gae: unterminated episode");

    for (std::size_t t = end + 1; t-- > start;) {
      const RolloutStep& st = buffer.steps[t];
      const std::size_t n_agents = st.values.size();
      if (st.delta.children.size() != n_agents)
        throw std::invalid_argument("gae: lineage inconsistent with value stream");
      auto& adv = out.advantages[t];
      auto& tgt = out.value_targets[t];
      adv.resize(n_agents);
      tgt.resize(n_agents);
      for (std::size_t i = 0; i < n_agents; ++i) {
        double bootstrap = 0.0, next_adv = 0.0;
        if (!st.done) {
          const auto& next_vals = buffer.steps[t + 1].values;
          const auto& next_advs = out.advantages[t + 1];
          for (Index j : st.delta.children[i]) {
            bootstrap += next_vals[j];
            next_adv += next_advs[j];
          }
        }
        const double td = st.rewards[i] + gamma * bootstrap - st.values[i];
        adv[i] = td + gamma * lambda * next_adv;
        tgt[i] = adv[i] + st.values[i];
      }
    }
  }
  return out;
}

namespace {

Tensor column(const std::vector<double>& v) {
  Tensor t(static_cast<int>(v.size()), 1);
  t.v = v;
  return t;
}

struct StepLosses {
  double policy = 0.0;
  double value = 0.0;
};

StepLosses step_losses(Tape& tape, const RolloutStep& st, const std::vector<double>& adv_norm,
                       const std::vector<double>& targets, Agent& agent, GradientBuffer* pg,
                       GradientBuffer* vg, int batch_size) {
  const PpoConfig& cfg = agent.config;
  const MpnForward fwd_p = mpn_forward(tape, st.obs, agent.policy, pg);
  const int logits = policy_logits(tape, fwd_p, agent.policy, pg);
  const int n = st.obs.n_nodes();

  int logp, adv;
  if (cfg.method == Method::argmax) {
    logp = tape.sub(tape.gather_rows(logits, {st.action_index}, 1), tape.logsumexp(logits));
    adv = tape.constant(column({adv_norm[0]}));
  } else {
    Tensor actions(n, 1);
    for (int i = 0; i < n; ++i) actions.v[i] = st.actions[i];
    logp = tape.sub(tape.mul(tape.constant(std::move(actions)), logits), tape.softplus(logits));
    if (scalar_stream(cfg.method)) {
      Tensor t(n, 1);
      std::fill(t.v.begin(), t.v.end(), adv_norm[0]);
      adv = tape.constant(std::move(t));
    } else {
      adv = tape.constant(column(adv_norm));
    }
  }
  const int old_logp = tape.constant(column(st.logp));
  const int ratio = tape.exp(tape.sub(logp, old_logp));
  const int surr1 = tape.mul(ratio, adv);
  const int surr2 = tape.mul(tape.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), adv);
  const int policy_loss = tape.scale(tape.mean_all(tape.minimum(surr1, surr2)), -1.0);

  const MpnForward fwd_v = mpn_forward(tape, st.obs, agent.value, vg);
  int v;
  if (cfg.method == Method::asmr || cfg.method == Method::unscaled) {
    v = value_estimates(tape, fwd_v, agent.value, ValueMode::per_agent, vg);
  } else if (cfg.method == Method::vdqn) {
    v = tape.sum_all(value_estimates(tape, fwd_v, agent.value, ValueMode::per_agent, vg));
  } else {
    v = value_estimates(tape, fwd_v, agent.value, ValueMode::global, vg);
  }
  const int tgt = tape.constant(column(targets));
  const int sq = tape.square(tape.sub(v, tgt));
  int value_loss;
  if (cfg.value_clipping) {
    const int v_old = tape.constant(column(st.values));
    const int v_clip = tape.add(v_old, tape.clamp(tape.sub(v, v_old), -cfg.clip, cfg.clip));
    value_loss = tape.mean_all(tape.maximum(sq, tape.square(tape.sub(v_clip, tgt))));
  } else {
    value_loss = tape.mean_all(sq);
  }

  const int combined = tape.add(tape.scale(policy_loss, 1.0 / batch_size),
                                tape.scale(value_loss, cfg.value_coef / batch_size));
  tape.backward(combined);
  return {tape.value(policy_loss).v[0], tape.value(value_loss).v[0]};
}

void adam_step(MpnParameters& params, const GradientBuffer& grads, GradientBuffer& m,
               GradientBuffer& v, long long t, double lr, double clip_factor) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    Tensor& p = params.tensors[i].second;
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = grads.tensors[i].v[k] * clip_factor;
      double& mk = m.tensors[i].v[k];
      double& vk = v.tensors[i].v[k];
      mk = b1 * mk + (1.0 - b1) * g;
      vk = b2 * vk + (1.0 - b2) * g * g;
      p.v[k] -= lr * (mk / bc1) / (std::sqrt(vk / bc2) + eps);
    }
  }
}

}  // namespace

UpdateStats ppo_update(const RolloutBuffer& buffer, const GaeResult& gae, Agent& agent,
                       AdamState& adam, Rng& rng) {
  const PpoConfig& cfg = agent.config;

  // Advantages normalized once over every agent advantage in the buffer.
  double mean = 0.0, count = 0.0;
  for (const auto& step_adv : gae.advantages)
    for (double a : step_adv) {
      mean += a;
      count += 1.0;
    }
  mean /= std::max(1.0, count);
  double var = 0.0;
  for (const auto& step_adv : gae.advantages)
    for (double a : step_adv) var += (a - mean) * (a - mean);
  const double std_dev = std::sqrt(var / std::max(1.0, count));
  const double inv = 1.0 / std::max(1e-8, std_dev);
  std::vector<std::vector<double>> adv_norm(gae.advantages.size());
  for (std::size_t t = 0; t < gae.advantages.size(); ++t) {
    adv_norm[t].resize(gae.advantages[t].size());
    for (std::size_t i = 0; i < gae.advantages[t].size(); ++i)
      adv_norm[t][i] = (gae.advantages[t][i] - mean) * inv;
  }

  GradientBuffer pg(agent.policy), vg(agent.value);
  UpdateStats stats;
  double loss_count = 0.0, norm_sum = 0.0;

  std::vector<std::size_t> order(buffer.steps.size());
  std::iota(order.begin(), order.end(), 0);

  Tape tape;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.next_below(i)]);
    for (std::size_t chunk = 0; chunk < order.size(); chunk += cfg.batch_size) {
      const std::size_t chunk_end = std::min(order.size(), chunk + cfg.batch_size);
      const int b = static_cast<int>(chunk_end - chunk);
      if (b <= 0) continue;
      pg.zero();
      vg.zero();
      bool finite = true;
      for (std::size_t k = chunk; k < chunk_end; ++k) {
        const std::size_t idx = order[k];
        tape.clear();
        const StepLosses l = step_losses(tape, buffer.steps[idx], adv_norm[idx],
                                         gae.value_targets[idx], agent, &pg, &vg, b);
        if (!std::isfinite(l.policy) || !std::isfinite(l.value)) finite = false;
        stats.policy_loss += l.policy;
        stats.value_loss += l.value;
        loss_count += 1.0;
      }
      if (!finite) {
        ++stats.skipped_minibatches;
        continue;
      }
      const double norm = std::sqrt(pg.squared_norm() + vg.squared_norm());
      norm_sum += norm;
      const double clip_factor =
          norm > cfg.grad_norm_clip && norm > 0.0 ? cfg.grad_norm_clip / norm : 1.0;
      ++adam.step;
      adam_step(agent.policy, pg, adam.policy_m, adam.policy_v, adam.step, cfg.learning_rate,
                clip_factor);
      adam_step(agent.value, vg, adam.value_m, adam.value_v, adam.step, cfg.learning_rate,
                clip_factor);
      ++stats.minibatches;
    }
  }
  if (loss_count > 0) {
    stats.policy_loss /= loss_count;
    stats.value_loss /= loss_count;
  }
  if (stats.minibatches > 0) stats.grad_norm = norm_sum / stats.minibatches;
  return stats;
}

TrainResult train(const PpoConfig& config, std::uint64_t seed, const std::string& out_dir) {
  Rng base(seed);
  Rng init_rng = base.split(1);
  Rng rollout_rng = base.split(2);
  Rng shuffle_rng = base.split(3);

  Agent agent = make_agent(config, init_rng);
  AdamState adam(agent);
  MeshSwarmEnv env(config.env_config());

  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  auto checkpoint = [&](const std::string& name) {
    if (out_dir.empty()) return;
    std::ofstream os(out_dir + "/" + name, std::ios::binary);
    save_agent(os, agent);
  };

  std::vector<IterationLog> log;
  for (int it = 1; it <= config.iterations; ++it) {
    RolloutBuffer buffer =
        collect_rollouts(env, agent, config.samples_per_iteration, rollout_rng);
    const GaeResult gae = per_agent_gae(buffer, config.gamma, config.gae_lambda);
    const UpdateStats stats = ppo_update(buffer, gae, agent, adam, shuffle_rng);

    IterationLog row;
    row.iteration = it;
    row.mean_episode_return = buffer.mean_episode_return;
    row.policy_loss = stats.policy_loss;
    row.value_loss = stats.value_loss;
    row.grad_norm = stats.grad_norm;
    row.mean_final_elements = buffer.mean_final_elements;
    log.push_back(row);

    if (config.checkpoint_every > 0 && it % config.checkpoint_every == 0) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_%06d.ckpt", it);
      checkpoint(name);
    }
  }
  checkpoint("checkpoint_final.ckpt");
  return TrainResult{std::move(agent), std::move(log)};
}

std::string training_log_csv(const std::vector<IterationLog>& log) {
  std::ostringstream os;
  os << "iteration,mean_episode_return,policy_loss,value_loss,grad_norm,mean_final_elements\n";
  char buf[256];
  for (const IterationLog& row : log) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", row.iteration,
                  row.mean_episode_return, row.policy_loss, row.value_loss, row.grad_norm,
                  row.mean_final_elements);
    os << buf;
  }
  return os.str();
}

MarkVector heuristic_policy(const std::vector<double>& normalized_errors, double theta) {
  MarkVector mv;
  mv.marks.resize(normalized_errors.size());
  double max_err = 0.0;
  for (double e : normalized_errors) max_err = std::max(max_err, e);
  for (std::size_t i = 0; i < normalized_errors.size(); ++i)
    mv.marks[i] = normalized_errors[i] > theta * max_err;
  return mv;
}

}  // namespace amr
