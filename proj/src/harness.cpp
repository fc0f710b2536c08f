#include "amrlab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "amrlab/error_metrics.hpp"
#include "amrlab/mesh_io.hpp"

namespace amr {

namespace fs = std::filesystem;

std::vector<double> default_sweep(Method method, PdeFamily family) {
  switch (method) {
    case Method::asmr:
    case Method::shared:
      return family == PdeFamily::laplace
                 ? std::vector<double>{3e-1, 1e-1, 3e-2, 1e-2}
                 : std::vector<double>{2e-1, 1e-1, 5e-2, 2e-2, 1e-2, 5e-3};
    case Method::unscaled:
    case Method::vdqn:
      return {1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3, 1e-2};
    case Method::argmax:
      return {20, 60, 100};
    case Method::heuristic: {
      std::vector<double> thetas;
      for (int k = 0; k <= 49; ++k) thetas.push_back(0.02 * k);
      return thetas;
    }
    case Method::uniform:
      return {0, 1, 2, 3, 4};
    case Method::random:
      return {0.1, 0.25, 0.5, 0.75, 1.0};
  }
  return {};
}

PpoConfig ExperimentConfig::ppo(double sweep_value, Method m) const {
  PpoConfig c;
  c.family = family;
  c.method = m;
  c.iterations = iterations;
  c.observe_solution = observe_solution;
  c.zero_global_features = zero_global_features;
  c.global_messages = global_messages;
  if (m == Method::argmax) {
    c.alpha = 0.0;
    c.episode_length = static_cast<int>(sweep_value);
  } else {
    c.alpha = sweep_value;
    c.episode_length = episode_length;
  }
  return c;
}

void apply_profile(ExperimentConfig& cfg, const std::string& profile) {
  if (profile == "desk") {
    cfg.iterations = 150;
    cfg.seeds = 3;
    cfg.eval_count = 20;
  } else if (profile == "paper") {
    cfg.iterations = 500;
    cfg.seeds = 10;
    cfg.eval_count = 100;
  } else {
    throw cli_error("unknown profile: " + profile + " (expected desk or paper)");
  }
}

void apply_config_line(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  auto as_int = [&value, &key]() {
    try {
      return std::stoi(value);
    } catch (...) {
      throw cli_error("config: bad integer for " + key + ": " + value);
    }
  };
  auto as_double = [&value, &key]() {
    try {
      return std::stod(value);
    } catch (...) {
      throw cli_error("config: bad number for " + key + ": " + value);
    }
  };
  auto as_bool = [&value, &key]() {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw cli_error("config: bad boolean for " + key + ": " + value);
  };
  if (key == "family") {
    if (value == "laplace")
      cfg.family = PdeFamily::laplace;
    else if (value == "poisson")
      cfg.family = PdeFamily::poisson;
    else
      throw cli_error("config: unknown family: " + value);
  } else if (key == "method") {
    cfg.method = method_from_string(value);
  } else if (key == "profile") {
    apply_profile(cfg, value);
  } else if (key == "seeds") {
    cfg.seeds = as_int();
  } else if (key == "base_seed") {
    cfg.base_seed = static_cast<std::uint64_t>(std::stoull(value));
  } else if (key == "eval_suite_seed") {
    cfg.eval_suite_seed = static_cast<std::uint64_t>(std::stoull(value));
  } else if (key == "eval_count") {
    cfg.eval_count = as_int();
  } else if (key == "eval_reference_depth") {
    cfg.eval_reference_depth = as_int();
  } else if (key == "iterations") {
    cfg.iterations = as_int();
  } else if (key == "episode_length") {
    cfg.episode_length = as_int();
  } else if (key == "alpha") {
    cfg.alpha = as_double();
  } else if (key == "theta") {
    cfg.theta = as_double();
  } else if (key == "uniform_steps") {
    cfg.uniform_steps = as_int();
  } else if (key == "random_p") {
    cfg.random_p = as_double();
  } else if (key == "out_dir") {
    cfg.out_dir = value;
  } else if (key == "timings") {
    cfg.timings = as_bool();
  } else if (key == "observe_solution") {
    cfg.observe_solution = as_bool();
  } else if (key == "zero_global_features") {
    cfg.zero_global_features = as_bool();
  } else if (key == "global_messages") {
    cfg.global_messages = as_bool();
  } else if (key == "sweep_values") {
    cfg.sweep_values.clear();
    std::istringstream ss(value);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) cfg.sweep_values.push_back(std::stod(tok));
  } else {
    throw cli_error("config: unknown key: " + key);
  }
}

void apply_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw cli_error("config: cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos)
      throw cli_error("config: line " + std::to_string(lineno) + " is not key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    apply_config_line(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

namespace {

MarkVector marks_for(const EvalSpec& spec, const EpisodeState& state,
                     const ObservationGraph& raw_obs, int t, Rng& random_rng) {
  switch (spec.method) {
    case Method::heuristic:
      return heuristic_policy(state.errors.normalized, spec.sweep_value);
    case Method::uniform: {
      MarkVector mv;
      mv.marks.assign(state.mesh.n_elements(), t < static_cast<int>(spec.sweep_value));
      return mv;
    }
    case Method::random: {
      MarkVector mv;
      mv.marks.resize(state.mesh.n_elements());
      for (std::size_t i = 0; i < mv.marks.size(); ++i)
        mv.marks[i] = random_rng.bernoulli(spec.sweep_value);
      return mv;
    }
    default: {
      if (!spec.agent) throw cli_error("evaluate: learned method without a checkpoint");
      const ObservationGraph obs = spec.agent->normalizer.normalize(raw_obs);
      return select_actions(obs, *spec.agent, nullptr).marks;
    }
  }
}

EvaluationRecord evaluate_one(const EvalSpec& spec, const PdeProblem& problem, int problem_id) {
  const auto start = std::chrono::steady_clock::now();

  EnvConfig ec;
  ec.family = spec.family;
  ec.episode_length = spec.episode_length;
  ec.reference_depth = spec.reference_depth;
  ec.alpha = 0.0;
  if (spec.agent) ec.observe_solution = spec.agent->config.observe_solution;
  MeshRefineEnv env(ec);
  ObservationGraph raw = env.reset(problem);
  const TriMesh initial_mesh = env.state().mesh;
  const Solution initial_solution = env.state().solution;

  Rng random_rng = Rng(spec.seed ^ 0x5eedull).split(problem_id);
  for (int t = 0; t < spec.episode_length; ++t) {
    const MarkVector marks = marks_for(spec, env.state(), raw, t, random_rng);
    raw = env.step(marks).observation;
  }

  EvaluationRecord rec;
  rec.method = method_name(spec.method);
  rec.sweep_value = spec.sweep_value;
  rec.seed = spec.seed;
  rec.problem_id = problem_id;
  rec.elements = static_cast<int>(env.state().mesh.n_elements());
  rec.squared_error =
      normalized_squared_error(env.state().mesh, env.state().solution, initial_mesh,
                               initial_solution, env.state().reference);
  rec.linear_error =
      normalized_linear_error(env.state().mesh, env.state().solution, initial_mesh,
                              initial_solution, env.state().reference);
  rec.wall_time_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - start).count();
  return rec;
}

}  // namespace

std::vector<EvaluationRecord> evaluate(const EvalSpec& spec,
                                       const std::vector<PdeProblem>& suite) {
  std::vector<EvaluationRecord> records(suite.size());
  std::string failure;
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < static_cast<long long>(suite.size()); ++i) {
    try {
      records[i] = evaluate_one(spec, suite[i], static_cast<int>(i));
    } catch (const std::exception& e) {
#pragma omp critical
      failure = e.what();
    }
  }
  if (!failure.empty()) throw cli_error("evaluate: " + failure);
  return records;
}

std::string records_to_csv(const std::vector<EvaluationRecord>& records, bool timings) {
  std::ostringstream os;
  os << "method,sweep_value,seed,problem_id,elements,squared_error,linear_error";
  if (timings) os << ",wall_time_ms";
  os << '\n';
  char buf[512];
  for (const EvaluationRecord& r : records) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%llu,%d,%d,%.17g,%.17g", r.method.c_str(),
                  r.sweep_value, static_cast<unsigned long long>(r.seed), r.problem_id,
                  r.elements, r.squared_error, r.linear_error);
    os << buf;
    if (timings) {
      std::snprintf(buf, sizeof buf, ",%.3f", r.wall_time_ms);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

std::vector<EvaluationRecord> records_from_csv(std::istream& is) {
  std::vector<EvaluationRecord> out;
  std::string line;
  if (!std::getline(is, line) || line.rfind("method,", 0) != 0)
    throw cli_error("records_from_csv: missing header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    EvaluationRecord r;
    std::getline(ls, r.method, ',');
    std::getline(ls, tok, ',');
    r.sweep_value = std::stod(tok);
    std::getline(ls, tok, ',');
    r.seed = std::stoull(tok);
    std::getline(ls, tok, ',');
    r.problem_id = std::stoi(tok);
    std::getline(ls, tok, ',');
    r.elements = std::stoi(tok);
    std::getline(ls, tok, ',');
    r.squared_error = std::stod(tok);
    std::getline(ls, tok, ',');
    r.linear_error = std::stod(tok);
    if (std::getline(ls, tok, ',')) r.wall_time_ms = std::stod(tok);
    out.push_back(std::move(r));
  }
  return out;
}

AggregateResult aggregate(const std::vector<EvaluationRecord>& records) {
  struct Accum {
    double elements = 0.0, squared = 0.0, linear = 0.0;
    int n = 0;
  };
  std::map<std::tuple<std::string, double, std::uint64_t>, Accum> points;
  for (const EvaluationRecord& r : records) {
    Accum& a = points[{r.method, r.sweep_value, r.seed}];
    a.elements += r.elements;
    a.squared += r.squared_error;
    a.linear += r.linear_error;
    a.n += 1;
  }

  std::ostringstream scatter;
  scatter << "method,sweep_value,seed,mean_elements,mean_squared_error,mean_linear_error\n";
  std::map<std::string, std::vector<std::pair<double, double>>> by_method;
  char buf[512];
  for (const auto& [key, a] : points) {
    const auto& [method, sweep, seed] = key;
    const double me = a.elements / a.n, ms = a.squared / a.n, ml = a.linear / a.n;
    std::snprintf(buf, sizeof buf, "%s,%.17g,%llu,%.17g,%.17g,%.17g\n", method.c_str(), sweep,
                  static_cast<unsigned long long>(seed), me, ms, ml);
    scatter << buf;
    if (me > 0.0 && ms > 0.0) by_method[method].push_back({std::log(me), std::log(ms)});
  }

  AggregateResult out;
  std::ostringstream fits;
  fits << "method,slope,intercept,points\n";
  for (const auto& [method, pts] : by_method) {
    double sx = 0.0, sy = 0.0;
    for (const auto& [x, y] : pts) {
      sx += x;
      sy += y;
    }
    const double n = static_cast<double>(pts.size());
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (const auto& [x, y] : pts) {
      sxx += (x - mx) * (x - mx);
      sxy += (x - mx) * (y - my);
    }
    RegressionFit fit;
    fit.method = method;
    fit.points = static_cast<int>(pts.size());
    fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    fit.intercept = my - fit.slope * mx;
    out.fits.push_back(fit);
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%d\n", method.c_str(), fit.slope,
                  fit.intercept, fit.points);
    fits << buf;
  }
  out.scatter_csv = scatter.str();
  out.fits_csv = fits.str();
  return out;
}

double mean_final_elements(const std::vector<EvaluationRecord>& records) {
  double acc = 0.0;
  for (const EvaluationRecord& r : records) acc += r.elements;
  return records.empty() ? 0.0 : acc / records.size();
}

double calibrate_random_p(const std::vector<PdeProblem>& suite, double target_elements,
                          const EvalSpec& base, double tolerance) {
  double lo = 0.0, hi = 1.0, p = 0.5;
  for (int iter = 0; iter < 24; ++iter) {
    p = 0.5 * (lo + hi);
    EvalSpec spec = base;
    spec.method = Method::random;
    spec.sweep_value = p;
    const double got = mean_final_elements(evaluate(spec, suite));
    if (std::abs(got - target_elements) <= tolerance * target_elements) return p;
    (got < target_elements ? lo : hi) = p;
  }
  return p;
}

void render_episode(const EvalSpec& spec, const PdeProblem& problem, const std::string& out_dir) {
  fs::create_directories(out_dir);

  EnvConfig ec;
  ec.family = spec.family;
  ec.episode_length = spec.episode_length;
  ec.reference_depth = spec.reference_depth;
  ec.alpha = 0.0;
  if (spec.agent) ec.observe_solution = spec.agent->config.observe_solution;
  MeshRefineEnv env(ec);
  ObservationGraph raw = env.reset(problem);
  Rng random_rng = Rng(spec.seed ^ 0x5eedull).split(0);

  std::ofstream rewards_csv(out_dir + "/rewards.csv");
  rewards_csv << "step,element,reward\n";

  for (int t = 0; t <= spec.episode_length; ++t) {
    const EpisodeState& s = env.state();
    std::vector<double> solution_scalar(s.mesh.n_elements());
    for (Index e = 0; e < s.mesh.n_elements(); ++e) {
      const auto& v = s.mesh.elements()[e].v;
      solution_scalar[e] =
          (s.solution.values[v[0]] + s.solution.values[v[1]] + s.solution.values[v[2]]) / 3.0;
    }
    const std::string stem = out_dir + "/step" + std::to_string(t);
    std::ofstream(stem + "_solution.svg") << mesh_to_svg(s.mesh, solution_scalar);
    std::ofstream(stem + "_error.svg") << mesh_to_svg(s.mesh, s.errors.normalized);
    std::ofstream mesh_txt(stem + ".mesh");
    write_mesh(mesh_txt, s.mesh, &s.solution.values);

    if (t == spec.episode_length) break;
    const MarkVector marks = marks_for(spec, s, raw, t, random_rng);
    const StepResult res = env.step(marks);
    raw = res.observation;
    for (std::size_t i = 0; i < res.rewards.size(); ++i)
      rewards_csv << t << ',' << i << ',' << res.rewards[i] << '\n';
  }
}

}  // namespace amr
