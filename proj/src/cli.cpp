#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "amrlab/harness.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace amr {

namespace fs = std::filesystem;

namespace {

void setup_workers() {
#ifdef _OPENMP
  if (const char* w = std::getenv("AMRLAB_WORKERS")) {
    const int n = std::atoi(w);
    if (n > 0) omp_set_num_threads(n);
  }
#endif
}

Agent load_checkpoint(const std::string& path, const PpoConfig& config) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw cli_error("cannot open checkpoint: " + path);
  return load_agent(is, config);
}

void write_file(const std::string& path, const std::string& content) {
  if (const fs::path parent = fs::path(path).parent_path(); !parent.empty())
    fs::create_directories(parent);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw cli_error("cannot write " + path);
  os << content;
}

double sweep_value_for(const ExperimentConfig& cfg, Method m) {
  switch (m) {
    case Method::heuristic: return cfg.theta;
    case Method::uniform: return cfg.uniform_steps;
    case Method::random: return cfg.random_p;
    case Method::argmax: return cfg.episode_length;
    default: return cfg.alpha;
  }
}

std::vector<EvaluationRecord> run_eval_cell(const ExperimentConfig& cfg, Method method,
                                            double sweep_value, std::uint64_t seed,
                                            const Agent* agent,
                                            const std::vector<PdeProblem>& suite) {
  EvalSpec spec;
  spec.method = method;
  spec.sweep_value = sweep_value;
  spec.agent = agent;
  spec.seed = seed;
  spec.episode_length = method == Method::argmax ? static_cast<int>(sweep_value)
                                                 : cfg.episode_length;
  spec.reference_depth = cfg.eval_reference_depth;
  spec.family = cfg.family;
  return evaluate(spec, suite);
}

int cmd_train(const ExperimentConfig& cfg) {
  if (!method_is_learned(cfg.method))
    throw cli_error("train: method '" + method_name(cfg.method) + "' is not trainable");
  const PpoConfig ppo = cfg.ppo(sweep_value_for(cfg, cfg.method), cfg.method);
  const TrainResult result = train(ppo, cfg.base_seed, cfg.out_dir);
  write_file(cfg.out_dir + "/train_log.csv", training_log_csv(result.log));
  std::cout << "trained " << method_name(cfg.method) << " for " << ppo.iterations
            << " iterations; checkpoints in " << cfg.out_dir << '\n';
  return 0;
}

int cmd_evaluate(const ExperimentConfig& cfg, const std::string& checkpoint,
                 const std::string& out_csv) {
  const auto suite = sample_eval_suite(cfg.family, cfg.eval_suite_seed, cfg.eval_count);
  std::optional<Agent> agent;
  if (method_is_learned(cfg.method)) {
    if (checkpoint.empty()) throw cli_error("evaluate: --checkpoint required for learned methods");
    agent = load_checkpoint(checkpoint,
                            cfg.ppo(sweep_value_for(cfg, cfg.method), cfg.method));
  }
  const auto records = run_eval_cell(cfg, cfg.method, sweep_value_for(cfg, cfg.method),
                                     cfg.base_seed, agent ? &*agent : nullptr, suite);
  const std::string csv = records_to_csv(records, cfg.timings);
  if (out_csv.empty()) {
    std::cout << csv;
  } else {
    write_file(out_csv, csv);
    std::cout << "wrote " << records.size() << " records to " << out_csv << '\n';
  }
  return 0;
}

int cmd_sweep(ExperimentConfig cfg) {
  if (cfg.sweep_values.empty()) cfg.sweep_values = default_sweep(cfg.method, cfg.family);
  const auto suite = sample_eval_suite(cfg.family, cfg.eval_suite_seed, cfg.eval_count);
  for (const double value : cfg.sweep_values) {
    for (int s = 0; s < cfg.seeds; ++s) {
      const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(s);
      char cell[128];
      std::snprintf(cell, sizeof cell, "%s/%s/v%g/seed%llu", cfg.out_dir.c_str(),
                    method_name(cfg.method).c_str(), value,
                    static_cast<unsigned long long>(seed));
      std::optional<Agent> agent;
      if (method_is_learned(cfg.method)) {
        const PpoConfig ppo = cfg.ppo(value, cfg.method);
        TrainResult result = train(ppo, seed, cell);
        write_file(std::string(cell) + "/train_log.csv", training_log_csv(result.log));
        agent = std::move(result.agent);
      }
      const auto records =
          run_eval_cell(cfg, cfg.method, value, seed, agent ? &*agent : nullptr, suite);
      write_file(std::string(cell) + "/eval.csv", records_to_csv(records, cfg.timings));
      std::cout << "sweep cell " << cell << ": mean elements "
                << mean_final_elements(records) << '\n';
    }
  }
  return 0;
}

int cmd_aggregate(const std::vector<std::string>& inputs, const std::string& out_dir) {
  std::vector<EvaluationRecord> records;
  std::vector<std::string> files;
  for (const std::string& in : inputs) {
    if (fs::is_directory(in)) {
      for (const auto& entry : fs::recursive_directory_iterator(in))
        if (entry.is_regular_file() && entry.path().filename() == "eval.csv")
          files.push_back(entry.path().string());
    } else {
      files.push_back(in);
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw cli_error("aggregate: no input CSV files found");
  for (const std::string& f : files) {
    std::ifstream is(f);
    if (!is) throw cli_error("aggregate: cannot open " + f);
    const auto part = records_from_csv(is);
    records.insert(records.end(), part.begin(), part.end());
  }
  const AggregateResult result = aggregate(records);
  write_file(out_dir + "/fits.csv", result.fits_csv);
  write_file(out_dir + "/scatter.csv", result.scatter_csv);
  std::cout << result.fits_csv;
  return 0;
}

int cmd_render(const ExperimentConfig& cfg, const std::string& checkpoint, int problem_id) {
  const auto suite = sample_eval_suite(cfg.family, cfg.eval_suite_seed, cfg.eval_count);
  if (problem_id < 0 || problem_id >= static_cast<int>(suite.size()))
    throw cli_error("render: problem id out of range");
  std::optional<Agent> agent;
  if (method_is_learned(cfg.method)) {
    if (checkpoint.empty()) throw cli_error("render: --checkpoint required for learned methods");
    agent = load_checkpoint(checkpoint, cfg.ppo(sweep_value_for(cfg, cfg.method), cfg.method));
  }
  EvalSpec spec;
  spec.method = cfg.method;
  spec.sweep_value = sweep_value_for(cfg, cfg.method);
  spec.agent = agent ? &*agent : nullptr;
  spec.seed = cfg.base_seed;
  spec.episode_length = cfg.episode_length;
  spec.reference_depth = cfg.eval_reference_depth;
  spec.family = cfg.family;
  render_episode(spec, suite[problem_id], cfg.out_dir);
  std::cout << "rendered problem " << problem_id << " into " << cfg.out_dir << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  setup_workers();

  CLI::App app{"Swarm-refined adaptive meshing laboratory"};
  app.require_subcommand(1);

  ExperimentConfig cfg;
  std::string config_path, checkpoint, out_csv, profile;
  int problem_id = 0;
  std::vector<std::string> agg_inputs;

  // The config file seeds the defaults; explicit flags override it, so it is
  // applied before the real parse.
  try {
    for (int i = 1; i < argc; ++i) {
      const std::string arg = argv[i];
      if (arg == "--config" && i + 1 < argc) apply_config_file(cfg, argv[i + 1]);
      if (arg.rfind("--config=", 0) == 0) apply_config_file(cfg, arg.substr(9));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  std::string family = cfg.family == PdeFamily::laplace ? "laplace" : "poisson";
  std::string method = method_name(cfg.method);

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value configuration file");
    sub->add_option("--family", family, "laplace | poisson");
    sub->add_option("--method", method,
                    "asmr | shared | unscaled | vdqn | argmax | heuristic | uniform | random");
    sub->add_option("--seed", cfg.base_seed, "base RNG seed");
    sub->add_option("--alpha", cfg.alpha, "element penalty");
    sub->add_option("--theta", cfg.theta, "heuristic threshold");
    sub->add_option("--uniform-steps", cfg.uniform_steps, "uniform baseline depth");
    sub->add_option("--random-p", cfg.random_p, "random baseline probability");
    sub->add_option("--episode-length", cfg.episode_length, "refinement steps per episode");
    sub->add_option("--iterations", cfg.iterations, "training iterations");
    sub->add_option("--eval-seed", cfg.eval_suite_seed, "evaluation suite seed");
    sub->add_option("--eval-count", cfg.eval_count, "evaluation problems");
    sub->add_option("--seeds", cfg.seeds, "seeds per sweep cell");
    sub->add_option("--out", cfg.out_dir, "output directory");
    sub->add_option("--profile", profile, "desk | paper");
    sub->add_flag("--timings", cfg.timings, "append wall times to CSV output");
    sub->add_flag("--solution-features,!--no-solution-features", cfg.observe_solution,
                  "use solution observation features (default on)");
    sub->add_flag("--zero-global-features", cfg.zero_global_features,
                  "zero the global observation features");
    sub->add_flag("--global-messages,!--no-global-messages", cfg.global_messages,
                  "use global message passing (default on)");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train a policy");
  add_common(train_cmd);
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "evaluate on the fixed suite");
  add_common(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint, "agent checkpoint path");
  eval_cmd->add_option("--out-csv", out_csv, "records CSV path (stdout when omitted)");
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "train/evaluate all sweep values x seeds");
  add_common(sweep_cmd);
  CLI::App* agg_cmd = app.add_subcommand("aggregate", "log-log regression over eval CSVs");
  agg_cmd->add_option("--in", agg_inputs, "eval CSV files or directories")->required();
  agg_cmd->add_option("--out", cfg.out_dir, "output directory");
  CLI::App* render_cmd = app.add_subcommand("render", "render an episode as SVG + traces");
  add_common(render_cmd);
  render_cmd->add_option("--checkpoint", checkpoint, "agent checkpoint path");
  render_cmd->add_option("--problem", problem_id, "evaluation problem index");

  try {
    app.parse(argc, argv);
    if (!profile.empty()) apply_profile(cfg, profile);
    if (family != "laplace" && family != "poisson")
      throw cli_error("unknown family: " + family);
    cfg.family = family == "laplace" ? PdeFamily::laplace : PdeFamily::poisson;
    cfg.method = method_from_string(method);

    if (train_cmd->parsed()) return cmd_train(cfg);
    if (eval_cmd->parsed()) return cmd_evaluate(cfg, checkpoint, out_csv);
    if (sweep_cmd->parsed()) return cmd_sweep(cfg);
    if (agg_cmd->parsed()) return cmd_aggregate(agg_inputs, cfg.out_dir);
    if (render_cmd->parsed()) return cmd_render(cfg, checkpoint, problem_id);
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace amr
