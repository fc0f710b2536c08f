#pragma once

#include <map>
#include <string>

#include "amrlab/rl.hpp"

namespace amr {

class cli_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Experiment-level configuration: which method, which sweep values, how
/// many seeds, and the shared evaluation suite. The desk profile keeps runs
/// laptop-sized; the paper profile matches the reported protocol.
struct ExperimentConfig {
  PdeFamily family = PdeFamily::poisson;
  Method method = Method::asmr;

  std::vector<double> sweep_values;  // alpha / theta / T / k / p by method
  int seeds = 3;
  std::uint64_t base_seed = 1;
  std::uint64_t eval_suite_seed = 2024;
  int eval_count = 20;
  int eval_reference_depth = 5;
  int iterations = 150;
  int episode_length = 4;
  double alpha = 0.05;
  double theta = 0.5;
  int uniform_steps = 4;
  double random_p = 0.5;
  std::string out_dir = "out";
  bool timings = false;

  // Network/observation ablations forwarded to training.
  bool observe_solution = true;
  bool zero_global_features = false;
  bool global_messages = true;

  PpoConfig ppo(double sweep_value, Method m) const;
};

/// Default sweep grids: per-method alpha ranges, theta in {0, 0.02, ...,
/// 0.98}, argmax episode lengths {20, 60, 100}, uniform depths, random
/// probabilities.
std::vector<double> default_sweep(Method method, PdeFamily family);

void apply_profile(ExperimentConfig& cfg, const std::string& profile);  // desk | paper

/// key=value configuration file (one per line, '#' comments). Unknown keys
/// are an error.
void apply_config_file(ExperimentConfig& cfg, const std::string& path);
void apply_config_line(ExperimentConfig& cfg, const std::string& key, const std::string& value);

struct EvaluationRecord {
  std::string method;
  double sweep_value = 0.0;
  std::uint64_t seed = 0;
  int problem_id = 0;
  int elements = 0;
  double squared_error = 0.0;
  double linear_error = 0.0;
  double wall_time_ms = 0.0;
};

/// How to act during evaluation. Learned methods need an agent; the others
/// are parametric policies.
struct EvalSpec {
  Method method = Method::heuristic;
  double sweep_value = 0.5;
  const Agent* agent = nullptr;
  std::uint64_t seed = 0;  // recorded, and drives the random baseline
  int episode_length = 4;
  int reference_depth = 5;
  PdeFamily family = PdeFamily::poisson;
};

/// Runs every suite problem for `spec` with deterministic actions; problems
/// fan out over OpenMP workers, records land in problem order.
std::vector<EvaluationRecord> evaluate(const EvalSpec& spec,
                                       const std::vector<PdeProblem>& suite);

std::string records_to_csv(const std::vector<EvaluationRecord>& records, bool timings = false);
std::vector<EvaluationRecord> records_from_csv(std::istream& is);

struct RegressionFit {
  std::string method;
  double slope = 0.0;
  double intercept = 0.0;
  int points = 0;
};

struct AggregateResult {
  std::vector<RegressionFit> fits;
  // Scatter points: one per (method, sweep value, seed) with arithmetic-mean
  // elements and errors.
  std::string scatter_csv;
  std::string fits_csv;
};

/// Log-log linear regression of mean squared error against mean element
/// count, pooled per method.
AggregateResult aggregate(const std::vector<EvaluationRecord>& records);

/// Mean final element count for a spec over a suite (used to match the
/// random baseline's budget).
double mean_final_elements(const std::vector<EvaluationRecord>& records);

/// Bisects the random-marking probability until the mean final element count
/// lands within `tolerance` (relative) of the target.
double calibrate_random_p(const std::vector<PdeProblem>& suite, double target_elements,
                          const EvalSpec& base, double tolerance = 0.05);

/// Episode trace export: per-step mesh+solution text records and a rewards
/// CSV, plus SVG renderings colored by solution and by per-element error.
void render_episode(const EvalSpec& spec, const PdeProblem& problem, const std::string& out_dir);

/// Entry point for the command-line tool (returns a process exit status).
int run_cli(int argc, const char* const* argv);

}  // namespace amr
