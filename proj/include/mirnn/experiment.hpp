#pragma once

#include "mirnn/metrics.hpp"
#include "mirnn/trainer.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mirnn {

/// Everything a run needs, parsed from a JSON document. Unset keys keep the
/// defaults below.
struct ExperimentConfig {
  std::string problem = "burgers";  // burgers | heat | taylor_green
  double mu = 0.01;
  double nu = 0.01;
  double rho = 1.0;
  double x_max = 4.0;
  std::optional<double> t_end;  // problem default when unset
  std::array<double, 2> star_center{1.5707963267948966, 1.5707963267948966};
  double star_radius = 1.0;
  double star_amplitude = 0.3;
  int star_lobes = 5;
  BoundaryKind boundary = BoundaryKind::dirichlet;

  int blocks = 2;
  double mutual_length = 0.01;
  double near_width = 0.05;
  std::vector<Interval> intervals;  // explicit partition when non-empty

  ConditioningPolicy policy;
  ForgetFactorSchedule ff;
  int hidden_layers = 4;
  int width = 30;

  TrainConfig train;
  std::vector<int> seeds;  // extra seeds tried by sweeps; train.seed first

  double spacing = 0.01;
  double slice_width = 0.1;
  std::vector<double> slice_times{1.50, 2.51, 4.0};
  double slice_x = 0.88;
  std::vector<double> eval_times;  // extra per-time metrics
  double eval_spacing = 0.05;      // spatial spacing for eval_times

  std::vector<double> noise_sigmas{1.0, 0.1, 0.01};
  std::vector<int> table1_blocks{2, 3, 4};
  std::vector<double> table1_mutual{0.0, 0.01, 0.5, 1.0};
  std::vector<ConditioningPolicy> table2_policies;
  std::vector<ForgetFactorSchedule> table2_ff;

  std::string output_dir = "run";

  PdeProblem make_problem() const;
  TimePartition make_partition() const;
  TrainSetup make_setup() const;
};

/// Reads and validates a config file. Throws config listing every offending
/// field, not_found when the file is missing.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const std::string& text);

/// FNV-1a 64 of the file bytes, as 16 hex digits.
std::string config_hash(const std::string& path);
std::string fnv1a_hex(const std::string& bytes);

/// Parses "TA", "end" or a number.
ConditioningRule parse_rule(const std::string& text);

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::string checkpoint;          // eval
  std::optional<double> spacing;   // eval
  int table = 1;                   // sweep
  bool quiet = false;
};

enum class Command { train, eval, sweep, noise };

/// Executes a command and writes its artifacts under the config's output
/// directory. Throws mirnn::Error on failure.
void run_experiment(const std::string& config_path, Command command, const RunOptions& options);

}  // namespace mirnn
