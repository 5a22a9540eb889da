// Command-line front end. Talks to the engine only through the C API.
#include "mirnn/mirnn.h"

#include <CLI11.hpp>

#include <cstdio>
#include <string>

namespace {

int report(mirnn_status s) {
  if (s != MIRNN_OK) std::fprintf(stderr, "error: %s\n", mirnn_last_error());
  return static_cast<int>(s);
}

struct Handle {
  mirnn_experiment* exp = nullptr;
  ~Handle() { mirnn_experiment_close(exp); }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MI-RNN physics-informed training engine"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mirnn_version()));

  std::string config;
  std::string checkpoint;
  std::uint64_t seed = 0;
  double spacing = 0.0;
  int table = 1;
  bool quiet = false;

  auto* train = app.add_subcommand("train", "train a model and evaluate it on the grid");
  train->add_option("--config", config, "experiment config (JSON)")->required();
  auto* seed_opt = train->add_option("--seed", seed, "override the config seed");
  train->add_flag("--quiet", quiet, "no progress output");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the grid");
  eval->add_option("--config", config, "experiment config (JSON)")->required();
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  auto* spacing_opt =
      eval->add_option("--spacing", spacing, "grid spacing (config value when omitted)")
          ->check(CLI::PositiveNumber);

  auto* sweep = app.add_subcommand("sweep", "run an ablation table");
  sweep->add_option("--config", config, "experiment config (JSON)")->required();
  sweep->add_option("--table", table, "1: blocks x mutual length, 2: conditioning x forget factors")
      ->required()
      ->check(CLI::IsMember({1, 2}));
  sweep->add_flag("--quiet", quiet, "no progress output");

  auto* noise = app.add_subcommand("noise", "noise-robustness experiment");
  noise->add_option("--config", config, "experiment config (JSON)")->required();
  noise->add_flag("--quiet", quiet, "no progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : MIRNN_ERROR_CONFIG;
  }

  Handle h;
  if (int rc = report(mirnn_experiment_open(config.c_str(), &h.exp))) return rc;
  mirnn_experiment_set_quiet(h.exp, quiet);

  mirnn_command command = MIRNN_TRAIN;
  if (train->parsed()) {
    if (*seed_opt) mirnn_experiment_set_seed(h.exp, seed);
  } else if (eval->parsed()) {
    command = MIRNN_EVAL;
    mirnn_experiment_set_checkpoint(h.exp, checkpoint.c_str());
    if (*spacing_opt)
      if (int rc = report(mirnn_experiment_set_spacing(h.exp, spacing))) return rc;
  } else if (sweep->parsed()) {
    command = MIRNN_SWEEP;
    if (int rc = report(mirnn_experiment_set_table(h.exp, table))) return rc;
  } else {
    command = MIRNN_NOISE;
  }
  if (int rc = report(mirnn_experiment_run(h.exp, command))) return rc;
  std::printf("artifacts written to %s\n", mirnn_experiment_output_dir(h.exp));
  return 0;
}
