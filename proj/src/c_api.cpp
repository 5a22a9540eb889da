#include "mirnn/mirnn.h"

#include "mirnn/error.hpp"
#include "mirnn/experiment.hpp"

#include <exception>
#include <memory>
#include <string>

struct mirnn_experiment {
  std::string config_path;
  std::string output_dir;
  mirnn::RunOptions options;
};

struct mirnn_model {
  mirnn::ExperimentConfig config;
  mirnn::PdeProblem problem;
  std::unique_ptr<mirnn::MiRnnModel> model;
  std::unique_ptr<mirnn::Predictor> predictor;
};

namespace {

thread_local std::string last_error;

mirnn_status status_of(mirnn::ErrorCode c) {
  using mirnn::ErrorCode;
  switch (c) {
    case ErrorCode::config:
    case ErrorCode::partition:
    case ErrorCode::degenerate_overlap:
    case ErrorCode::degenerate_domain:
    case ErrorCode::unsupported_order:
      return MIRNN_ERROR_CONFIG;
    case ErrorCode::divergence:
    case ErrorCode::numeric_overflow:
      return MIRNN_ERROR_DIVERGENCE;
    case ErrorCode::not_found:
      return MIRNN_ERROR_NOT_FOUND;
    default:
      return MIRNN_ERROR;
  }
}

template <class F>
mirnn_status guarded(F&& f) {
  try {
    last_error.clear();
    f();
    return MIRNN_OK;
  } catch (const mirnn::Error& e) {
    last_error = std::string(mirnn::to_string(e.code())) + ": " + e.what();
    return status_of(e.code());
  } catch (const std::exception& e) {
    last_error = e.what();
    return MIRNN_ERROR;
  } catch (...) {
    last_error = "unknown error";
    return MIRNN_ERROR;
  }
}

mirnn_status bad_argument(const char* what) {
  last_error = what;
  return MIRNN_ERROR_ARGUMENT;
}

}  // namespace

extern "C" {

const char* mirnn_version(void) { return "1.0.0"; }

const char* mirnn_last_error(void) { return last_error.c_str(); }

mirnn_status mirnn_experiment_open(const char* config_path, mirnn_experiment** out) {
  if (!config_path || !out) return bad_argument("null argument");
  *out = nullptr;
  return guarded([&] {
    mirnn::ExperimentConfig c = mirnn::load_config(config_path);
    auto e = std::make_unique<mirnn_experiment>();
    e->config_path = config_path;
    e->output_dir = c.output_dir;
    *out = e.release();
  });
}

void mirnn_experiment_close(mirnn_experiment* exp) { delete exp; }

mirnn_status mirnn_experiment_set_seed(mirnn_experiment* exp, uint64_t seed) {
  if (!exp) return bad_argument("null experiment");
  exp->options.seed = seed;
  return MIRNN_OK;
}

mirnn_status mirnn_experiment_set_checkpoint(mirnn_experiment* exp, const char* path) {
  if (!exp || !path) return bad_argument("null argument");
  exp->options.checkpoint = path;
  return MIRNN_OK;
}

mirnn_status mirnn_experiment_set_spacing(mirnn_experiment* exp, double spacing) {
  if (!exp) return bad_argument("null experiment");
  if (!(spacing > 0.0)) {
    last_error = "spacing must be > 0";
    return MIRNN_ERROR_CONFIG;
  }
  exp->options.spacing = spacing;
  return MIRNN_OK;
}

mirnn_status mirnn_experiment_set_table(mirnn_experiment* exp, int table) {
  if (!exp) return bad_argument("null experiment");
  if (table != 1 && table != 2) {
    last_error = "table must be 1 or 2";
    return MIRNN_ERROR_CONFIG;
  }
  exp->options.table = table;
  return MIRNN_OK;
}

mirnn_status mirnn_experiment_set_quiet(mirnn_experiment* exp, int quiet) {
  if (!exp) return bad_argument("null experiment");
  exp->options.quiet = quiet != 0;
  return MIRNN_OK;
}

const char* mirnn_experiment_output_dir(const mirnn_experiment* exp) {
  return exp ? exp->output_dir.c_str() : "";
}

mirnn_status mirnn_experiment_run(mirnn_experiment* exp, mirnn_command command) {
  if (!exp) return bad_argument("null experiment");
  mirnn::Command c;
  switch (command) {
    case MIRNN_TRAIN: c = mirnn::Command::train; break;
    case MIRNN_EVAL: c = mirnn::Command::eval; break;
    case MIRNN_SWEEP: c = mirnn::Command::sweep; break;
    case MIRNN_NOISE: c = mirnn::Command::noise; break;
    default: return bad_argument("unknown command");
  }
  return guarded([&] { mirnn::run_experiment(exp->config_path, c, exp->options); });
}

mirnn_status mirnn_model_load(const char* config_path, const char* checkpoint_path,
                              mirnn_model** out) {
  if (!config_path || !checkpoint_path || !out) return bad_argument("null argument");
  *out = nullptr;
  return guarded([&] {
    auto m = std::make_unique<mirnn_model>();
    m->config = mirnn::load_config(config_path);
    mirnn::TrainSetup s = m->config.make_setup();
    mirnn::Checkpoint ck = mirnn::load_checkpoint(checkpoint_path);
    if (ck.params.spec.inputs != s.spec.inputs || ck.params.spec.outputs != s.spec.outputs)
      mirnn::fail(mirnn::ErrorCode::config, "checkpoint network does not match the config");
    m->problem = s.problem;
    m->model = std::make_unique<mirnn::MiRnnModel>(
        mirnn::MiRnnModel{ck.params, s.partition, s.policy, ck.ff});
    m->predictor = std::make_unique<mirnn::Predictor>(*m->model);
    *out = m.release();
  });
}

void mirnn_model_close(mirnn_model* model) { delete model; }

int mirnn_model_coords(const mirnn_model* model) {
  return model ? model->problem.coord_count() : 0;
}

int mirnn_model_fields(const mirnn_model* model) {
  return model ? model->problem.field_count() : 0;
}

int mirnn_model_blocks(const mirnn_model* model) {
  return model ? model->model->partition.block_count() : 0;
}

mirnn_status mirnn_model_predict(mirnn_model* model, int block, const double* coords, size_t n,
                                 double* out) {
  if (!model || (n > 0 && (!coords || !out))) return bad_argument("null argument");
  if (block < 0 || block >= model->model->partition.block_count())
    return bad_argument("block index out of range");
  return guarded([&] {
    const auto rows = static_cast<Eigen::Index>(model->problem.coord_count());
    const auto cols = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd pts = Eigen::Map<const Eigen::MatrixXd>(coords, rows, cols);
    const auto& part = model->model->partition;
    for (Eigen::Index i = 0; i < cols; ++i) {
      const double t = pts(rows - 1, i);
      if (!(t >= part.t_start() && t <= part.t_end()))
        mirnn::fail(mirnn::ErrorCode::domain,
                    "time " + std::to_string(t) + " lies outside the modelled interval");
    }
    Eigen::MatrixXd f = model->predictor->predict(block, pts);
    Eigen::Map<Eigen::MatrixXd>(out, f.rows(), f.cols()) = f;
  });
}

mirnn_status mirnn_model_exact(const mirnn_model* model, const double* coords, size_t n,
                               double* out) {
  if (!model || (n > 0 && (!coords || !out))) return bad_argument("null argument");
  return guarded([&] {
    const auto rows = static_cast<Eigen::Index>(model->problem.coord_count());
    Eigen::MatrixXd pts =
        Eigen::Map<const Eigen::MatrixXd>(coords, rows, static_cast<Eigen::Index>(n));
    Eigen::MatrixXd f = mirnn::exact_values(model->problem, pts);
    Eigen::Map<Eigen::MatrixXd>(out, f.rows(), f.cols()) = f;
  });
}

}  // extern "C"
