/* C interface to the MI-RNN engine. All handles are opaque; every call that
 * can fail returns a status and records a message readable with
 * mirnn_last_error() on the calling thread. */
#ifndef MIRNN_H
#define MIRNN_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define MIRNN_API __declspec(dllexport)
#else
#define MIRNN_API __attribute__((visibility("default")))
#endif

/* Values double as process exit codes for the CLI. */
typedef enum mirnn_status {
  MIRNN_OK = 0,
  MIRNN_ERROR = 1,            /* internal, shape, domain, io ... */
  MIRNN_ERROR_CONFIG = 2,     /* validation, partition, unsupported order */
  MIRNN_ERROR_DIVERGENCE = 3, /* non-finite loss or gradient */
  MIRNN_ERROR_NOT_FOUND = 4,  /* missing config or checkpoint */
  MIRNN_ERROR_ARGUMENT = 5    /* null handle or bad argument */
} mirnn_status;

typedef enum mirnn_command {
  MIRNN_TRAIN = 0,
  MIRNN_EVAL = 1,
  MIRNN_SWEEP = 2,
  MIRNN_NOISE = 3
} mirnn_command;

typedef struct mirnn_experiment mirnn_experiment;
typedef struct mirnn_model mirnn_model;

MIRNN_API const char* mirnn_version(void);
MIRNN_API const char* mirnn_last_error(void);

/* Experiments: a parsed config plus run options. */
MIRNN_API mirnn_status mirnn_experiment_open(const char* config_path, mirnn_experiment** out);
MIRNN_API void mirnn_experiment_close(mirnn_experiment* exp);
MIRNN_API mirnn_status mirnn_experiment_set_seed(mirnn_experiment* exp, uint64_t seed);
MIRNN_API mirnn_status mirnn_experiment_set_checkpoint(mirnn_experiment* exp, const char* path);
MIRNN_API mirnn_status mirnn_experiment_set_spacing(mirnn_experiment* exp, double spacing);
MIRNN_API mirnn_status mirnn_experiment_set_table(mirnn_experiment* exp, int table);
MIRNN_API mirnn_status mirnn_experiment_set_quiet(mirnn_experiment* exp, int quiet);
/* Directory the artifacts go to; owned by the handle. */
MIRNN_API const char* mirnn_experiment_output_dir(const mirnn_experiment* exp);
MIRNN_API mirnn_status mirnn_experiment_run(mirnn_experiment* exp, mirnn_command command);

/* Trained models: a checkpoint evaluated under a config's partition. */
MIRNN_API mirnn_status mirnn_model_load(const char* config_path, const char* checkpoint_path,
                                        mirnn_model** out);
MIRNN_API void mirnn_model_close(mirnn_model* model);
MIRNN_API int mirnn_model_coords(const mirnn_model* model);
MIRNN_API int mirnn_model_fields(const mirnn_model* model);
MIRNN_API int mirnn_model_blocks(const mirnn_model* model);
/* Predicts n points with block `block` (0-based). coords is n x coords,
 * row-major (one point per row); out is n x fields, row-major. */
MIRNN_API mirnn_status mirnn_model_predict(mirnn_model* model, int block, const double* coords,
                                           size_t n, double* out);
/* Exact solution of the model's problem at the same layout. */
MIRNN_API mirnn_status mirnn_model_exact(const mirnn_model* model, const double* coords,
                                         size_t n, double* out);

#ifdef __cplusplus
}
#endif

#endif
