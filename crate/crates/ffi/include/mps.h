#ifndef MPS_H
#define MPS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MpsStatus {
  MPS_STATUS_OK = 0,
  MPS_STATUS_NULL_POINTER = 1,
  MPS_STATUS_INVALID_ARGUMENT = 2,
  MPS_STATUS_PARSE = 3,
  MPS_STATUS_IO = 4,
  MPS_STATUS_NUMERIC = 5,
  MPS_STATUS_BUFFER_TOO_SMALL = 6,
  MPS_STATUS_PANIC = 7,
} MpsStatus;

/**
 * Opaque online engine.
 */
typedef struct MpsEngine MpsEngine;

/**
 * Opaque loss matrix.
 */
typedef struct MpsLossMatrix MpsLossMatrix;

/**
 * Engine parameters. `grid_step` generates the grid `0, step, ..., 1 - step`;
 * `block_len = 0` selects the automatic block length.
 */
typedef struct MpsConfigC {
  double alpha_bar;
  double lambda_max;
  double c;
  size_t tau;
  size_t replicates;
  double grid_step;
  size_t train_n;
  size_t block_len;
  uint64_t seed;
} MpsConfigC;

/**
 * Summary of one online step. `previous_covered` is 1 or 0 for the record
 * resolved by this step and -1 when there was none.
 */
typedef struct MpsStep {
  size_t t;
  double alpha;
  double lambda;
  double beta_prev;
  size_t cardinality;
  int32_t previous_covered;
} MpsStep;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *mps_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mps_version(void);

/**
 * Fills `out` with the default parameters.
 */
enum MpsStatus mps_config_default(struct MpsConfigC *out);

/**
 * Creates an empty matrix with `models` columns labelled `m1..mM`.
 */
enum MpsStatus mps_loss_matrix_new(size_t models, struct MpsLossMatrix **out);

/**
 * Reads a loss CSV (header of labels, one row per period).
 */
enum MpsStatus mps_loss_matrix_from_csv(const char *path, struct MpsLossMatrix **out);

/**
 * Appends one row of `len` finite losses; `len` must equal the model count.
 */
enum MpsStatus mps_loss_matrix_push_row(struct MpsLossMatrix *lm, const double *row, size_t len);

/**
 * Number of rows; 0 for a null handle.
 */
size_t mps_loss_matrix_len(const struct MpsLossMatrix *lm);

/**
 * Number of models; 0 for a null handle.
 */
size_t mps_loss_matrix_models(const struct MpsLossMatrix *lm);

/**
 * Reads entry `(t, model)`.
 */
enum MpsStatus mps_loss_matrix_get(const struct MpsLossMatrix *lm,
                                   size_t t,
                                   size_t model,
                                   double *out);

void mps_loss_matrix_free(struct MpsLossMatrix *lm);

/**
 * Model confidence set p-values on rows `1..=t`. `out` must hold one value
 * per model. `block_len = 0` selects the automatic block length.
 */
enum MpsStatus mps_mcs_pvalues(const struct MpsLossMatrix *lm,
                               size_t t,
                               size_t replicates,
                               size_t block_len,
                               uint64_t seed,
                               double *out,
                               size_t cap);

/**
 * Initializes an engine on the first `train_n` rows of `train`. The matrix
 * is copied; the caller keeps ownership of it.
 */
enum MpsStatus mps_engine_new(const struct MpsLossMatrix *train,
                              const struct MpsConfigC *config,
                              struct MpsEngine **out);

/**
 * Observes one row and emits the next set. If `set_out` is non-null it must
 * hold at least one slot per model; the emitted model indices are written
 * in ascending order and `step_out->cardinality` gives their count. Nothing
 * changes if the call fails.
 */
enum MpsStatus mps_engine_step(struct MpsEngine *engine,
                               const double *row,
                               size_t len,
                               struct MpsStep *step_out,
                               size_t *set_out,
                               size_t set_cap);

/**
 * Current penalty weight; NaN for a null handle.
 */
double mps_engine_lambda(const struct MpsEngine *engine);

/**
 * Current nominal miscoverage rate; NaN for a null handle.
 */
double mps_engine_alpha(const struct MpsEngine *engine);

/**
 * Number of online steps taken; 0 for a null handle.
 */
size_t mps_engine_steps(const struct MpsEngine *engine);

/**
 * Writes the step log CSV to `path`, replacing any existing file.
 */
enum MpsStatus mps_engine_write_log(const struct MpsEngine *engine, const char *path);

void mps_engine_free(struct MpsEngine *engine);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MPS_H */
