#ifndef LTN_H
#define LTN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum {
  LTN_STATUS_OK = 0,
  LTN_STATUS_NULL_ARGUMENT = 1,
  LTN_STATUS_INVALID_UTF8 = 2,
  LTN_STATUS_INVALID_ARGUMENT = 3,
  LTN_STATUS_PARSE_ERROR = 4,
  LTN_STATUS_LOGIC_ERROR = 5,
  LTN_STATUS_CONFIG_ERROR = 6,
  LTN_STATUS_UNKNOWN_EXPERIMENT = 7,
  LTN_STATUS_IO_ERROR = 8,
  LTN_STATUS_RUN_ERROR = 9,
  LTN_STATUS_PANIC = 10,
} LtnStatus;

typedef enum {
  LTN_QUANTIFIER_FORALL = 0,
  LTN_QUANTIFIER_EXISTS = 1,
} LtnQuantifier;

typedef enum {
  LTN_DISTANCE_EUCLIDEAN = 0,
  LTN_DISTANCE_MANHATTAN = 1,
  LTN_DISTANCE_MINKOWSKI = 2,
} LtnDistance;

/**
 * Experiment configuration, started from an experiment's defaults.
 */
typedef struct LtnExperiment LtnExperiment;

/**
 * Parsed formula.
 */
typedef struct LtnFormula LtnFormula;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL.
 * The pointer stays valid until the next library call on this thread.
 */
const char *ltn_last_error(void);

/**
 * Library version as a static string.
 */
const char *ltn_version(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void ltn_string_free(char *s);

/**
 * Parses a formula. On success `*out` owns a new handle.
 *
 * # Safety
 * `src` must be a NUL-terminated string and `out` a valid pointer.
 */
LtnStatus ltn_formula_parse(const char *src, LtnFormula **out);

/**
 * Canonical text of a formula, freed with `ltn_string_free`.
 *
 * # Safety
 * `f` must be a live handle and `out` a valid pointer.
 */
LtnStatus ltn_formula_format(const LtnFormula *f, char **out);

/**
 * Nesting depth of the formula tree.
 *
 * # Safety
 * `f` must be a live handle and `out` a valid pointer.
 */
LtnStatus ltn_formula_depth(const LtnFormula *f, size_t *out);

/**
 * # Safety
 * `f` must be NULL or a handle from `ltn_formula_parse`, not yet freed.
 */
void ltn_formula_free(LtnFormula *f);

/**
 * Aggregates `len` truth values in [0,1] with the generalized-mean quantifier.
 *
 * # Safety
 * `values` must point to `len` doubles and `out` must be valid.
 */
LtnStatus ltn_aggregate(LtnQuantifier quantifier,
                        const double *values,
                        size_t len,
                        double p,
                        double *out);

/**
 * Row-wise `exp(-distance)` between two `rows x cols` row-major matrices.
 * `p` is read only for `Minkowski`. Writes `rows` values to `out`.
 *
 * # Safety
 * `x` and `y` must point to `rows * cols` doubles and `out` to `rows` doubles.
 */
LtnStatus ltn_similarity(LtnDistance distance,
                         double p,
                         const double *x,
                         const double *y,
                         size_t rows,
                         size_t cols,
                         double *out);

/**
 * New experiment handle holding the defaults of `name`
 * (e.g. `"protocol-kb"`, `"beam-regression"`).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
LtnStatus ltn_experiment_new(const char *name, LtnExperiment **out);

/**
 * Sets one configuration key, as on the command line.
 *
 * # Safety
 * `e` must be a live handle; `key` and `value` NUL-terminated strings.
 */
LtnStatus ltn_experiment_set(LtnExperiment *e, const char *key, const char *value);

/**
 * Checks the configuration without running anything.
 *
 * # Safety
 * `e` must be a live handle.
 */
LtnStatus ltn_experiment_validate(const LtnExperiment *e);

/**
 * The configuration in `key=value` form, freed with `ltn_string_free`.
 *
 * # Safety
 * `e` must be a live handle and `out` a valid pointer.
 */
LtnStatus ltn_experiment_config_text(const LtnExperiment *e, char **out);

/**
 * Runs the experiment, writing its artifacts under the configured `out`
 * directory. If `metrics_path` is not NULL it receives the metrics CSV path.
 *
 * # Safety
 * `e` must be a live handle; `metrics_path` NULL or a valid pointer.
 */
LtnStatus ltn_experiment_run(const LtnExperiment *e, char **metrics_path);

/**
 * # Safety
 * `e` must be NULL or a handle from `ltn_experiment_new`, not yet freed.
 */
void ltn_experiment_free(LtnExperiment *e);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LTN_H */
