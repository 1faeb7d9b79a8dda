#ifndef GMCF_H
#define GMCF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GmcfStatus {
  GMCF_STATUS_OK = 0,
  GMCF_STATUS_NULL_POINTER = 1,
  GMCF_STATUS_INVALID_UTF8 = 2,
  GMCF_STATUS_CONFIG = 3,
  GMCF_STATUS_NUMERIC = 4,
  GMCF_STATUS_IO = 5,
  GMCF_STATUS_OUT_OF_RANGE = 6,
  GMCF_STATUS_PANIC = 7,
} GmcfStatus;

/**
 * Why a run stopped; values match the CLI exit codes.
 */
typedef enum GmcfStopKind {
  GMCF_STOP_KIND_CONVERGED = 0,
  GMCF_STOP_KIND_MAX_TIME_REACHED = 2,
  GMCF_STOP_KIND_INVARIANT_BREACH = 3,
  GMCF_STOP_KIND_NON_FINITE = 4,
} GmcfStopKind;

/**
 * Config text plus `--key=value` overrides, validated on every change.
 */
typedef struct GmcfExperiment GmcfExperiment;

/**
 * A finished run.
 */
typedef struct GmcfRun GmcfRun;

/**
 * One diagnostics sample. `min_det2`/`max_det2` are meaningful only when
 * `has_det2` is non-zero.
 */
typedef struct GmcfRecord {
  double t;
  uint64_t step;
  double dt;
  double area;
  double min_j;
  double max_speed;
  int32_t has_det2;
  double min_det2;
  double max_det2;
  double max_two_dilation;
  double max_grad;
} GmcfRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *gmcf_last_error_message(void);

/**
 * Parses config text into a new experiment handle stored in `*out`.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum GmcfStatus gmcf_experiment_parse(const char *text, struct GmcfExperiment **out);

/**
 * Overrides one config key, as `--key=value` would on the command line. On
 * failure the experiment is left unchanged.
 *
 * # Safety
 * `exp` must come from [`gmcf_experiment_parse`]; `key` and `value` must be
 * NUL-terminated strings.
 */
enum GmcfStatus gmcf_experiment_set(struct GmcfExperiment *exp, const char *key, const char *value);

/**
 * Resolved config of the experiment as `key = value` text.
 *
 * # Safety
 * `exp` must be null or come from [`gmcf_experiment_parse`].
 */
char *gmcf_experiment_resolved(const struct GmcfExperiment *exp);

/**
 * # Safety
 * `exp` must be null or come from [`gmcf_experiment_parse`], and not be
 * used afterwards.
 */
void gmcf_experiment_free(struct GmcfExperiment *exp);

/**
 * Runs the experiment to a stop condition. Stops such as an invariant
 * breach are not errors: they are reported by [`gmcf_run_status`]. Output
 * paths in the config are ignored; use [`gmcf_run_csv`] and
 * [`gmcf_run_summary_json`].
 *
 * # Safety
 * `exp` must come from [`gmcf_experiment_parse`] and `out` be valid.
 */
enum GmcfStatus gmcf_run(const struct GmcfExperiment *exp, struct GmcfRun **out);

/**
 * Stop kind, final step and final time of a run. Any of the out pointers
 * may be null.
 *
 * # Safety
 * `run` must come from [`gmcf_run`]; non-null out pointers must be valid.
 */
enum GmcfStatus gmcf_run_status(const struct GmcfRun *run,
                                enum GmcfStopKind *kind,
                                uint64_t *step,
                                double *t);

/**
 * Number of diagnostics records; 0 for a null handle.
 *
 * # Safety
 * `run` must be null or come from [`gmcf_run`].
 */
size_t gmcf_run_record_count(const struct GmcfRun *run);

/**
 * Copies record `index` into `*out`.
 *
 * # Safety
 * `run` must come from [`gmcf_run`] and `out` be valid.
 */
enum GmcfStatus gmcf_run_record(const struct GmcfRun *run, size_t index, struct GmcfRecord *out);

/**
 * CSV time series of the run, identical to what `gmcf run` writes.
 *
 * # Safety
 * `run` must be null or come from [`gmcf_run`].
 */
char *gmcf_run_csv(const struct GmcfRun *run);

/**
 * JSON run summary with the resolved config embedded.
 *
 * # Safety
 * `run` must be null or come from [`gmcf_run`].
 */
char *gmcf_run_summary_json(const struct GmcfRun *run);

/**
 * # Safety
 * `run` must be null or come from [`gmcf_run`], and not be used afterwards.
 */
void gmcf_run_free(struct GmcfRun *run);

/**
 * Map families and their parameters, one block per family.
 */
char *gmcf_list_families(void);

/**
 * Releases a string returned by this library.
 *
 * # Safety
 * `s` must be null or a string returned by a `gmcf_` function, released once.
 */
void gmcf_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GMCF_H */
