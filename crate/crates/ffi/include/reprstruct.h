#ifndef REPRSTRUCT_H
#define REPRSTRUCT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum RsStatus {
  RS_STATUS_OK = 0,
  /**
   * A required pointer was null or a string was not UTF-8.
   */
  RS_STATUS_NULL_OR_INVALID_ARGUMENT = 1,
  /**
   * A parameter was out of range (bin count, min count, ...).
   */
  RS_STATUS_INVALID_PARAMETER = 2,
  /**
   * Data or validation error: shapes, alignment, format, undefined measure.
   */
  RS_STATUS_DATA = 3,
  RS_STATUS_IO = 4,
  /**
   * The library panicked; this is a bug.
   */
  RS_STATUS_INTERNAL = 5,
} RsStatus;

typedef enum RsMeasure {
  RS_MEASURE_VARIATION = 0,
  RS_MEASURE_REGULARITY = 1,
  RS_MEASURE_DISENTANGLEMENT = 2,
} RsMeasure;

/**
 * A row-major float32 matrix of representations.
 */
typedef struct RsBatch RsBatch;

/**
 * A named per-row assignment of label ids.
 */
typedef struct RsLabelSet RsLabelSet;

typedef struct RsReport RsReport;

typedef struct RsAnalyzeOptions {
  /**
   * Apply the Miller-Madow correction.
   */
  bool corrected;
  /**
   * Labels with fewer rows are excluded.
   */
  size_t min_count;
  /**
   * Weight label means by label frequency instead of uniformly.
   */
  bool frequency_weighting;
  /**
   * Include per-label values in the JSON report.
   */
  bool per_label;
} RsAnalyzeOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *rs_last_error_message(void);

/**
 * Library version as a static nul-terminated string.
 */
const char *rs_version(void);

struct RsAnalyzeOptions rs_analyze_options_default(void);

/**
 * Copies `rows * dims` row-major floats into a new batch.
 *
 * # Safety
 * `values` must point to `rows * dims` readable floats; `out` must be writable.
 */
enum RsStatus rs_batch_new(const float *values, size_t rows, size_t dims, struct RsBatch **out);

/**
 * Reads an HREP, NPY or CSV matrix file.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum RsStatus rs_batch_read(const char *path, struct RsBatch **out);

/**
 * Writes the batch in the HREP binary format.
 *
 * # Safety
 * `batch` must be a live handle and `path` a nul-terminated string.
 */
enum RsStatus rs_batch_write_hrep(const struct RsBatch *batch, const char *path);

/**
 * # Safety
 * `batch` must be null or a live handle.
 */
size_t rs_batch_rows(const struct RsBatch *batch);

/**
 * # Safety
 * `batch` must be null or a live handle.
 */
size_t rs_batch_dims(const struct RsBatch *batch);

/**
 * # Safety
 * `batch` must be null or a handle not yet freed.
 */
void rs_batch_free(struct RsBatch *batch);

/**
 * Creates a label set named `name` (`token`, `pos`, `bigram` or any custom
 * name) from one label id per row.
 *
 * # Safety
 * `name` must be a nul-terminated string, `ids` must point to `len` ids and
 * `out` must be writable.
 */
enum RsStatus rs_labels_new(const char *name,
                            const uint32_t *ids,
                            size_t len,
                            struct RsLabelSet **out);

/**
 * # Safety
 * `labels` must be null or a handle not yet freed.
 */
void rs_labels_free(struct RsLabelSet *labels);

/**
 * Fits `n_bins` equal-width bins per dimension on `batch` and computes all
 * measures for each label set.
 *
 * # Safety
 * `batch` must be a live handle, `sets` must point to `n_sets` live label
 * set handles, `opts` must be null (defaults) or readable, and `out` must be
 * writable.
 */
enum RsStatus rs_analyze(const struct RsBatch *batch,
                         const struct RsLabelSet *const *sets,
                         size_t n_sets,
                         size_t n_bins,
                         const struct RsAnalyzeOptions *opts,
                         struct RsReport **out);

/**
 * # Safety
 * `report` must be null or a live handle.
 */
double rs_report_information(const struct RsReport *report);

/**
 * # Safety
 * `report` must be null or a live handle.
 */
size_t rs_report_set_count(const struct RsReport *report);

/**
 * Reads one measure of the label set `set`. Fails with `Data` when the set
 * failed to compute or the measure is undefined (disentanglement with fewer
 * than two active labels).
 *
 * # Safety
 * `report` must be a live handle, `set` a nul-terminated string and `value`
 * writable.
 */
enum RsStatus rs_report_measure(const struct RsReport *report,
                                const char *set,
                                enum RsMeasure measure,
                                double *value);

/**
 * Serializes the report as pretty JSON; free the string with
 * [`rs_string_free`].
 *
 * # Safety
 * `report` must be a live handle and `out` writable.
 */
enum RsStatus rs_report_to_json(const struct RsReport *report, char **out);

/**
 * # Safety
 * `report` must be null or a handle not yet freed.
 */
void rs_report_free(struct RsReport *report);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void rs_string_free(char *s);

/**
 * Spearman rank correlation with a two-sided p-value from the t
 * approximation. `p_two_sided` may be null.
 *
 * # Safety
 * `xs` and `ys` must point to `n` doubles; `rho` must be writable.
 */
enum RsStatus rs_spearman(const double *xs,
                          const double *ys,
                          size_t n,
                          double *rho,
                          double *p_two_sided);

/**
 * Writes a JSONL tokens file. Sentence `i` takes the next
 * `sentence_lengths[i]` entries of `tokens` (and of `pos`, when non-null).
 *
 * # Safety
 * `path` must be a nul-terminated string; `tokens` (and `pos`, if non-null)
 * must point to `n_tokens` nul-terminated strings; `sentence_lengths` must
 * point to `n_sentences` values.
 */
enum RsStatus rs_write_tokens(const char *path,
                              const char *const *tokens,
                              const char *const *pos,
                              size_t n_tokens,
                              const size_t *sentence_lengths,
                              size_t n_sentences);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REPRSTRUCT_H */
