#ifndef STABLE_REGULARITY_H
#define STABLE_REGULARITY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes mirroring the CLI exit codes.
 */
typedef enum SrStatus {
  Ok = 0,
  NotSatisfied = 1,
  InputError = 2,
  CapabilityError = 3,
  InternalError = 4,
} SrStatus;

/**
 * Opaque matrix handle.
 */
typedef struct SrMatrix SrMatrix;

/**
 * Opaque partition-report handle.
 */
typedef struct SrReport SrReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message for this thread, or NULL. Free with
 * `sr_string_free`.
 */
char *sr_last_error_message(void);

/**
 * Free a string returned by this library.
 *
 * # Safety
 * `s` must have been returned by a function of this library and not freed
 * yet.
 */
void sr_string_free(char *s);

/**
 * Create a matrix from a dense row-major buffer. `signed_range` selects
 * `[-1,1]` entries; otherwise entries must lie in `[0,1]`.
 *
 * # Safety
 * `data` must point to `rows * cols` readable doubles; `out` must be a
 * valid location for a handle.
 */
enum SrStatus sr_matrix_new(uintptr_t rows,
                            uintptr_t cols,
                            const double *data,
                            bool signed_range,
                            struct SrMatrix **out);

/**
 * Read a matrix from a CSV file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid.
 */
enum SrStatus sr_matrix_read_csv(const char *path, struct SrMatrix **out);

/**
 * Generate a matrix from a JSON generator spec (same schema as the CLI).
 *
 * # Safety
 * `spec_json` must be a NUL-terminated string; `out` must be valid.
 */
enum SrStatus sr_matrix_generate_json(const char *spec_json, struct SrMatrix **out);

/**
 * # Safety
 * `m` must be a handle from this library, not yet freed.
 */
void sr_matrix_free(struct SrMatrix *m);

/**
 * Matrix dimensions.
 *
 * # Safety
 * `m` must be a live handle; out-pointers may be NULL to skip.
 */
enum SrStatus sr_matrix_shape(const struct SrMatrix *m, uintptr_t *rows, uintptr_t *cols);

/**
 * Exact stability index: the largest chain length at threshold `delta`
 * (plain kind when `star` is false), capped at `k_max`.
 *
 * # Safety
 * `m` must be a live handle; out-pointers must be valid.
 */
enum SrStatus sr_stability_index(const struct SrMatrix *m,
                                 double delta,
                                 bool star,
                                 uintptr_t k_max,
                                 uintptr_t *out_index,
                                 bool *out_exact);

/**
 * Homogeneity of the full block pair at `(delta; gamma, epsilon)`.
 * `SR_STATUS_OK` with `*out_found = false` is an honest negative.
 *
 * # Safety
 * `m` must be a live handle; out-pointers must be valid.
 */
enum SrStatus sr_check_homogeneous(const struct SrMatrix *m,
                                   double delta,
                                   double gamma,
                                   double epsilon,
                                   bool *out_found,
                                   double *out_r,
                                   double *out_s);

/**
 * Rectangle-pseudorandomness measurement. Exact mode enumerates the
 * smaller side (capped); otherwise a seeded alternating ascent reports a
 * lower bound and `min(||f||_1, 1)` as upper bound.
 *
 * # Safety
 * `m` must be a live handle; out-pointers must be valid.
 */
enum SrStatus sr_pseudorandomness(const struct SrMatrix *m,
                                  bool exact,
                                  uint64_t seed,
                                  double *out_lower,
                                  double *out_upper,
                                  bool *out_exact);

/**
 * Search for a homogeneous partition pair by greedy refinement with a
 * constant decay `sigma`. Returns `SR_STATUS_OK` with a report handle in
 * all regular outcomes; `NotSatisfied` is reflected in
 * `sr_report_satisfied`, not the status.
 *
 * # Safety
 * `m` must be a live handle; `out` must be valid.
 */
enum SrStatus sr_find_partition(const struct SrMatrix *m,
                                double delta,
                                double epsilon,
                                double sigma,
                                uintptr_t max_blocks,
                                uintptr_t max_rounds,
                                struct SrReport **out);

/**
 * # Safety
 * `r` must be a handle from this library, not yet freed.
 */
void sr_report_free(struct SrReport *r);

/**
 * Whether the report satisfies the homogeneity conclusion.
 *
 * # Safety
 * `r` must be a live handle.
 */
bool sr_report_satisfied(const struct SrReport *r);

/**
 * Block counts of the report's partitions.
 *
 * # Safety
 * `r` must be a live handle; out-pointers may be NULL to skip.
 */
enum SrStatus sr_report_block_counts(const struct SrReport *r, uintptr_t *m, uintptr_t *n);

/**
 * The full report as a JSON string; free with `sr_string_free`.
 *
 * # Safety
 * `r` must be a live handle; `out` must be valid.
 */
enum SrStatus sr_report_to_json(const struct SrReport *r, char **out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* STABLE_REGULARITY_H */
