/* C interface of the dbvp library. Generated by cbindgen; do not edit. */

#ifndef DBVP_H
#define DBVP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum DbvpStatus {
  DBVP_STATUS_OK = 0,
  /**
   * File could not be read or written.
   */
  DBVP_STATUS_IO = 1,
  /**
   * Configuration text rejected.
   */
  DBVP_STATUS_CONFIG = 2,
  /**
   * Numerical precondition failed (ellipticity, boundary coefficients, solver).
   */
  DBVP_STATUS_PRECONDITION = 3,
  /**
   * A probe did not converge.
   */
  DBVP_STATUS_INSTABILITY = 4,
  /**
   * A required pointer argument was null.
   */
  DBVP_STATUS_NULL_POINTER = 5,
  /**
   * An argument had an invalid value (length mismatch, bad UTF-8, ...).
   */
  DBVP_STATUS_INVALID_ARGUMENT = 6,
  /**
   * The library panicked; the handle arguments should be considered unusable.
   */
  DBVP_STATUS_PANIC = 7,
} DbvpStatus;

/**
 * Opaque discrete field handle.
 */
typedef struct DbvpField DbvpField;

/**
 * Opaque problem handle: operator, boundary operator and grid.
 */
typedef struct DbvpProblem DbvpProblem;

/**
 * Complex number with the memory layout of `double _Complex`.
 */
typedef struct DbvpComplex {
  double re;
  double im;
} DbvpComplex;

/**
 * Characteristic roots κ± and the leading coefficient a_nn.
 */
typedef struct DbvpKappa {
  struct DbvpComplex kplus;
  struct DbvpComplex kminus;
  struct DbvpComplex a_n;
} DbvpKappa;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *dbvp_version(void);

/**
 * Message of the last failed call on this thread ("" after a success).
 * The pointer stays valid until the next library call on this thread.
 */
const char *dbvp_last_error_message(void);

/**
 * Build a problem from configuration text (the `key = value` format of
 * the command-line tool).
 *
 * # Safety
 * `config_text` must be a NUL-terminated string and `out` a valid pointer
 * to writable storage for one handle.
 */
enum DbvpStatus dbvp_problem_from_config(const char *config_text, struct DbvpProblem **out);

/**
 * Release a problem (null is ignored).
 *
 * # Safety
 * `problem` must be null or a handle from [`dbvp_problem_from_config`]
 * that has not been freed.
 */
void dbvp_problem_free(struct DbvpProblem *problem);

/**
 * Grid dimensions (tangential points, normal points) of a problem.
 *
 * # Safety
 * `problem` must be a live handle; the output pointers must be writable.
 */
enum DbvpStatus dbvp_problem_grid(const struct DbvpProblem *problem,
                                  uintptr_t *tangential_points,
                                  uintptr_t *normal_points);

/**
 * Zero field on the problem grid.
 *
 * # Safety
 * `problem` must be a live handle and `out` writable.
 */
enum DbvpStatus dbvp_field_zeros(const struct DbvpProblem *problem, struct DbvpField **out);

/**
 * Field on the problem grid from `len` values in tangential-major order
 * (value (j, i) at index j·normal_points + i).
 *
 * # Safety
 * `data` must point to `len` readable values; `problem` must be a live
 * handle and `out` writable.
 */
enum DbvpStatus dbvp_field_from_data(const struct DbvpProblem *problem,
                                     const struct DbvpComplex *data,
                                     uintptr_t len,
                                     struct DbvpField **out);

/**
 * Number of values of a field (0 for null).
 *
 * # Safety
 * `field` must be null or a live handle.
 */
uintptr_t dbvp_field_len(const struct DbvpField *field);

/**
 * Copy the field values into `dst`, which must hold exactly `len` values.
 *
 * # Safety
 * `field` must be a live handle and `dst` writable for `len` values.
 */
enum DbvpStatus dbvp_field_read(const struct DbvpField *field,
                                struct DbvpComplex *dst,
                                uintptr_t len);

/**
 * Discrete L² norm of a field.
 *
 * # Safety
 * `field` must be a live handle and `out` writable.
 */
enum DbvpStatus dbvp_field_l2_norm(const struct DbvpField *field, double *out);

/**
 * Release a field (null is ignored).
 *
 * # Safety
 * `field` must be null or a live handle from this library.
 */
void dbvp_field_free(struct DbvpField *field);

/**
 * Write a field to `path` (binary file plus `path.json` descriptor).
 *
 * # Safety
 * `field` must be a live handle and `path` a NUL-terminated string.
 */
enum DbvpStatus dbvp_field_save(const struct DbvpField *field, const char *path);

/**
 * Read a field written by [`dbvp_field_save`] or the command-line tool.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum DbvpStatus dbvp_field_load(const char *path, struct DbvpField **out);

/**
 * Roots κ± of the boundary symbol at tangential point x1, frequency
 * ξ1, spectral parameter ζ and sector angle θ.
 *
 * # Safety
 * `problem` must be a live handle and `out` writable.
 */
enum DbvpStatus dbvp_kappa_roots(const struct DbvpProblem *problem,
                                 double x1,
                                 double xi1,
                                 double zeta,
                                 double theta,
                                 struct DbvpKappa *out);

/**
 * New field (A_T − λ)^{−1}f.
 *
 * # Safety
 * `problem` and `f` must be live handles and `out` writable.
 */
enum DbvpStatus dbvp_apply_resolvent(const struct DbvpProblem *problem,
                                     double lambda_re,
                                     double lambda_im,
                                     const struct DbvpField *f,
                                     struct DbvpField **out);

/**
 * Estimate of ‖λ(A_T − λ)^{−1}‖ at −λ = e^{iθ}μ² from `trials` random
 * start fields (streams 0..trials of `seed`) and `power_steps` power
 * iterations each.
 *
 * # Safety
 * `problem` must be a live handle and `out` writable.
 */
enum DbvpStatus dbvp_sector_norm(const struct DbvpProblem *problem,
                                 double theta,
                                 double mu,
                                 uint32_t trials,
                                 uint32_t power_steps,
                                 uint64_t seed,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DBVP_H */
