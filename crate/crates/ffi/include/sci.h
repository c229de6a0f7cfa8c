#ifndef SCI_H
#define SCI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SciMaskKind {
  SCI_MASK_KIND_BERNOULLI = 0,
  SCI_MASK_KIND_COVERED_BERNOULLI = 1,
  SCI_MASK_KIND_GAUSSIAN = 2,
  SCI_MASK_KIND_SHIFTED_BASE = 3,
  SCI_MASK_KIND_CONJUGATE = 4,
} SciMaskKind;

/**
 * Result code of every fallible call.
 */
typedef enum SciStatus {
  SCI_STATUS_OK = 0,
  SCI_STATUS_NULL_POINTER = 1,
  SCI_STATUS_INVALID_ARGUMENT = 2,
  SCI_STATUS_DIMENSION_MISMATCH = 3,
  SCI_STATUS_CAPACITY = 4,
  SCI_STATUS_SINGULAR_OPERATOR = 5,
  SCI_STATUS_DECOMPOSITION = 6,
  SCI_STATUS_FORMAT = 7,
  SCI_STATUS_UNSUPPORTED = 8,
  SCI_STATUS_IO = 9,
  SCI_STATUS_PANIC = 10,
} SciStatus;

typedef struct SciCube SciCube;

typedef struct SciMasks SciMasks;

typedef struct SciMeasurement SciMeasurement;

typedef struct SciOperator SciOperator;

/**
 * Summary of a Monte Carlo recovery check.
 */
typedef struct SciTheoryReport {
  size_t trials;
  size_t successes;
  double success_frequency;
  double floor;
  double margin;
  double eta;
  bool vacuous;
  bool pass;
} SciTheoryReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the next failing call.
 */
const char *sci_last_error(void);

/**
 * Process exit code the command line would use for `status` (0 for `SCI_OK`).
 */
int32_t sci_status_exit_code(enum SciStatus status);

/**
 * Copies `nx*ny*nt` values (frame-major, column-major within a frame) into a new cube.
 *
 * # Safety
 * `data` must point to `nx*ny*nt` readable doubles; `out` must be writable.
 */
enum SciStatus sci_cube_new(size_t nx,
                            size_t ny,
                            size_t nt,
                            const double *data,
                            struct SciCube **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SciStatus sci_cube_read(const char *path, struct SciCube **out);

/**
 * # Safety
 * `cube` must be a live handle and `path` a NUL-terminated string.
 */
enum SciStatus sci_cube_write(const struct SciCube *cube, const char *path);

/**
 * # Safety
 * `cube` must be a live handle; the dim pointers must be writable.
 */
enum SciStatus sci_cube_dims(const struct SciCube *cube, size_t *nx, size_t *ny, size_t *nt);

/**
 * # Safety
 * `cube` must be a live handle; `dst` must hold `len` doubles.
 */
enum SciStatus sci_cube_copy_data(const struct SciCube *cube, double *dst, size_t len);

/**
 * # Safety
 * `cube` must come from this library and not be used afterwards. NULL is ignored.
 */
void sci_cube_free(struct SciCube *cube);

/**
 * Draws a seeded mask stack. `param` is the open probability for the
 * binary kinds and the row shift for `SCI_MASK_KIND_SHIFTED_BASE`.
 *
 * # Safety
 * `out` must be writable.
 */
enum SciStatus sci_masks_generate(enum SciMaskKind kind,
                                  double param,
                                  size_t nx,
                                  size_t ny,
                                  size_t nt,
                                  uint64_t seed,
                                  struct SciMasks **out);

/**
 * # Safety
 * `values` must point to `nx*ny*nt` readable doubles; `out` must be writable.
 */
enum SciStatus sci_masks_from_values(size_t nx,
                                     size_t ny,
                                     size_t nt,
                                     const double *values,
                                     struct SciMasks **out);

/**
 * # Safety
 * `masks` must come from this library and not be used afterwards. NULL is ignored.
 */
void sci_masks_free(struct SciMasks *masks);

/**
 * CACTI operator, or CASSI with the given dispersion when `cassi` is true.
 * The masks are copied.
 *
 * # Safety
 * `masks` must be a live handle; `out` must be writable.
 */
enum SciStatus sci_operator_new(const struct SciMasks *masks,
                                bool cassi,
                                size_t step,
                                size_t reference_channel,
                                struct SciOperator **out);

/**
 * # Safety
 * `op` must be a live handle; `rows` and `cols` must be writable.
 */
enum SciStatus sci_operator_measurement_dims(const struct SciOperator *op,
                                             size_t *rows,
                                             size_t *cols);

/**
 * # Safety
 * `op` must come from this library and not be used afterwards. NULL is ignored.
 */
void sci_operator_free(struct SciOperator *op);

/**
 * Encodes `cube`; adds seeded Gaussian noise when `sigma > 0`.
 *
 * # Safety
 * `op` and `cube` must be live handles; `out` must be writable.
 */
enum SciStatus sci_forward(const struct SciOperator *op,
                           const struct SciCube *cube,
                           double sigma,
                           uint64_t seed,
                           struct SciMeasurement **out);

/**
 * Wraps raw detector values for `op`. `sigma` is the noise level assumed by solvers.
 *
 * # Safety
 * `data` must point to `len` readable doubles; `op` must be live; `out` writable.
 */
enum SciStatus sci_measurement_new(const struct SciOperator *op,
                                   const double *data,
                                   size_t len,
                                   double sigma,
                                   struct SciMeasurement **out);

/**
 * # Safety
 * `m` must be a live handle; `dst` must hold `len` doubles.
 */
enum SciStatus sci_measurement_copy_data(const struct SciMeasurement *m, double *dst, size_t len);

/**
 * # Safety
 * `m` must come from this library and not be used afterwards. NULL is ignored.
 */
void sci_measurement_free(struct SciMeasurement *m);

/**
 * Runs a registered solver (`"lsq"`, `"gap-tv"`, `"admm-tv"`, `"gmm"`,
 * `"sparse"`, `"desci"`, `"oracle"`). `max_iters` of 0 keeps the default;
 * a negative `tv_weight` keeps the default. `reference` may be NULL except
 * for the oracle.
 *
 * # Safety
 * Handles must be live, `solver` NUL-terminated and `out` writable.
 */
enum SciStatus sci_reconstruct(const struct SciOperator *op,
                               const struct SciMeasurement *y,
                               const char *solver,
                               size_t max_iters,
                               double tv_weight,
                               const struct SciCube *reference,
                               struct SciCube **out);

/**
 * PSNR in dB with peak 1, capped at 100 for identical cubes.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum SciStatus sci_psnr(const struct SciCube *reference,
                        const struct SciCube *estimate,
                        double *out);

/**
 * Mean SSIM over frames.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum SciStatus sci_ssim(const struct SciCube *reference,
                        const struct SciCube *estimate,
                        double *out);

/**
 * Monte Carlo recovery check over a uniform grid codebook with CACTI masks.
 * `codewords` selects exact codebook members instead of perturbed signals.
 *
 * # Safety
 * `out` must be writable.
 */
enum SciStatus sci_theorem_check(size_t nx,
                                 size_t ny,
                                 size_t nt,
                                 size_t levels,
                                 size_t trials,
                                 double epsilon,
                                 uint64_t seed,
                                 bool codewords,
                                 struct SciTheoryReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCI_H */
