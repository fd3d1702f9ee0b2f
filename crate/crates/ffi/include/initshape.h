#ifndef INITSHAPE_H
#define INITSHAPE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Scheme I: no corrective term.
#define INITSHAPE_SCHEME_I 1

// Scheme II: exact 2x2 corrective term.
#define INITSHAPE_SCHEME_II 2

// Scheme III: small-strain corrective term.
#define INITSHAPE_SCHEME_III 3

#define INITSHAPE_JACOBIAN_ANALYTIC 0

#define INITSHAPE_JACOBIAN_FD 1

#define INITSHAPE_FALLBACK_SCHEME_III 0

#define INITSHAPE_FALLBACK_SCHEME_I 1

#define INITSHAPE_FALLBACK_FAIL 2

// Same values as the command-line exit status.
#define INITSHAPE_STATUS_CONVERGED 0

#define INITSHAPE_STATUS_MAX_ITERATIONS 2

#define INITSHAPE_STATUS_DIVERGED 3

// Result codes.
typedef enum InitshapeError {
  INITSHAPE_ERROR_OK = 0,
  INITSHAPE_ERROR_NULL_POINTER = 1,
  INITSHAPE_ERROR_INVALID_ARGUMENT = 2,
  INITSHAPE_ERROR_PARSE = 3,
  INITSHAPE_ERROR_IO = 4,
  INITSHAPE_ERROR_FIELD_EVALUATION = 5,
  INITSHAPE_ERROR_NO_ANALYTIC_JACOBIAN = 6,
  INITSHAPE_ERROR_SINGULAR_SYSTEM = 7,
  INITSHAPE_ERROR_EXTERNAL = 8,
  INITSHAPE_ERROR_OUT_OF_RANGE = 9,
  INITSHAPE_ERROR_PANIC = 10,
} InitshapeError;

// Opaque ordered boundary curve.
typedef struct InitshapeCurve InitshapeCurve;

// Opaque convergence report of a solve.
typedef struct InitshapeReport InitshapeReport;

// Solver settings. Obtain defaults from [`initshape_solver_options_default`].
typedef struct InitshapeSolverOptions {
  // One of `INITSHAPE_SCHEME_*`.
  uint32_t scheme;
  // Stopping tolerance on the max residual norm.
  double epsilon;
  size_t max_iterations;
  // One of `INITSHAPE_JACOBIAN_*`.
  uint32_t jacobian;
  // Central-difference step; zero or negative selects the default.
  double fd_step;
  // One of `INITSHAPE_FALLBACK_*`.
  uint32_t fallback;
} InitshapeSolverOptions;

// Displacement callback: writes `U(x, y)` into `ux`, `uy` and returns 0 on
// success. It must be a pure function of its arguments.
typedef int (*InitshapeFieldFn)(void *user_data, double x, double y, double *ux, double *uy);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last error on this thread, or NULL. Valid until the next
// failing call on the same thread.
const char *initshape_last_error_message(void);

// Equally spaced points on a circle, counter-clockwise from angle 0.
enum InitshapeError initshape_curve_new_disc(double radius,
                                             size_t n_points,
                                             double center_x,
                                             double center_y,
                                             struct InitshapeCurve **out);

// Curve from `len` coordinate pairs.
enum InitshapeError initshape_curve_from_xy(const double *xs,
                                            const double *ys,
                                            size_t len,
                                            struct InitshapeCurve **out);

// Reads a geometry CSV (`x,y` header) from a file path.
enum InitshapeError initshape_curve_read_csv(const char *path, struct InitshapeCurve **out);

// Number of points, or 0 for a NULL handle.
size_t initshape_curve_len(const struct InitshapeCurve *curve);

enum InitshapeError initshape_curve_point(const struct InitshapeCurve *curve,
                                          size_t index,
                                          double *x,
                                          double *y);

void initshape_curve_free(struct InitshapeCurve *curve);

// Default options for a scheme: analytic Jacobians, 1000 iterations,
// scheme III fallback.
struct InitshapeSolverOptions initshape_solver_options_default(uint32_t scheme, double epsilon);

// Solves against the shear/volumetric field `U = (alpha (x + y), alpha (x - y))`.
enum InitshapeError initshape_solve_affine(const struct InitshapeCurve *desired,
                                           double alpha,
                                           const struct InitshapeSolverOptions *options,
                                           struct InitshapeReport **out);

// Solves against a caller-supplied displacement field. Only
// `INITSHAPE_JACOBIAN_FD` gives schemes II and III their gradients here.
enum InitshapeError initshape_solve_callback(const struct InitshapeCurve *desired,
                                             InitshapeFieldFn field,
                                             void *user_data,
                                             const struct InitshapeSolverOptions *options,
                                             struct InitshapeReport **out);

// One of `INITSHAPE_STATUS_*`, or -1 for a NULL handle.
int initshape_report_status(const struct InitshapeReport *report);

// Number of iteration records, or 0 for a NULL handle.
size_t initshape_report_iterations(const struct InitshapeReport *report);

// Max residual norm of record `index` (0-based; record `index` is iteration `index + 1`).
enum InitshapeError initshape_report_max_residual_norm(const struct InitshapeReport *report,
                                                       size_t index,
                                                       double *out);

// Measured rate `k` (0-based): max residual norm of record `k + 1` over record `k`.
enum InitshapeError initshape_report_rate(const struct InitshapeReport *report,
                                          size_t index,
                                          double *out);

// Final estimate of the initial geometry as a new curve handle.
enum InitshapeError initshape_report_initial_geometry(const struct InitshapeReport *report,
                                                      struct InitshapeCurve **out);

void initshape_report_free(struct InitshapeReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INITSHAPE_H */
