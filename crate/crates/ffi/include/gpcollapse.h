#ifndef GPCOLLAPSE_H
#define GPCOLLAPSE_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
enum GpcStatus
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  GPC_STATUS_OK = 0,
  GPC_STATUS_NULL_POINTER = 1,
  GPC_STATUS_CONFIG = 2,
  GPC_STATUS_DOMAIN = 3,
  GPC_STATUS_DEGENERATE = 4,
  GPC_STATUS_RESOLUTION = 5,
  GPC_STATUS_SOLVER = 6,
  GPC_STATUS_GRID_MISMATCH = 7,
  GPC_STATUS_BUFFER_SIZE = 8,
  GPC_STATUS_PANIC = 9,
  GPC_STATUS_OTHER = 10,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum GpcStatus GpcStatus;
#else
typedef int32_t GpcStatus;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

/**
 * Kind of external potential in [`GpcModelDesc`].
 */
enum GpcPotentialKind
#if defined(__cplusplus) || __STDC_VERSION__ >= 202311L
  : int32_t
#endif // defined(__cplusplus) || __STDC_VERSION__ >= 202311L
 {
  GPC_POTENTIAL_KIND_ZERO = 0,
  /**
   * `|x|^trap_q`.
   */
  GPC_POTENTIAL_KIND_TRAP = 1,
  /**
   * `-h0 * sum_j |x - z_j|^{-p_j}`.
   */
  GPC_POTENTIAL_KIND_SINGULAR = 2,
};
#ifndef __cplusplus
#if __STDC_VERSION__ >= 202311L
typedef enum GpcPotentialKind GpcPotentialKind;
#else
typedef int32_t GpcPotentialKind;
#endif // __STDC_VERSION__ >= 202311L
#endif // __cplusplus

typedef struct GpcModel GpcModel;

/**
 * Townes profile and its constants.
 */
typedef struct GpcProfile GpcProfile;

typedef struct GpcResult GpcResult;

typedef struct GpcSingularPoint {
  double x;
  double y;
  double p;
} GpcSingularPoint;

/**
 * Grid, couplings and potential of a model.
 */
typedef struct GpcModelDesc {
  /**
   * Half width `L` of the box `[-L, L)^2`.
   */
  double half_width;
  /**
   * Nodes per axis, a power of two.
   */
  size_t n;
  double a;
  double g;
  /**
   * A [`GpcPotentialKind`] value.
   */
  int32_t kind;
  double trap_q;
  double h0;
  const struct GpcSingularPoint *points;
  size_t n_points;
} GpcModelDesc;

typedef struct GpcEnergy {
  double kinetic;
  double potential;
  double quartic;
  double gravity;
  double total;
} GpcEnergy;

typedef struct GpcMinimizeOptions {
  double energy_tol;
  double residual_tol;
  size_t max_iter;
  /**
   * Critical strength for the domain check; computed when not positive.
   */
  double a_star;
} GpcMinimizeOptions;

typedef struct GpcResultInfo {
  size_t iterations;
  bool converged;
  double mu;
  double residual;
  double peak_x;
  double peak_y;
  double width;
} GpcResultInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the message of the last failure on this thread into `buf`
 * (NUL-terminated, truncated to `len`) and returns its full length.
 */
size_t gpc_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gpc_version(void);

/**
 * Solves for the Townes profile by shooting on `[0, r_max]` with step `dr`.
 */
GpcStatus gpc_profile_solve(double dr, double r_max, double tol, struct GpcProfile **out);

void gpc_profile_free(struct GpcProfile *profile);

/**
 * Critical contact strength `a*`.
 */
GpcStatus gpc_profile_a_star(const struct GpcProfile *profile, double *out);

/**
 * `D0`, the self-gravity of `Q0`.
 */
GpcStatus gpc_profile_d0(const struct GpcProfile *profile, double *out);

/**
 * `int Q0^2 |x|^{-p}` for `0 < p < 2`.
 */
GpcStatus gpc_profile_moment(const struct GpcProfile *profile, double p, double *out);

/**
 * `Q0(r)`.
 */
GpcStatus gpc_profile_eval(const struct GpcProfile *profile, double r, double *out);

/**
 * Builds the discrete model described by `desc`.
 */
GpcStatus gpc_model_new(const struct GpcModelDesc *desc, struct GpcModel **out);

void gpc_model_free(struct GpcModel *model);

/**
 * Nodes per axis of the model grid.
 */
GpcStatus gpc_model_n(const struct GpcModel *model, size_t *out);

/**
 * Energy of a unit-mass nonnegative field of `len = n * n` values.
 */
GpcStatus gpc_model_energy(const struct GpcModel *model,
                           const double *u,
                           size_t len,
                           struct GpcEnergy *out);

/**
 * Lagrange multiplier and relative Euler-Lagrange residual of a field.
 */
GpcStatus gpc_model_residual(const struct GpcModel *model,
                             const double *u,
                             size_t len,
                             double *mu,
                             double *residual);

/**
 * Library defaults for [`gpc_minimize`].
 */
struct GpcMinimizeOptions gpc_minimize_options_default(void);

/**
 * Minimizes the energy from the default seed. `opts` may be null.
 *
 * A run that stops without converging still returns `GPC_STATUS_OK`; check
 * `converged` in [`gpc_result_info`].
 */
GpcStatus gpc_minimize(const struct GpcModel *model,
                       const struct GpcMinimizeOptions *opts,
                       struct GpcResult **out);

void gpc_result_free(struct GpcResult *result);

GpcStatus gpc_result_energy(const struct GpcResult *result, struct GpcEnergy *out);

GpcStatus gpc_result_info(const struct GpcResult *result, struct GpcResultInfo *out);

/**
 * Copies the minimizer into `buf`, which must hold exactly `n * n` values.
 */
GpcStatus gpc_result_field(const struct GpcResult *result, double *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GPCOLLAPSE_H */
