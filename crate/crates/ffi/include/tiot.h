#ifndef TIOT_H
#define TIOT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TiotStatus {
  TIOT_STATUS_OK = 0,
  TIOT_STATUS_NULL_POINTER = 1,
  TIOT_STATUS_INVALID_ARGUMENT = 2,
  TIOT_STATUS_NO_CONVERGENCE = 3,
  TIOT_STATUS_SINGULAR = 4,
  TIOT_STATUS_PROPAGATION = 5,
  TIOT_STATUS_OUT_OF_RANGE = 6,
  TIOT_STATUS_IO = 7,
  TIOT_STATUS_PANIC = 8,
} TiotStatus;

typedef enum TiotClass {
  TIOT_CLASS_MINIMUM = 0,
  TIOT_CLASS_MAXIMUM = 1,
  TIOT_CLASS_SADDLE = 2,
  TIOT_CLASS_DEGENERATE = 3,
} TiotClass;

typedef enum TiotTermination {
  TIOT_TERMINATION_TOF_ABOVE_MAX = 0,
  TIOT_TERMINATION_TOF_BELOW_MIN = 1,
  TIOT_TERMINATION_SINGULARITY_PI = 2,
  TIOT_TERMINATION_CYCLE_CLOSED = 3,
  TIOT_TERMINATION_STEP_CAP = 4,
  TIOT_TERMINATION_CORRECTOR_FAILURE = 5,
} TiotTermination;

typedef enum TiotBranch {
  TIOT_BRANCH_SHORT = 0,
  TIOT_BRANCH_LONG = 1,
} TiotBranch;

typedef enum TiotDomain {
  TIOT_DOMAIN_ANGULAR = 0,
  TIOT_DOMAIN_TEMPORAL = 1,
} TiotDomain;

/**
 * Departure and arrival orbits with a Lambert branch.
 */
typedef struct TiotContext TiotContext;

typedef struct TiotFamily TiotFamily;

typedef struct TiotScenario TiotScenario;

typedef struct TiotElements {
  double a;
  double e;
  double i;
  double raan;
  double argp;
  double m0;
} TiotElements;

typedef struct TiotDesignPoint {
  double m1;
  double m2;
  double tof;
} TiotDesignPoint;

typedef struct TiotCost {
  /**
   * Total impulse [km/s].
   */
  double j;
  double dv1[3];
  double dv2[3];
  double djdm1;
  double djdm2;
  /**
   * Per 1000 s.
   */
  double djdt_total;
  double theta;
} TiotCost;

typedef struct TiotMember {
  struct TiotDesignPoint x;
  double j;
  enum TiotClass hclass;
  double theta;
  /**
   * Unit tangent in scaled coordinates.
   */
  double tangent[3];
  /**
   * 1 satisfied, 0 violated, -1 not checked.
   */
  int32_t pvt;
} TiotMember;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *tiot_last_error(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *tiot_version(void);

/**
 * Builds a context from two orbits. `mu` in km^3/s^2, `branch` a
 * `TiotBranch` value.
 *
 * # Safety
 * `dep` and `arr` point to valid elements; `out` is writable.
 */
enum TiotStatus tiot_context_new(const struct TiotElements *dep,
                                 const struct TiotElements *arr,
                                 double mu,
                                 int32_t branch_flag,
                                 struct TiotContext **out);

/**
 * # Safety
 * `ctx` comes from this library and is not used afterwards; null is a no-op.
 */
void tiot_context_free(struct TiotContext *ctx);

/**
 * Parses a scenario from NUL-terminated TOML text.
 *
 * # Safety
 * `toml` is a valid C string; `out` is writable.
 */
enum TiotStatus tiot_scenario_from_toml(const char *toml, struct TiotScenario **out);

/**
 * The bundled baseline scenario.
 *
 * # Safety
 * `out` is writable.
 */
enum TiotStatus tiot_scenario_baseline(struct TiotScenario **out);

/**
 * Context for one branch of a scenario.
 *
 * # Safety
 * `scn` comes from this library; `out` is writable.
 */
enum TiotStatus tiot_scenario_context(const struct TiotScenario *scn,
                                      int32_t branch_flag,
                                      struct TiotContext **out);

/**
 * # Safety
 * `scn` comes from this library and is not used afterwards; null is a no-op.
 */
void tiot_scenario_free(struct TiotScenario *scn);

/**
 * Cost and analytic derivatives at a design point.
 *
 * # Safety
 * Pointers are valid; `out` is writable.
 */
enum TiotStatus tiot_evaluate_cost(const struct TiotContext *ctx,
                                   const struct TiotDesignPoint *x,
                                   struct TiotCost *out);

/**
 * Domain gradient of the cost (`domain` a `TiotDomain` value) into `out[2]`,
 * per radian or per 1000 s.
 *
 * # Safety
 * Pointers are valid; `out` holds two doubles.
 */
enum TiotStatus tiot_gradient(const struct TiotContext *ctx,
                              const struct TiotDesignPoint *x,
                              int32_t deriv_domain,
                              double *out);

/**
 * Zero-revolution Lambert arc from `r1` to `r2` in `tof`: transfer
 * velocities at both ends.
 *
 * # Safety
 * `r1`, `r2`, `v1`, `v2` point to three doubles each.
 */
enum TiotStatus tiot_lambert(const double *r1,
                             const double *r2,
                             double tof,
                             double mu,
                             int32_t branch_flag,
                             double *v1,
                             double *v2);

/**
 * Two-body propagation over `dt`. When `phi` is not null it receives the
 * 6x6 state transition matrix, row-major.
 *
 * # Safety
 * `r`, `v`, `r_out`, `v_out` point to three doubles each; `phi` is null or
 * holds 36.
 */
enum TiotStatus tiot_propagate(const double *r,
                               const double *v,
                               double dt,
                               double mu,
                               double *r_out,
                               double *v_out,
                               double *phi);

/**
 * Traces the family of stationary points through `seed` with the default
 * continuation settings.
 *
 * # Safety
 * Pointers are valid; `out` is writable.
 */
enum TiotStatus tiot_trace_family(const struct TiotContext *ctx,
                                  const struct TiotDesignPoint *seed,
                                  int32_t deriv_domain,
                                  struct TiotFamily **out);

/**
 * Number of members, 0 for a null handle.
 *
 * # Safety
 * `f` is null or comes from this library.
 */
size_t tiot_family_len(const struct TiotFamily *f);

/**
 * # Safety
 * `f` comes from this library; `out` is writable.
 */
enum TiotStatus tiot_family_member(const struct TiotFamily *f,
                                   size_t index,
                                   struct TiotMember *out);

/**
 * Why the trace stopped at either end.
 *
 * # Safety
 * `f` comes from this library; `end1` and `end2` are writable.
 */
enum TiotStatus tiot_family_ends(const struct TiotFamily *f,
                                 enum TiotTermination *end1,
                                 enum TiotTermination *end2);

/**
 * # Safety
 * `f` comes from this library and is not used afterwards; null is a no-op.
 */
void tiot_family_free(struct TiotFamily *f);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TIOT_H */
