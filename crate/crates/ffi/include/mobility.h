#ifndef MOBILITY_H
#define MOBILITY_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code of every fallible call.
 */
typedef enum MobStatus {
  MOB_STATUS_OK = 0,
  MOB_STATUS_NULL_POINTER = 1,
  MOB_STATUS_INVALID_INPUT = 2,
  /**
   * The quantity is mathematically undefined for the arguments.
   */
  MOB_STATUS_UNDEFINED = 3,
  MOB_STATUS_OUT_OF_RANGE = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  MOB_STATUS_INTERNAL = 5,
} MobStatus;

/**
 * Opaque PSIS-LOO result.
 */
typedef struct MobLoo MobLoo;

/**
 * Opaque list of stop events.
 */
typedef struct MobStopEvents MobStopEvents;

/**
 * One detected stop event and the stop location it was grouped into.
 */
typedef struct MobStopEvent {
  int64_t start_time;
  int64_t end_time;
  double medoid_lat;
  double medoid_lon;
  uint64_t n_pings;
  uint32_t location_id;
} MobStopEvent;

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library from the same thread.
 */
const char *mob_last_error(void);

/**
 * Great-circle distance in meters.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MobStatus mob_haversine(double lat1, double lon1, double lat2, double lon2, double *out);

/**
 * Detects stop events in one user's time-ordered pings and groups them into
 * stop locations with the default DBSCAN settings for `delta_s`.
 *
 * # Safety
 * `timestamps`, `lats` and `lons` must each hold `n` values; `out` must be
 * a valid pointer. Release the handle with [`mob_stop_events_free`].
 */
enum MobStatus mob_detect_stops(const int64_t *timestamps,
                                const double *lats,
                                const double *lons,
                                size_t n,
                                double delta_s,
                                int64_t delta_t,
                                struct MobStopEvents **out);

/**
 * Number of events in the handle; 0 for null.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
size_t mob_stop_events_len(const struct MobStopEvents *h);

/**
 * Copies event `i` into `out`.
 *
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
enum MobStatus mob_stop_events_get(const struct MobStopEvents *h,
                                   size_t i,
                                   struct MobStopEvent *out);

/**
 * # Safety
 * `h` must be null or a handle from [`mob_detect_stops`] not yet freed.
 */
void mob_stop_events_free(struct MobStopEvents *h);

/**
 * Symbol count over grammar size of the Sequitur grammar of `symbols`.
 *
 * # Safety
 * `symbols` must hold `n` values and `out` must be valid.
 */
enum MobStatus mob_compression_ratio(const uint32_t *symbols, size_t n, double *out);

/**
 * Null-model probability that two stays of `duration` minutes overlap by at
 * least `eps` minutes on a circular day of `day_len` minutes.
 *
 * # Safety
 * `out` must be valid.
 */
enum MobStatus mob_colocation_prob(double duration, double eps, double day_len, double *out);

/**
 * Expected overlap in minutes given co-location. `half_excess` selects the
 * `(d - 15) / 2` approximation instead of the exact conditional mean.
 *
 * # Safety
 * `out` must be valid.
 */
enum MobStatus mob_colocation_duration(double duration,
                                       double eps,
                                       double day_len,
                                       bool half_excess,
                                       double *out);

/**
 * PSIS-LOO from a draw-major log-likelihood matrix: entry `s * n_obs + i`
 * is draw `s`, observation `i`.
 *
 * # Safety
 * `log_lik` must hold `n_draws * n_obs` values and `out` must be valid.
 * Release the handle with [`mob_loo_free`].
 */
enum MobStatus mob_psis_loo(const double *log_lik,
                            size_t n_draws,
                            size_t n_obs,
                            struct MobLoo **out);

/**
 * Total, standard error and whether any Pareto k exceeds 0.7.
 *
 * # Safety
 * `h` must be a live handle; each out-pointer must be valid or null.
 */
enum MobStatus mob_loo_summary(const struct MobLoo *h, double *loo, double *se, bool *warning);

/**
 * Number of observations in the result; 0 for null.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
size_t mob_loo_len(const struct MobLoo *h);

/**
 * Copies the pointwise values and Pareto k of every observation. Either
 * buffer may be null; non-null buffers must hold `len` values, which must
 * equal [`mob_loo_len`].
 *
 * # Safety
 * As above.
 */
enum MobStatus mob_loo_pointwise(const struct MobLoo *h,
                                 double *pointwise,
                                 double *pareto_k,
                                 size_t len);

/**
 * # Safety
 * `h` must be null or a handle from [`mob_psis_loo`] not yet freed.
 */
void mob_loo_free(struct MobLoo *h);

/**
 * Normalised location entropy of the weights, in [0, 1].
 *
 * # Safety
 * `weights` must hold `n` values and `out` must be valid.
 */
enum MobStatus mob_location_entropy(const double *weights, size_t n, double *out);

/**
 * Weighted radius of gyration in meters.
 *
 * # Safety
 * `lats`, `lons` and `weights` must each hold `n` values; `out` must be
 * valid.
 */
enum MobStatus mob_radius_of_gyration(const double *lats,
                                      const double *lons,
                                      const double *weights,
                                      size_t n,
                                      double *out);

#endif  /* MOBILITY_H */
