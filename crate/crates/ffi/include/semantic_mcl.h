#ifndef SEMANTIC_MCL_H
#define SEMANTIC_MCL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SmclStatus {
  SMCL_STATUS_OK = 0,
  SMCL_STATUS_NULL_POINTER = 1,
  SMCL_STATUS_INVALID_ARGUMENT = 2,
  SMCL_STATUS_IO = 3,
  SMCL_STATUS_FORMAT = 4,
  SMCL_STATUS_UNKNOWN_CLASS = 5,
  SMCL_STATUS_NO_FREE_SPACE = 6,
  SMCL_STATUS_BUFFER_TOO_SMALL = 7,
  SMCL_STATUS_INTERNAL = 8,
} SmclStatus;

/**
 * A particle filter bound to a map. Keeps the map alive on its own.
 */
typedef struct SmclFilter SmclFilter;

/**
 * A loaded semantic map and its distance field.
 */
typedef struct SmclMap SmclMap;

/**
 * Filter and sensor-model parameters. Start from [`smcl_params_default`].
 */
typedef struct SmclParams {
  uint32_t n_particles;
  /**
   * Odometry noise per unit of motion (x, y, theta).
   */
  double sigma_odom[3];
  double noise_floor[3];
  double d_xy;
  double d_theta;
  uint64_t rng_seed;
  double reinjection_fraction;
  double sigma_g;
  double sigma_s;
  double tau_t;
  double tof_valid_range;
  uint32_t min_valid_beams;
  double miss_penalty;
  double max_trace_range;
  double camera_hfov_deg;
  uint32_t image_width;
  uint32_t image_height;
  /**
   * Ignore detections and weigh with the ToF ranges alone.
   */
  bool range_only;
} SmclParams;

typedef struct SmclTofFrame {
  double timestamp;
  /**
   * Front grid, rows top to bottom, columns left to right.
   */
  float front[8][8];
  /**
   * Middle rows of the left, back and right sensors.
   */
  float sides[3][8];
} SmclTofFrame;

typedef struct SmclDetection {
  uint32_t class_index;
  /**
   * x_min, y_min, x_max, y_max in pixels.
   */
  double bbox[4];
  double confidence;
} SmclDetection;

typedef struct SmclPose {
  double x;
  double y;
  double theta;
} SmclPose;

typedef struct SmclParticle {
  float x;
  float y;
  float theta;
  float weight;
} SmclParticle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message on this thread, or null after a successful call. The
 * pointer stays valid until the next call into this library on the thread.
 */
const char *smcl_last_error_message(void);

struct SmclParams smcl_params_default(void);

/**
 * Loads a map image and its annotation file and builds the distance field
 * truncated at `r_max` meters.
 *
 * # Safety
 * The paths must be null or NUL-terminated strings; `out` must be null or
 * writable.
 */
enum SmclStatus smcl_map_load(const char *image_path,
                              const char *annotation_path,
                              double r_max,
                              struct SmclMap **out);

/**
 * # Safety
 * `map` must be null or a handle from [`smcl_map_load`] not yet freed.
 */
void smcl_map_free(struct SmclMap *map);

/**
 * # Safety
 * `map` must be a live handle; the outputs must be null or writable.
 */
enum SmclStatus smcl_map_info(const struct SmclMap *map,
                              uint32_t *width,
                              uint32_t *height,
                              double *resolution,
                              uint32_t *class_count);

/**
 * Index of a class name, as used in [`SmclDetection::class_index`].
 *
 * # Safety
 * `map` must be a live handle, `name` a NUL-terminated string and `index`
 * writable.
 */
enum SmclStatus smcl_map_class_index(const struct SmclMap *map, const char *name, uint32_t *index);

/**
 * Creates a filter with particles spread uniformly over the map's free
 * space. The filter holds its own reference to the map.
 *
 * # Safety
 * `map` must be a live handle, `params` readable and `out` writable.
 */
enum SmclStatus smcl_filter_new(const struct SmclMap *map,
                                const struct SmclParams *params,
                                struct SmclFilter **out);

/**
 * # Safety
 * `filter` must be null or a handle from [`smcl_filter_new`] not yet freed.
 */
void smcl_filter_free(struct SmclFilter *filter);

/**
 * Propagates every particle by a body-frame odometry delta.
 *
 * # Safety
 * `filter` must be a live handle.
 */
enum SmclStatus smcl_filter_motion(struct SmclFilter *filter, double dx, double dy, double dtheta);

/**
 * Weighs the particles with one ToF frame and the detections taken with it,
 * then resamples. `detections` may be null when `n_detections` is 0. Nothing
 * happens until the robot has moved past the gating thresholds since the
 * last update, or when too few ToF zones are valid; `applied` (if not null)
 * tells which.
 *
 * # Safety
 * `filter` must be a live handle, `frame` readable, `detections` readable
 * for `n_detections` elements and `applied` null or writable.
 */
enum SmclStatus smcl_filter_update(struct SmclFilter *filter,
                                   const struct SmclTofFrame *frame,
                                   const struct SmclDetection *detections,
                                   size_t n_detections,
                                   bool *applied);

/**
 * Weighted mean position and circular-mean heading of the particles.
 *
 * # Safety
 * `filter` must be a live handle and `pose` writable.
 */
enum SmclStatus smcl_filter_estimate(const struct SmclFilter *filter, struct SmclPose *pose);

/**
 * # Safety
 * `filter` must be a live handle.
 */
size_t smcl_filter_particle_count(const struct SmclFilter *filter);

/**
 * Copies the particles into `out`, which must hold the whole set.
 *
 * # Safety
 * `filter` must be a live handle and `out` writable for `capacity` elements.
 */
enum SmclStatus smcl_filter_copy_particles(const struct SmclFilter *filter,
                                           struct SmclParticle *out,
                                           size_t capacity);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMANTIC_MCL_H */
