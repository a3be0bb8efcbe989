#ifndef FAN_H
#define FAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum FanStatus {
  FAN_STATUS_OK = 0,
  FAN_STATUS_NULL_POINTER = 1,
  FAN_STATUS_DIMENSION = 2,
  FAN_STATUS_SHAPE = 3,
  FAN_STATUS_EMPTY_REGION = 4,
  FAN_STATUS_RANGE = 5,
  FAN_STATUS_FORMAT = 6,
  FAN_STATUS_NO_MEMORY = 7,
  FAN_STATUS_DEGENERATE_QUERY = 8,
  FAN_STATUS_CONFIG = 9,
  FAN_STATUS_IO = 10,
  FAN_STATUS_JSON = 11,
  FAN_STATUS_INVALID_UTF8 = 12,
  FAN_STATUS_PANIC = 13,
} FanStatus;

/**
 * Controller mode for [`fan_controller_new`].
 */
typedef enum FanControllerMode {
  FAN_CONTROLLER_MODE_P = 0,
  FAN_CONTROLLER_MODE_PID = 1,
} FanControllerMode;

/**
 * Stateful pixel-error to velocity controller.
 */
typedef struct FanController FanController;

/**
 * Descriptor field of `height x width` pixels with `dim` values each.
 */
typedef struct FanField FanField;

/**
 * Ordered list of binary masks.
 */
typedef struct FanMasks FanMasks;

/**
 * Ordered list of labeled query vectors.
 */
typedef struct FanQueries FanQueries;

/**
 * Detection result list.
 */
typedef struct FanRegions FanRegions;

/**
 * Summary of one region. `query` is the winning query index or -1 when the
 * region is unlabeled; the box is zero for an empty mask.
 */
typedef struct FanRegionInfo {
  int64_t query;
  float score;
  size_t area;
  size_t x;
  size_t y;
  size_t w;
  size_t h;
} FanRegionInfo;

/**
 * Gains and limits; [`fan_controller_default_config`] fills the defaults.
 */
typedef struct FanControllerConfig {
  enum FanControllerMode mode;
  double kp;
  double ki;
  double kd;
  double beta;
  double v_max;
  double integral_clamp;
  double dt;
} FanControllerConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call into the library on the same thread.
 */
const char *fan_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fan_version(void);

/**
 * Cosine similarity `a.b / (|a||b| + epsilon)` clamped to [-1, 1].
 */
enum FanStatus fan_cosine_similarity(const float *a,
                                     const float *b,
                                     size_t len,
                                     double epsilon,
                                     float *out);

/**
 * Copies `height * width * dim` row-major values into a new field.
 */
enum FanStatus fan_field_new(size_t height,
                             size_t width,
                             size_t dim,
                             const float *data,
                             struct FanField **out);

/**
 * Reads a `.fand` descriptor field file.
 */
enum FanStatus fan_field_load(const char *path, struct FanField **out);

/**
 * Writes height, width and dim of `field`; any output may be null.
 */
enum FanStatus fan_field_shape(const struct FanField *field,
                               size_t *height,
                               size_t *width,
                               size_t *dim);

void fan_field_free(struct FanField *field);

struct FanMasks *fan_masks_new(void);

/**
 * Reads a `.fanm` mask file.
 */
enum FanStatus fan_masks_load(const char *path, struct FanMasks **out);

/**
 * Appends a mask given as `height * width` row-major bytes, 0 or 1.
 */
enum FanStatus fan_masks_push(struct FanMasks *masks,
                              size_t height,
                              size_t width,
                              const uint8_t *values);

size_t fan_masks_len(const struct FanMasks *masks);

void fan_masks_free(struct FanMasks *masks);

struct FanQueries *fan_queries_new(void);

/**
 * Appends a query; `label` is NUL-terminated UTF-8.
 */
enum FanStatus fan_queries_push(struct FanQueries *queries,
                                const char *label,
                                const float *vector,
                                size_t dim);

size_t fan_queries_len(const struct FanQueries *queries);

void fan_queries_free(struct FanQueries *queries);

/**
 * Labels each mask with its most similar query when the similarity reaches
 * `alpha`. Results follow the mask order.
 */
enum FanStatus fan_classify_regions(const struct FanField *field,
                                    const struct FanMasks *masks,
                                    const struct FanQueries *queries,
                                    float alpha,
                                    struct FanRegions **out);

/**
 * Segmenter-free detection: connected regions of pixels whose most similar
 * query is `target` with similarity at least `alpha`.
 */
enum FanStatus fan_coarse_detect(const struct FanField *field,
                                 const struct FanQueries *queries,
                                 size_t target,
                                 float alpha,
                                 struct FanRegions **out);

size_t fan_regions_len(const struct FanRegions *regions);

enum FanStatus fan_regions_get(const struct FanRegions *regions,
                               size_t index,
                               struct FanRegionInfo *out);

/**
 * Copies region `index`'s mask into `values` (`len` must equal height * width).
 */
enum FanStatus fan_regions_mask(const struct FanRegions *regions,
                                size_t index,
                                uint8_t *values,
                                size_t len);

void fan_regions_free(struct FanRegions *regions);

struct FanControllerConfig fan_controller_default_config(void);

enum FanStatus fan_controller_new(const struct FanControllerConfig *config,
                                  struct FanController **out);

/**
 * Feeds one pixel error and writes the velocity command. A non-finite
 * error yields a zero command and resets the controller; `faulted` (may be
 * null) reports that case.
 */
enum FanStatus fan_controller_step(struct FanController *controller,
                                   double error_x,
                                   double error_y,
                                   double *vx,
                                   double *vy,
                                   bool *faulted);

/**
 * Clears integral, derivative memory and the filtered command.
 */
enum FanStatus fan_controller_reset(struct FanController *controller);

void fan_controller_free(struct FanController *controller);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FAN_H */
