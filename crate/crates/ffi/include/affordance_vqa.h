#ifndef AFFORDANCE_VQA_H
#define AFFORDANCE_VQA_H

/* Generated by cbindgen; do not edit. */

#include <stdbool.h>
#include <stdint.h>

typedef enum AvqaStatus {
  AVQA_STATUS_OK = 0,
  AVQA_STATUS_NULL_POINTER = 1,
  AVQA_STATUS_INVALID_UTF8 = 2,
  AVQA_STATUS_INVALID_INPUT = 3,
  AVQA_STATUS_PARSE_ERROR = 4,
  AVQA_STATUS_EMPTY_MASK = 5,
  AVQA_STATUS_DIMENSION_MISMATCH = 6,
  AVQA_STATUS_PANIC = 7,
} AvqaStatus;

typedef enum AvqaTrialReason {
  AVQA_TRIAL_REASON_SUCCESS = 0,
  AVQA_TRIAL_REASON_OFF_PART = 1,
  AVQA_TRIAL_REASON_BAD_DIRECTION = 2,
} AvqaTrialReason;

/**
 * Run-length encoded binary mask.
 */
typedef struct AvqaMask AvqaMask;

/**
 * Articulated scene for the contact-plan simulator.
 */
typedef struct AvqaScene AvqaScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until
 * the next failing call on the same thread.
 */
const char *avqa_last_error(void);

/**
 * Library version as a static string.
 */
const char *avqa_version(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void avqa_string_free(char *s);

/**
 * Formats a normalized box as `[x0, y0, x1, y1]` with three decimals.
 *
 * # Safety
 * `bbox` points to 4 doubles; `out` is writable.
 */
enum AvqaStatus avqa_bbox_format(const double *bbox, char **out);

/**
 * Reads the first bracketed 4-tuple in `text` into `out` (4 doubles).
 *
 * # Safety
 * `text` is a NUL-terminated string; `out` has room for 4 doubles.
 */
enum AvqaStatus avqa_bbox_parse(const char *text, double *out);

/**
 * Converts a pixel box (exclusive max) to normalized coordinates on a
 * 1/1000 grid.
 *
 * # Safety
 * `pixel_box` points to 4 doubles; `out` has room for 4 doubles.
 */
enum AvqaStatus avqa_bbox_normalize(const double *pixel_box,
                                    uint32_t width,
                                    uint32_t height,
                                    double *out);

/**
 * IoU of two normalized boxes.
 *
 * # Safety
 * `a` and `b` point to 4 doubles each; `out` is writable.
 */
enum AvqaStatus avqa_bbox_iou(const double *a, const double *b, double *out);

/**
 * Parses `{"size": [h, w], "counts": ...}` into a new mask handle.
 *
 * # Safety
 * `json` is a NUL-terminated string; `out` is writable.
 */
enum AvqaStatus avqa_mask_from_json(const char *json, struct AvqaMask **out);

/**
 * Builds a mask from `width * height` row-major bytes; non-zero is
 * foreground.
 *
 * # Safety
 * `pixels` points to `width * height` bytes; `out` is writable.
 */
enum AvqaStatus avqa_mask_from_raster(const uint8_t *pixels,
                                      uint32_t width,
                                      uint32_t height,
                                      struct AvqaMask **out);

/**
 * Serializes a mask back to its JSON form.
 *
 * # Safety
 * `mask` is a live handle; `out` is writable.
 */
enum AvqaStatus avqa_mask_to_json(const struct AvqaMask *mask, char **out);

/**
 * Foreground pixel count; 0 for NULL.
 *
 * # Safety
 * `mask` is NULL or a live handle.
 */
uint64_t avqa_mask_area(const struct AvqaMask *mask);

/**
 * # Safety
 * `a` and `b` are live handles; `out` is writable.
 */
enum AvqaStatus avqa_mask_iou(const struct AvqaMask *a, const struct AvqaMask *b, double *out);

/**
 * Contact pixel of a mask: the rounded centroid of its largest
 * component, or the nearest foreground pixel to it.
 *
 * # Safety
 * `mask` is a live handle; `out_xy` has room for 2 values.
 */
enum AvqaStatus avqa_mask_contact_point(const struct AvqaMask *mask, uint32_t *out_xy);

/**
 * # Safety
 * `mask` is NULL or a handle from this library not yet freed.
 */
void avqa_mask_free(struct AvqaMask *mask);

/**
 * KL divergence of the normalized prediction from the normalized ground
 * truth.
 *
 * # Safety
 * `gt` and `pred` each point to `width * height` doubles.
 */
enum AvqaStatus avqa_kld(const double *gt,
                         const double *pred,
                         uint32_t width,
                         uint32_t height,
                         double *out);

/**
 * Histogram intersection of the two normalized maps.
 *
 * # Safety
 * As [`avqa_kld`].
 */
enum AvqaStatus avqa_sim(const double *gt,
                         const double *pred,
                         uint32_t width,
                         uint32_t height,
                         double *out);

/**
 * Mean standardized prediction over the ground-truth fixation pixels.
 *
 * # Safety
 * As [`avqa_kld`].
 */
enum AvqaStatus avqa_nss(const double *gt,
                         const double *pred,
                         uint32_t width,
                         uint32_t height,
                         double *out);

/**
 * Parses and validates a scene description.
 *
 * # Safety
 * `json` is a NUL-terminated string; `out` is writable.
 */
enum AvqaStatus avqa_scene_from_json(const char *json, struct AvqaScene **out);

/**
 * Runs one contact plan. `approach` need not be unit length.
 *
 * # Safety
 * `scene` is a live handle; `approach` points to 2 doubles; outputs are
 * writable.
 */
enum AvqaStatus avqa_scene_evaluate(const struct AvqaScene *scene,
                                    uint32_t x,
                                    uint32_t y,
                                    const double *approach,
                                    double cos_threshold,
                                    bool *out_success,
                                    enum AvqaTrialReason *out_reason);

/**
 * Ground-truth plan: handle contact pixel and pulling direction.
 *
 * # Safety
 * `scene` is a live handle; `out_xy` has room for 2 values and
 * `out_approach` for 2 doubles.
 */
enum AvqaStatus avqa_scene_oracle(const struct AvqaScene *scene,
                                  uint32_t *out_xy,
                                  double *out_approach);

/**
 * # Safety
 * `scene` is NULL or a handle from this library not yet freed.
 */
void avqa_scene_free(struct AvqaScene *scene);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AFFORDANCE_VQA_H */
