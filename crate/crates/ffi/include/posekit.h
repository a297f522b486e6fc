#ifndef POSEKIT_H
#define POSEKIT_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define POSEKIT_POSE_DIM 20

#define POSEKIT_MAPPED_DIM 70

#define POSEKIT_BASIS_DIM 64

#define POSEKIT_LANDMARK_COUNT 24

typedef enum PosekitStatus {
  POSEKIT_STATUS_OK = 0,
  POSEKIT_STATUS_INVALID = 1,
  POSEKIT_STATUS_NON_FINITE = 2,
  POSEKIT_STATUS_ILL_CONDITIONED = 3,
  POSEKIT_STATUS_NOT_FOUND = 4,
  POSEKIT_STATUS_CONFLICT = 5,
  POSEKIT_STATUS_IO = 6,
  POSEKIT_STATUS_FORMAT = 7,
  POSEKIT_STATUS_NULL_POINTER = 8,
  POSEKIT_STATUS_BUFFER_TOO_SMALL = 9,
  POSEKIT_STATUS_PANIC = 10,
} PosekitStatus;

/**
 * Synthetic character.
 */
typedef struct PosekitCharacter PosekitCharacter;

/**
 * Fitted expression-to-basis table.
 */
typedef struct PosekitPhi PosekitPhi;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *posekit_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length excluding the NUL.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t posekit_last_error_message(char *buf, size_t len);

/**
 * Number of pose draws for a character with `n_target_morphs` available morphs.
 *
 * # Safety
 * `out` must be valid for writing.
 */
enum PosekitStatus posekit_sample_count(int64_t n_target_morphs, size_t *out);

/**
 * Draws pose `draw_index` for a character whose available target-morph ids
 * are `ids[0..n_ids]`, writing 20 doubles to `out`.
 *
 * # Safety
 * `ids` must be valid for `n_ids` bytes and `out` for 20 doubles.
 */
enum PosekitStatus posekit_sample_pose(const uint8_t *ids,
                                       size_t n_ids,
                                       uint64_t seed,
                                       uint64_t draw_index,
                                       bool rotate,
                                       double *out);

/**
 * Validates a pose; writes the number of range violations to
 * `out_violations`. Non-finite entries fail with `POSEKIT_STATUS_NON_FINITE`.
 *
 * # Safety
 * `pose` must be valid for 20 doubles and `out_violations` for writing.
 */
enum PosekitStatus posekit_validate_pose(const double *pose, size_t *out_violations);

/**
 * `(1 - t) p + t q` for `t` in `[0, 1]`.
 *
 * # Safety
 * `p`, `q` and `out` must each be valid for 20 doubles.
 */
enum PosekitStatus posekit_lerp(const double *p, const double *q, double t, double *out);

/**
 * Fits Φ on the default landmark model with regularization `lambda`.
 *
 * # Safety
 * `out` must be valid for writing a pointer.
 */
enum PosekitStatus posekit_phi_fit_default(double lambda, struct PosekitPhi **out);

/**
 * Loads Φ from a table written by `posekit_phi_save` or the CLI.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` valid for writing a pointer.
 */
enum PosekitStatus posekit_phi_load(const char *path, struct PosekitPhi **out);

/**
 * # Safety
 * `phi` must be a live handle; `path` a NUL-terminated string.
 */
enum PosekitStatus posekit_phi_save(const struct PosekitPhi *phi, const char *path);

/**
 * Copies row `slot` (64 doubles) of Φ into `out`.
 *
 * # Safety
 * `phi` must be a live handle; `out` valid for 64 doubles.
 */
enum PosekitStatus posekit_phi_row(const struct PosekitPhi *phi, size_t slot, double *out);

/**
 * Maps a 20-dim pose to 70 parameters.
 *
 * # Safety
 * `phi` must be a live handle; `pose` valid for 20 doubles, `out` for 70.
 */
enum PosekitStatus posekit_map_pose(const struct PosekitPhi *phi, const double *pose, double *out);

/**
 * # Safety
 * `phi` must be null or a handle not yet freed.
 */
void posekit_phi_free(struct PosekitPhi *phi);

/**
 * Creates a synthetic character; returns null only on allocation failure.
 */
struct PosekitCharacter *posekit_character_new(uint64_t seed, double support_probability);

/**
 * # Safety
 * `ch` must be null or a handle not yet freed.
 */
void posekit_character_free(struct PosekitCharacter *ch);

/**
 * Renders `pose` into `rgba` (row-major, `resolution² × 4` bytes). When
 * `landmarks` is non-null, 48 doubles of pixel coordinates (x, y per
 * landmark) are written there.
 *
 * # Safety
 * `ch` must be a live handle, `pose` valid for 20 doubles, `rgba` for
 * `rgba_len` bytes and `landmarks` null or valid for 48 doubles.
 */
enum PosekitStatus posekit_render(const struct PosekitCharacter *ch,
                                  const double *pose,
                                  uint8_t shader,
                                  uint32_t resolution,
                                  uint8_t *rgba,
                                  size_t rgba_len,
                                  double *landmarks);

/**
 * SSIM with default settings between two RGBA buffers of `width × height`.
 *
 * # Safety
 * `a` and `b` must each be valid for `width * height * 4` bytes; `out` for
 * one double.
 */
enum PosekitStatus posekit_ssim(const uint8_t *a,
                                const uint8_t *b,
                                uint32_t width,
                                uint32_t height,
                                double *out);

/**
 * Mean absolute per-axis angle difference in degrees; NaN if either
 * pointer is null.
 *
 * # Safety
 * `predicted` and `target` must be null or valid for 3 doubles.
 */
double posekit_head_angle_error(const double *predicted, const double *target);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* POSEKIT_H */
