#ifndef DEEPFRAME_H
#define DEEPFRAME_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum DfStatus {
  DF_STATUS_OK = 0,
  DF_STATUS_NULL_POINTER = 1,
  DF_STATUS_INVALID_ARGUMENT = 2,
  DF_STATUS_SHAPE_MISMATCH = 3,
  DF_STATUS_FORMAT = 4,
  DF_STATUS_IO = 5,
  DF_STATUS_NON_FINITE = 6,
  DF_STATUS_CHECKPOINT = 7,
  DF_STATUS_PANIC = 8,
} DfStatus;

/**
 * A dense optical-flow field.
 */
typedef struct DfFlow DfFlow;

/**
 * A trained generator.
 */
typedef struct DfModel DfModel;

/**
 * An image tensor.
 */
typedef struct DfTensor DfTensor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty if none. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *df_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *df_version(void);

/**
 * Copies `channels * height * width` values from `data` into a new tensor.
 *
 * # Safety
 * `data` must point to that many readable doubles; `out` must be writable.
 */
enum DfStatus df_tensor_new(size_t channels,
                            size_t height,
                            size_t width,
                            const double *data,
                            struct DfTensor **out);

/**
 * # Safety
 * `t` must come from this library or be null.
 */
void df_tensor_free(struct DfTensor *t);

/**
 * Writes the three extents of an image tensor.
 *
 * # Safety
 * All pointers must be valid.
 */
enum DfStatus df_tensor_shape(const struct DfTensor *t,
                              size_t *channels,
                              size_t *height,
                              size_t *width);

/**
 * Copies the tensor's values into `buf`, which holds `len` doubles.
 *
 * # Safety
 * `buf` must be writable for `len` doubles.
 */
enum DfStatus df_tensor_copy_data(const struct DfTensor *t, double *buf, size_t len);

/**
 * Reads a PNG or binary PPM image.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum DfStatus df_image_load(const char *path, struct DfTensor **out);

/**
 * Writes an image; PNG when the path ends in `.png`, PPM otherwise.
 *
 * # Safety
 * `t` must be valid and `path` NUL-terminated.
 */
enum DfStatus df_image_save(const struct DfTensor *t, const char *path);

/**
 * Builds a flow field from `height * width` interleaved (dx, dy) pairs.
 *
 * # Safety
 * `data` must hold `2 * width * height` doubles; `out` must be writable.
 */
enum DfStatus df_flow_new(size_t width, size_t height, const double *data, struct DfFlow **out);

/**
 * # Safety
 * `f` must come from this library or be null.
 */
void df_flow_free(struct DfFlow *f);

/**
 * # Safety
 * All pointers must be valid.
 */
enum DfStatus df_flow_extent(const struct DfFlow *f, size_t *width, size_t *height);

/**
 * Copies the interleaved (dx, dy) pairs into `buf` of `len` doubles.
 *
 * # Safety
 * `buf` must be writable for `len` doubles.
 */
enum DfStatus df_flow_copy_data(const struct DfFlow *f, double *buf, size_t len);

/**
 * Reads a Middlebury `.flo` file.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum DfStatus df_flow_load(const char *path, struct DfFlow **out);

/**
 * Writes a Middlebury `.flo` file.
 *
 * # Safety
 * `f` must be valid and `path` NUL-terminated.
 */
enum DfStatus df_flow_save(const struct DfFlow *f, const char *path);

/**
 * Loads a generator from a training checkpoint.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum DfStatus df_model_load(const char *path, struct DfModel **out);

/**
 * # Safety
 * `m` must come from this library or be null.
 */
void df_model_free(struct DfModel *m);

/**
 * 1 if the model consumes an external flow, else 0.
 *
 * # Safety
 * `m` must be valid.
 */
enum DfStatus df_model_needs_flow(const struct DfModel *m, int32_t *out);

/**
 * Predicts the frame halfway between `first` and `second`. `flow` may be null
 * unless the model was trained on external flow.
 *
 * # Safety
 * Handles must be valid (`flow` may be null); `out` must be writable.
 */
enum DfStatus df_model_interpolate(const struct DfModel *m,
                                   const struct DfTensor *first,
                                   const struct DfTensor *second,
                                   const struct DfFlow *flow,
                                   struct DfTensor **out);

/**
 * Pixelwise mean of two frames.
 *
 * # Safety
 * Handles must be valid; `out` must be writable.
 */
enum DfStatus df_average(const struct DfTensor *first,
                         const struct DfTensor *second,
                         struct DfTensor **out);

/**
 * Symmetric flow warp: both frames are sampled half a flow step toward the
 * middle and averaged.
 *
 * # Safety
 * Handles must be valid; `out` must be writable.
 */
enum DfStatus df_warp_middle(const struct DfTensor *first,
                             const struct DfTensor *second,
                             const struct DfFlow *flow,
                             struct DfTensor **out);

/**
 * Mean squared error between two images of equal shape.
 *
 * # Safety
 * Handles must be valid; `out` must be writable.
 */
enum DfStatus df_mse(const struct DfTensor *a, const struct DfTensor *b, double *out);

/**
 * PSNR in dB for unit peak; +inf for identical images.
 *
 * # Safety
 * Handles must be valid; `out` must be writable.
 */
enum DfStatus df_psnr(const struct DfTensor *a, const struct DfTensor *b, double *out);

/**
 * Mean SSIM on luma with an 11x11 Gaussian window.
 *
 * # Safety
 * Handles must be valid; `out` must be writable.
 */
enum DfStatus df_ssim(const struct DfTensor *a, const struct DfTensor *b, double *out);

/**
 * Mean squared finite-difference gradient, a sharpness measure.
 *
 * # Safety
 * `t` must be valid; `out` must be writable.
 */
enum DfStatus df_gradient_energy(const struct DfTensor *t, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEEPFRAME_H */
