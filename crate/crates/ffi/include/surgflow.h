#ifndef SURGFLOW_H
#define SURGFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Zero-count guard when `epsilon <= 0` is passed.
 */
#define SW_DEFAULT_EPSILON 1e-8

#define SW_WHITENING_ZCA 0

#define SW_WHITENING_STANDARDIZE 1

typedef enum {
  SW_STATUS_OK = 0,
  SW_STATUS_NULL_POINTER = 1,
  SW_STATUS_INVALID_ARGUMENT = 2,
  SW_STATUS_DIMENSION = 3,
  SW_STATUS_ZERO_FREQUENCY = 4,
  SW_STATUS_NUMERIC = 5,
  SW_STATUS_IO = 6,
  SW_STATUS_PARSE = 7,
  SW_STATUS_CHECKPOINT = 8,
  SW_STATUS_MISMATCH = 9,
  SW_STATUS_PANIC = 10,
} SwStatus;

/**
 * Tool × phase co-occurrence statistics.
 */
typedef struct SwCooccurrence SwCooccurrence;

/**
 * Trained model loaded from a checkpoint.
 */
typedef struct SwModel SwModel;

/**
 * Fitted feature whitening transform.
 */
typedef struct SwWhitening SwWhitening;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *sw_last_error_message(void);

void sw_clear_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sw_version(void);

/**
 * Median-frequency class weights: `out[c] = median(f) / f[c]`.
 *
 * # Safety
 * `counts` and `out` must point to `n` readable/writable elements.
 */
SwStatus sw_class_weights(const uint64_t *counts, size_t n, double *out);

/**
 * Weighted cross-entropy on class `target`. `grad` may be NULL.
 *
 * # Safety
 * `logits`, `weights` and (if non-NULL) `grad` must hold `n` doubles.
 */
SwStatus sw_phase_loss(const double *logits,
                       const double *weights,
                       size_t n,
                       size_t target,
                       double *value,
                       double *grad);

/**
 * Weighted multi-label soft margin loss against a 0/1 `target`.
 * `grad` may be NULL.
 *
 * # Safety
 * All arrays must hold `n` doubles.
 */
SwStatus sw_tool_loss(const double *logits,
                      const double *target,
                      const double *weights,
                      size_t n,
                      double *value,
                      double *grad);

/**
 * Counts are `n_tools × n_phases`, row-major. `epsilon <= 0` selects
 * [`SW_DEFAULT_EPSILON`].
 *
 * # Safety
 * `counts` must hold `n_tools * n_phases` values; `out` must be writable.
 */
SwStatus sw_cooccurrence_from_counts(const uint64_t *counts,
                                     size_t n_tools,
                                     size_t n_phases,
                                     double epsilon,
                                     SwCooccurrence **out);

/**
 * Column-normalised frequencies (`which = 0`) or the inverse-frequency
 * penalty (`which = 1`), `n_tools × n_phases` row-major.
 *
 * # Safety
 * `h` must be a live handle; `out` must hold `len` doubles.
 */
SwStatus sw_cooccurrence_matrix(const SwCooccurrence *h, uint32_t which, double *out, size_t len);

/**
 * # Safety
 * `h` must be NULL or a handle not yet freed.
 */
void sw_cooccurrence_free(SwCooccurrence *h);

/**
 * Joint co-occurrence loss. `swap_activations = false` applies sigmoid to
 * the phase logits and softmax to the tool logits. Gradients may be NULL.
 *
 * # Safety
 * Logit and gradient arrays must match the handle's phase and tool counts.
 */
SwStatus sw_joint_loss(const SwCooccurrence *h,
                       const double *phase_logits,
                       const double *tool_logits,
                       bool swap_activations,
                       double *value,
                       double *grad_phase,
                       double *grad_tool);

/**
 * Fits whitening on `n × dim` row-major features.
 *
 * # Safety
 * `features` must hold `n * dim` doubles; `out` must be writable.
 */
SwStatus sw_whitening_fit(const double *features,
                          size_t n,
                          size_t dim,
                          double lambda,
                          uint32_t mode,
                          SwWhitening **out);

/**
 * # Safety
 * `h` must be a live handle.
 */
size_t sw_whitening_dim(const SwWhitening *h);

/**
 * Whitens `n` row-major vectors of the handle's dimension.
 *
 * # Safety
 * `x` and `out` must hold `n * dim` doubles.
 */
SwStatus sw_whitening_apply(const SwWhitening *h, const double *x, size_t n, double *out);

/**
 * # Safety
 * `h` must be NULL or a handle not yet freed.
 */
void sw_whitening_free(SwWhitening *h);

/**
 * Loads a training checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
 */
SwStatus sw_model_load(const char *path, SwModel **out);

/**
 * Feature dimension the model expects, or 0 for NULL.
 *
 * # Safety
 * `h` must be NULL or a live handle.
 */
size_t sw_model_input_dim(const SwModel *h);

/**
 * Scores one video of `n_frames × dim` features: softmax phase
 * probabilities (`n_frames × 7`) and sigmoid tool probabilities
 * (`n_frames × 8`).
 *
 * # Safety
 * Buffers must hold the sizes given above.
 */
SwStatus sw_model_predict(const SwModel *h,
                          const double *features,
                          size_t n_frames,
                          size_t dim,
                          double *phase_out,
                          double *tool_out);

/**
 * # Safety
 * `h` must be NULL or a handle not yet freed.
 */
void sw_model_free(SwModel *h);

/**
 * Average precision of `scores` against 0/1 `truth`. `positives` may be
 * NULL; with no positives the AP is 0.
 *
 * # Safety
 * `scores` and `truth` must hold `n` elements.
 */
SwStatus sw_average_precision(const double *scores,
                              const uint8_t *truth,
                              size_t n,
                              double *ap,
                              size_t *positives);

/**
 * Sliding median of integer labels with an odd window.
 *
 * # Safety
 * `labels` and `out` must hold `n` elements.
 */
SwStatus sw_median_filter(const uint32_t *labels, size_t n, size_t window, uint32_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SURGFLOW_H */
