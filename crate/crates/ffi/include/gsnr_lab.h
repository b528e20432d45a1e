#ifndef GSNR_LAB_H
#define GSNR_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Probe series selector for `gsnr_lab_run_series`.
 */
typedef enum GsnrLabSeries {
  /**
   * Recorded epoch indices (as f64).
   */
  GsnrLabSeries_Epochs = 0,
  GsnrLabSeries_TrainLoss = 1,
  GsnrLabSeries_TestLoss = 2,
  /**
   * Average GSNR over all non-floored parameters.
   */
  GsnrLabSeries_AvgGsnr = 3,
  /**
   * Mean proportion of samples sharing the majority gradient sign.
   */
  GsnrLabSeries_PSameSign = 4,
} GsnrLabSeries;

/**
 * Status code returned by every fallible call.
 */
typedef enum GsnrLabStatus {
  GsnrLabStatus_Ok = 0,
  /**
   * A required pointer argument was null.
   */
  GsnrLabStatus_NullPointer = 1,
  /**
   * Arguments were rejected before any computation started.
   */
  GsnrLabStatus_InvalidArgument = 2,
  /**
   * The computation itself failed (non-finite loss, degenerate data, ...).
   */
  GsnrLabStatus_ComputeFailed = 3,
  /**
   * The callee panicked; the handle state is unchanged.
   */
  GsnrLabStatus_Panicked = 4,
} GsnrLabStatus;

/**
 * A generated dataset. Opaque; create with `gsnr_lab_dataset_regression`
 * or `gsnr_lab_dataset_classification`, release with
 * `gsnr_lab_dataset_free`.
 */
typedef struct GsnrLabDataset GsnrLabDataset;

/**
 * A finished training run with its recorded probe series. Opaque; create
 * with `gsnr_lab_run_training`, release with `gsnr_lab_run_free`.
 */
typedef struct GsnrLabRun GsnrLabRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the message of the calling thread's most recent error into `buf`
 * (nul-terminated, truncated to `cap` bytes). Returns the full message
 * length in bytes excluding the terminator. `buf` may be null when `cap`
 * is 0, to query the length.
 *
 * # Safety
 * `buf` must point to at least `cap` writable bytes when `cap > 0`.
 */
uintptr_t gsnr_lab_last_error(char *buf, uintptr_t cap);

/**
 * Generate the 2-d product regression dataset (y = x0*x1 + noise).
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum GsnrLabStatus gsnr_lab_dataset_regression(uintptr_t n,
                                               double noise_half_width,
                                               uint64_t seed,
                                               struct GsnrLabDataset **out);

/**
 * Generate the teacher-labeled classification dataset.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum GsnrLabStatus gsnr_lab_dataset_classification(uintptr_t input_dim,
                                                   uintptr_t n,
                                                   uintptr_t num_classes,
                                                   uint64_t teacher_seed,
                                                   uint64_t seed,
                                                   struct GsnrLabDataset **out);

/**
 * Number of samples in the dataset.
 *
 * # Safety
 * `ds` must be a live handle from a dataset constructor; `out` must be
 * a valid pointer.
 */
enum GsnrLabStatus gsnr_lab_dataset_len(const struct GsnrLabDataset *ds, uintptr_t *out);

/**
 * Release a dataset handle. Null is ignored.
 *
 * # Safety
 * `ds` must be a handle from a dataset constructor, not yet freed.
 */
void gsnr_lab_dataset_free(struct GsnrLabDataset *ds);

/**
 * Train a one-hidden-layer MLP with full-batch gradient descent on
 * `train`, recording probes every `record_every` epochs, and return the
 * finished run. `init_scale` multiplies the initial weights (1.0 for the
 * standard initialization). The loss follows the training dataset's task.
 *
 * # Safety
 * `train` and `test` must be live dataset handles; `out` must be a valid
 * pointer to a handle slot.
 */
enum GsnrLabStatus gsnr_lab_run_training(const struct GsnrLabDataset *train,
                                         const struct GsnrLabDataset *test,
                                         uintptr_t hidden_width,
                                         double init_scale,
                                         uintptr_t epochs,
                                         double learning_rate,
                                         uintptr_t record_every,
                                         uint64_t init_seed,
                                         struct GsnrLabRun **out);

/**
 * Number of recorded epochs in the run; every series has this length.
 *
 * # Safety
 * `run` must be a live handle from `gsnr_lab_run_training`; `out` must be
 * a valid pointer.
 */
enum GsnrLabStatus gsnr_lab_run_len(const struct GsnrLabRun *run, uintptr_t *out);

/**
 * Copy one recorded series into `buf`. `len` must equal
 * `gsnr_lab_run_len`; epochs are delivered as f64 for a uniform ABI.
 *
 * # Safety
 * `run` must be a live handle; `buf` must point to `len` writable f64.
 */
enum GsnrLabStatus gsnr_lab_run_series(const struct GsnrLabRun *run,
                                       enum GsnrLabSeries which,
                                       double *buf,
                                       uintptr_t len);

/**
 * Release a run handle. Null is ignored.
 *
 * # Safety
 * `run` must be a handle from `gsnr_lab_run_training`, not yet freed.
 */
void gsnr_lab_run_free(struct GsnrLabRun *run);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* GSNR_LAB_H */
