#ifndef RADAR_TTA_H
#define RADAR_TTA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every fallible call.
 */
typedef enum RadarStatus {
  RADAR_STATUS_OK = 0,
  RADAR_STATUS_INVALID_ARGUMENT = 1,
  RADAR_STATUS_IO = 2,
  RADAR_STATUS_FORMAT = 3,
  RADAR_STATUS_INVALID_RECORD = 4,
  RADAR_STATUS_DIMENSION_MISMATCH = 5,
  RADAR_STATUS_NON_FINITE = 6,
  RADAR_STATUS_ZERO_VECTOR = 7,
  RADAR_STATUS_DIVERGED = 8,
  RADAR_STATUS_CHECKPOINT = 9,
  RADAR_STATUS_REPORT = 10,
  RADAR_STATUS_NULL_POINTER = 11,
  RADAR_STATUS_BUFFER_TOO_SMALL = 12,
  RADAR_STATUS_PANIC = 13,
} RadarStatus;

/*
 Which role a dataset file is loaded as. Source files must be labeled;
 target labels are kept only for evaluation.
 */
typedef enum RadarRole {
  RADAR_ROLE_SOURCE = 0,
  RADAR_ROLE_TARGET = 1,
} RadarRole;

/*
 A loaded or generated dataset.
 */
typedef struct RadarDataset RadarDataset;

/*
 Model parameters with their architecture.
 */
typedef struct RadarModel RadarModel;

/*
 The outcome of one adaptation run.
 */
typedef struct RadarReport RadarReport;

/*
 Aggregate metrics of an adaptation run. `available` is 0 when the
 target carried no labels.
 */
typedef struct RadarMetrics {
  int32_t available;
  double accuracy;
  double macro_f1;
  double macro_recall;
  size_t count;
} RadarMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null after a
 successful call. Valid until the next call on this thread.
 */
const char *radar_last_error(void);

/*
 Library version as a static string.
 */
const char *radar_version(void);

/*
 Loads a line-record dataset file.

 # Safety
 `path` must be a valid C string and `out` a valid pointer.
 */
enum RadarStatus radar_dataset_load(const char *path,
                                    enum RadarRole role,
                                    struct RadarDataset **out_dataset);

/*
 Writes a dataset in the line-record format.

 # Safety
 `dataset` must be a live handle and `path` a valid C string.
 */
enum RadarStatus radar_dataset_save(const struct RadarDataset *dataset, const char *path);

/*
 Generates a synthetic source and target pair. `spec_json` overlays the
 generator defaults, e.g. `{"events": 10, "shift": 2.0}`.

 # Safety
 `spec_json` must be null or a valid C string; the out pointers must be
 valid.
 */
enum RadarStatus radar_dataset_synthetic(const char *spec_json,
                                         uint64_t seed,
                                         struct RadarDataset **out_source,
                                         struct RadarDataset **out_target);

/*
 Number of records; 0 for a null handle.

 # Safety
 `dataset` must be null or a live handle.
 */
size_t radar_dataset_len(const struct RadarDataset *dataset);

/*
 Writes the visual, text and audio widths into `out_dims[0..3]`.

 # Safety
 `dataset` must be a live handle and `out_dims` point to 3 writable values.
 */
enum RadarStatus radar_dataset_dims(const struct RadarDataset *dataset, size_t *out_dims);

/*
 # Safety
 `dataset` must be null or a handle not yet freed.
 */
void radar_dataset_free(struct RadarDataset *dataset);

/*
 Initializes a model for the given input widths and encoder width `D_m`,
 with the remaining architecture derived from `D_m`.

 # Safety
 `input_dims` must point to 3 readable values and `out_model` be valid.
 */
enum RadarStatus radar_model_init(const size_t *input_dims,
                                  size_t encoder_out,
                                  uint64_t seed,
                                  struct RadarModel **out_model);

/*
 Loads the parameters of a checkpoint file.

 # Safety
 `path` must be a valid C string and `out_model` a valid pointer.
 */
enum RadarStatus radar_model_load(const char *path, struct RadarModel **out_model);

/*
 Writes a checkpoint with the standard adaptable mask.

 # Safety
 `model` must be a live handle and `path` a valid C string.
 */
enum RadarStatus radar_model_save(const struct RadarModel *model, const char *path);

/*
 Independent copy of a model.

 # Safety
 `model` must be a live handle and `out_model` a valid pointer.
 */
enum RadarStatus radar_model_clone(const struct RadarModel *model, struct RadarModel **out_model);

/*
 # Safety
 `model` must be null or a handle not yet freed.
 */
void radar_model_free(struct RadarModel *model);

/*
 Supervised training on a labeled source dataset, in place. `config_json`
 overlays the defaults (`epochs`, `batch_size`, `seed`, `optimizer`).

 # Safety
 Handles must be live; `config_json` null or a valid C string.
 */
enum RadarStatus radar_pretrain(struct RadarModel *model,
                                const struct RadarDataset *source,
                                const char *config_json);

/*
 Class probabilities of every record, row-major into `out_probs`, which
 must hold `len * 2` values.

 # Safety
 Handles must be live and `out_probs` point to `capacity` writable values.
 */
enum RadarStatus radar_model_predict(const struct RadarModel *model,
                                     const struct RadarDataset *dataset,
                                     double *out_probs,
                                     size_t capacity);

/*
 Adapts `model` in place over the target stream and returns the report.
 `config_json` overlays the adaptation defaults; `mode` and `batch_size`
 select the batch plan.

 # Safety
 Handles must be live; `config_json` null or a valid C string;
 `out_report` a valid pointer.
 */
enum RadarStatus radar_adapt(struct RadarModel *model,
                             const struct RadarDataset *target,
                             const char *config_json,
                             struct RadarReport **out_report);

/*
 # Safety
 `report` must be a live handle and `out_metrics` a valid pointer.
 */
enum RadarStatus radar_report_metrics(const struct RadarReport *report,
                                      struct RadarMetrics *out_metrics);

/*
 Number of batches; 0 for a null handle.

 # Safety
 `report` must be null or a live handle.
 */
size_t radar_report_num_batches(const struct RadarReport *report);

/*
 Loss terms of one batch into `out_losses[0..4]`: alignment, self-training,
 entropy, total.

 # Safety
 `report` must be a live handle and `out_losses` point to 4 writable values.
 */
enum RadarStatus radar_report_batch_losses(const struct RadarReport *report,
                                           size_t batch,
                                           double *out_losses);

/*
 Writes the line-record report stream. Non-zero flags add per-record
 entropies, pseudo-labels and bank contents.

 # Safety
 `report` must be a live handle and `path` a valid C string.
 */
enum RadarStatus radar_report_write(const struct RadarReport *report,
                                    const char *path,
                                    int32_t trace_entropy,
                                    int32_t trace_pseudo,
                                    int32_t trace_bank);

/*
 # Safety
 `report` must be null or a handle not yet freed.
 */
void radar_report_free(struct RadarReport *report);

/*
 Unbiased squared MMD between two datasets with a Gaussian kernel,
 summed over modalities. `out_per_modality` may be null; otherwise it
 receives the three per-modality estimates.

 # Safety
 Handles must be live, `out_total` valid and `out_per_modality` null or
 pointing to 3 writable values.
 */
enum RadarStatus radar_mmd(const struct RadarDataset *a,
                           const struct RadarDataset *b,
                           double sigma,
                           double *out_total,
                           double *out_per_modality);

/*
 Shannon entropy (natural log) of a probability vector.

 # Safety
 `probs` must point to `len` readable values and `out_entropy` be valid.
 */
enum RadarStatus radar_entropy(const double *probs, size_t len, double *out_entropy);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RADAR_TTA_H */
