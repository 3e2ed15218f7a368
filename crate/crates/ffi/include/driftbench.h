#ifndef DRIFTBENCH_H
#define DRIFTBENCH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Dataset variant selector.
 */
typedef enum DbDatasetVariant {
  DB_DATASET_VARIANT_S1 = 1,
  DB_DATASET_VARIANT_S2 = 2,
  DB_DATASET_VARIANT_S3 = 3,
} DbDatasetVariant;

/**
 * Model variant selector.
 */
typedef enum DbModelVariant {
  DB_MODEL_VARIANT_DYNAMIC = 0,
  DB_MODEL_VARIANT_STATIC = 1,
  DB_MODEL_VARIANT_INIT_ALL = 2,
  DB_MODEL_VARIANT_LORA = 3,
} DbModelVariant;

/**
 * Result code of every fallible call.
 */
typedef enum DbStatus {
  DB_STATUS_OK = 0,
  DB_STATUS_NULL_ARGUMENT = 1,
  DB_STATUS_CONFIG = 2,
  DB_STATUS_DIMENSION = 3,
  DB_STATUS_CONTRACT = 4,
  DB_STATUS_INCOMPLETE = 5,
  DB_STATUS_IO = 6,
  DB_STATUS_JSON = 7,
  DB_STATUS_INVALID_UTF8 = 8,
  DB_STATUS_PANIC = 9,
} DbStatus;

/**
 * Opaque dataset handle.
 */
typedef struct DbDataset DbDataset;

/**
 * Opaque model handle.
 */
typedef struct DbModel DbModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *db_version(void);

/**
 * Copies the calling thread's last error message into `buf` (truncated,
 * always NUL-terminated when `len > 0`). Returns the full message length
 * excluding the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t db_last_error(char *buf, size_t len);

/**
 * Generates `episodes` episodes with the default window lengths.
 *
 * # Safety
 * `out` must be valid for one pointer write.
 */
enum DbStatus db_dataset_generate(enum DbDatasetVariant variant,
                                  uint64_t seed,
                                  size_t episodes,
                                  struct DbDataset **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` valid for one pointer write.
 */
enum DbStatus db_dataset_load(const char *path, struct DbDataset **out);

/**
 * # Safety
 * `dataset` must be a live handle; `path` a NUL-terminated string.
 */
enum DbStatus db_dataset_save(const struct DbDataset *dataset, const char *path);

/**
 * # Safety
 * `dataset` must be a live handle; `len` valid for one write.
 */
enum DbStatus db_dataset_len(const struct DbDataset *dataset, size_t *len);

/**
 * # Safety
 * `dataset` must be null or a handle not yet freed.
 */
void db_dataset_free(struct DbDataset *dataset);

/**
 * Fresh model with the default architecture (60-sample input, 30-sample
 * output). LoRA needs a trained base: use [`db_model_lora_from`].
 *
 * # Safety
 * `out` must be valid for one pointer write.
 */
enum DbStatus db_model_new(enum DbModelVariant variant, uint64_t seed, struct DbModel **out);

/**
 * LoRA model over a frozen copy of a static `base`.
 *
 * # Safety
 * `base` must be a live handle; `out` valid for one pointer write.
 */
enum DbStatus db_model_lora_from(const struct DbModel *base, uint64_t seed, struct DbModel **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` valid for one pointer write.
 */
enum DbStatus db_model_load(const char *path, struct DbModel **out);

/**
 * # Safety
 * `model` must be a live handle; `path` a NUL-terminated string.
 */
enum DbStatus db_model_save(const struct DbModel *model, const char *path);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void db_model_free(struct DbModel *model);

/**
 * Forward pass on one window with the model's current parameters.
 *
 * # Safety
 * `input` must hold `input_len` doubles and `output` room for `output_len`.
 */
enum DbStatus db_model_predict(const struct DbModel *model,
                               const double *input,
                               size_t input_len,
                               double *output,
                               size_t output_len);

/**
 * Trains in place on the leading episodes of `dataset`. `config_json` may
 * be null for defaults. Writes the last epoch's mean query MSE.
 *
 * # Safety
 * Handles must be live; `config_json` null or NUL-terminated; `final_query_mse` null or writable.
 */
enum DbStatus db_train(struct DbModel *model,
                       const struct DbDataset *dataset,
                       const char *config_json,
                       uint64_t seed,
                       double *final_query_mse);

/**
 * Evaluates on the trailing `episodes` episodes without modifying the model.
 *
 * # Safety
 * Handles must be live; `config_json` null or NUL-terminated; `mean_mse` writable.
 */
enum DbStatus db_evaluate(const struct DbModel *model,
                          const struct DbDataset *dataset,
                          size_t episodes,
                          const char *config_json,
                          uint64_t seed,
                          double *mean_mse);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DRIFTBENCH_H */
