#ifndef PU_RANK_H
#define PU_RANK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PuMode {
  PU_MODE_PN = 0,
  PU_MODE_PU_NEAREST = 1,
  PU_MODE_PU_MEAN = 2,
} PuMode;

typedef enum PuSplit {
  PU_SPLIT_TRAIN = 0,
  PU_SPLIT_VALID = 1,
  PU_SPLIT_TEST = 2,
} PuSplit;

/**
 * Result code of every fallible call.
 */
typedef enum PuStatus {
  PU_STATUS_OK = 0,
  PU_STATUS_NULL_POINTER = 1,
  PU_STATUS_INVALID_UTF8 = 2,
  PU_STATUS_IO = 3,
  PU_STATUS_PARSE = 4,
  PU_STATUS_INVALID_CONFIG = 5,
  PU_STATUS_INVALID_DATA = 6,
  PU_STATUS_DIMENSION_MISMATCH = 7,
  PU_STATUS_NON_FINITE = 8,
  PU_STATUS_CHECKPOINT = 9,
  PU_STATUS_BUFFER_TOO_SMALL = 10,
  PU_STATUS_PANIC = 11,
} PuStatus;

/**
 * Opaque corpus split.
 */
typedef struct PuDataset PuDataset;

/**
 * Opaque embedding table.
 */
typedef struct PuEmbeddings PuEmbeddings;

/**
 * Opaque trained model.
 */
typedef struct PuModel PuModel;

/**
 * Ranking metrics of one evaluation.
 */
typedef struct PuMetrics {
  double accuracy;
  double recall_at_k;
  double mrr;
  size_t k;
  size_t n;
} PuMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *pu_version(void);

/**
 * Message of the last failing call on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *pu_last_error_message(void);

/**
 * Loads a text embedding table (`dim D count N` header, then `token v1 .. vD`).
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum PuStatus pu_embeddings_load(const char *path, struct PuEmbeddings **out);

/**
 * # Safety
 * `table` must be NULL or a handle returned by this library, freed once.
 */
void pu_embeddings_free(struct PuEmbeddings *table);

/**
 * Embedding dimension, or 0 for a NULL handle.
 *
 * # Safety
 * `table` must be NULL or a live handle.
 */
size_t pu_embeddings_dim(const struct PuEmbeddings *table);

/**
 * Loads a JSON-lines corpus split with its categories file.
 *
 * # Safety
 * String arguments must be valid NUL-terminated strings and `out` a valid pointer.
 */
enum PuStatus pu_dataset_load(const char *corpus_path,
                              const char *categories_path,
                              enum PuSplit split,
                              struct PuDataset **out);

/**
 * # Safety
 * `dataset` must be NULL or a handle returned by this library, freed once.
 */
void pu_dataset_free(struct PuDataset *dataset);

/**
 * Number of requests, or 0 for a NULL handle.
 *
 * # Safety
 * `dataset` must be NULL or a live handle.
 */
size_t pu_dataset_len(const struct PuDataset *dataset);

/**
 * Number of categories, or 0 for a NULL handle.
 *
 * # Safety
 * `dataset` must be NULL or a live handle.
 */
size_t pu_dataset_category_count(const struct PuDataset *dataset);

/**
 * Trains a model. `config_json` is a TrainConfig JSON object or NULL for
 * defaults; `mode` and `seed` override the corresponding fields.
 *
 * # Safety
 * Handles must be live, `config_json` NULL or a valid string, `out` valid.
 */
enum PuStatus pu_model_train(const struct PuDataset *train_set,
                             const struct PuDataset *valid_set,
                             const struct PuEmbeddings *table,
                             const char *config_json,
                             enum PuMode mode,
                             uint64_t seed,
                             struct PuModel **out);

/**
 * Writes a JSON checkpoint.
 *
 * # Safety
 * `model` must be live and `path` a valid string.
 */
enum PuStatus pu_model_save(const struct PuModel *model, const char *path);

/**
 * Loads a checkpoint. `table` may be NULL when the checkpoint stores its own
 * (trainable-encoder) table.
 *
 * # Safety
 * `path` must be a valid string, `table` NULL or live, `out` valid.
 */
enum PuStatus pu_model_load(const char *path,
                            const struct PuEmbeddings *table,
                            struct PuModel **out);

/**
 * # Safety
 * `model` must be NULL or a handle returned by this library, freed once.
 */
void pu_model_free(struct PuModel *model);

/**
 * Number of categories the model ranks, or 0 for a NULL handle.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t pu_model_category_count(const struct PuModel *model);

/**
 * Ranks all categories for a tokenised request. `out_ids` and `out_scores`
 * receive `C` entries in rank order; `capacity` below `C` fails with
 * `BUFFER_TOO_SMALL` and writes nothing. `out_scores` may be NULL.
 *
 * # Safety
 * `tokens` must point to `n_tokens` valid strings; output buffers must hold `capacity` entries.
 */
enum PuStatus pu_model_predict(const struct PuModel *model,
                               const char *const *tokens,
                               size_t n_tokens,
                               size_t *out_ids,
                               double *out_scores,
                               size_t capacity);

/**
 * Accuracy, recall@k and MRR of `model` on `dataset`.
 *
 * # Safety
 * Handles must be live and `out` valid.
 */
enum PuStatus pu_model_evaluate(const struct PuModel *model,
                                const struct PuDataset *dataset,
                                size_t k,
                                struct PuMetrics *out);

/**
 * Ramp loss `min(1 - m, max(0, 1 - t))`.
 */
double pu_ramp_loss(double t, double margin);

/**
 * Rank weight `sum_{j=1..r} 1/j`; `r` must be at least 1.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PuStatus pu_rank_weight(size_t r, double *out);

/**
 * Propagation similarity `exp(-(d / mean_d) * C / (C - 1))`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PuStatus pu_similarity(double distance,
                            double mean_distance,
                            size_t category_count,
                            double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PU_RANK_H */
