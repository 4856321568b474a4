#ifndef FACTVAE_H
#define FACTVAE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FvStatus {
  FV_STATUS_OK = 0,
  FV_STATUS_INVALID_ARGUMENT = 1,
  FV_STATUS_PARSE = 2,
  FV_STATUS_IO = 3,
  FV_STATUS_NUMERICAL = 4,
  FV_STATUS_NULL_POINTER = 5,
  FV_STATUS_PANIC = 6,
} FvStatus;

// Opaque grouped dataset.
typedef struct FvDataset FvDataset;

// Opaque trained model.
typedef struct FvModel FvModel;

typedef struct FvBarsConfig {
  size_t n;
  size_t size;
  double p_row;
  double noise;
  double p_miss;
  uint64_t seed;
} FvBarsConfig;

typedef struct FvTrainConfig {
  double lambda;
  double lr;
  double eta;
  size_t epochs;
  size_t batch_size;
  double keep_prob;
  size_t mc_samples;
  uint64_t seed;
} FvTrainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *fv_last_error_message(void);

struct FvBarsConfig fv_bars_config_default(void);

struct FvTrainConfig fv_train_config_default(void);

// # Safety
// `config` must be null or valid; `out` must be null or writable.
enum FvStatus fv_bars_generate(const struct FvBarsConfig *config, struct FvDataset **out);

// # Safety
// `path` must be null or a nul-terminated string; `out` must be null or writable.
enum FvStatus fv_dataset_read(const char *path, struct FvDataset **out);

// # Safety
// `dataset` must be null or a live handle; `path` null or nul-terminated.
enum FvStatus fv_dataset_write(const struct FvDataset *dataset, const char *path);

// Number of records, or 0 for a null handle.
//
// # Safety
// `dataset` must be null or a live handle.
size_t fv_dataset_len(const struct FvDataset *dataset);

// # Safety
// `dataset` must be null or a handle not yet freed.
void fv_dataset_free(struct FvDataset *dataset);

// # Safety
// `path` must be null or nul-terminated; `out` must be null or writable.
enum FvStatus fv_model_read(const char *path, struct FvModel **out);

// # Safety
// `model` must be null or a live handle; `path` null or nul-terminated.
enum FvStatus fv_model_write(const struct FvModel *model, const char *path);

// Initializes a model for `dataset` and trains it.
//
// # Safety
// Pointers must be null or valid; `out` must be writable.
enum FvStatus fv_model_fit(const struct FvDataset *dataset,
                           size_t latent,
                           size_t hidden,
                           const struct FvTrainConfig *config,
                           struct FvModel **out);

// # Safety
// `model` must be null or a live handle.
size_t fv_model_latent(const struct FvModel *model);

// # Safety
// `model` must be null or a live handle.
size_t fv_model_num_groups(const struct FvModel *model);

// Dimension of group `group`, or 0 when out of range.
//
// # Safety
// `model` must be null or a live handle.
size_t fv_model_group_dim(const struct FvModel *model, size_t group);

// # Safety
// `model` must be null or a handle not yet freed.
void fv_model_free(struct FvModel *model);

// Writes the row-major `groups × latent` column-norm matrix into `out`,
// which must hold exactly that many values.
//
// # Safety
// `out` must point to `len` writable doubles.
enum FvStatus fv_sparsity_matrix(const struct FvModel *model, double *out, size_t len);

// Reconstructs every group of record `index` from the groups listed in
// `observe`. The decoder means are written back to back in group order;
// `out_len` must equal the sum of the group dimensions. `sample` selects
// a posterior draw instead of the posterior mean.
//
// # Safety
// `observe` must point to `n_observe` values and `out` to `out_len` doubles.
enum FvStatus fv_reconstruct(const struct FvModel *model,
                             const struct FvDataset *dataset,
                             size_t index,
                             const size_t *observe,
                             size_t n_observe,
                             bool sample,
                             uint64_t seed,
                             double *out,
                             size_t out_len);

// Importance-weighted log-likelihood of record `index` with `samples` draws.
//
// # Safety
// `out` must be null or writable.
enum FvStatus fv_heldout_ll(const struct FvModel *model,
                            const struct FvDataset *dataset,
                            size_t index,
                            size_t samples,
                            uint64_t seed,
                            double *out);

// Block soft-threshold of a column of length `len` into `out`.
//
// # Safety
// `column` and `out` must each point to `len` doubles.
enum FvStatus fv_prox_group_lasso(const double *column,
                                  size_t len,
                                  double eta,
                                  double lambda,
                                  double *out);

// Fuses a standard-normal prior with `n_experts` diagonal Gaussians of
// dimension `dim`. `means` and `precisions` are row-major `n_experts × dim`.
//
// # Safety
// Inputs must hold `n_experts * dim` doubles, outputs `dim` doubles.
enum FvStatus fv_poe_fuse(size_t dim,
                          const double *means,
                          const double *precisions,
                          size_t n_experts,
                          double *out_mean,
                          double *out_precision);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FACTVAE_H */
