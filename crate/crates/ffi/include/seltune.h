#ifndef SELTUNE_H
#define SELTUNE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

/*
 Result code of every fallible call.
 */
typedef enum SeltuneStatus {
  SELTUNE_STATUS_OK = 0,
  SELTUNE_STATUS_NULL_POINTER = 1,
  SELTUNE_STATUS_INVALID_ARGUMENT = 2,
  SELTUNE_STATUS_BUFFER_TOO_SMALL = 3,
  SELTUNE_STATUS_CONFIG = 4,
  SELTUNE_STATUS_TRAINER = 5,
  SELTUNE_STATUS_CHECKPOINT = 6,
  SELTUNE_STATUS_IO = 7,
  SELTUNE_STATUS_INTERNAL = 8,
  SELTUNE_STATUS_PANIC = 9,
} SeltuneStatus;

/*
 Opaque list of blocks with their base learning rates.
 */
typedef struct SeltuneBlockSpec SeltuneBlockSpec;

/*
 Opaque stratified fold assignment.
 */
typedef struct SeltunePartition SeltunePartition;

/*
 Ranked outcome of a search.
 */
typedef struct SeltuneSearchResult SeltuneSearchResult;

/*
 Search settings. Fill with [`seltune_search_config_default`] and adjust.
 */
typedef struct SeltuneSearchConfig {
  size_t population_size;
  size_t elite_count;
  size_t max_generations;
  size_t seed_count;
  double perturbation_scale;
  double mutation_rate;
  size_t adaptation_count;
  uint64_t rng_seed;
  uint64_t trial_seed_offset;
  uint32_t max_epochs;
  uint32_t patience;
  /*
   Maximum concurrent callback invocations.
   */
  size_t capacity;
  /*
   Extra attempts for a failed trial.
   */
  uint32_t retry_budget;
} SeltuneSearchConfig;

/*
 One training trial handed to the evaluation callback. All pointers are
 valid only for the duration of the callback.
 */
typedef struct SeltuneTrial {
  const char *request_id;
  uint64_t genotype_id;
  size_t block_count;
  /*
   Effective learning rate per block; 0 for frozen blocks.
   */
  const double *block_rates;
  /*
   1 = fine-tuned, 0 = frozen.
   */
  const uint8_t *mask;
  size_t gene_count;
  /*
   Raw genotype (importance genes, then threshold).
   */
  const double *genes;
  size_t generation_fold;
  uint64_t seed;
  uint32_t max_epochs;
  uint32_t patience;
} SeltuneTrial;

/*
 Evaluation callback: trains the configuration in `trial` and writes the
 validation accuracy in `[0, 1]` to `accuracy_out`. Returns 0 on success;
 any other value marks the trial as failed (it is retried, then scored 0).
 With `capacity > 1` the callback is invoked from several threads at once.
 */
typedef int32_t (*SeltuneEvaluateFn)(void *user_data,
                                     const struct SeltuneTrial *trial,
                                     double *accuracy_out);

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message describing the last failure on the calling thread, or NULL.
 The pointer stays valid until the next failing call on this thread.
 */
const char *seltune_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *seltune_version(void);

/*
 Creates a block spec with `count` blocks named `block0..`; `base_rates`
 holds one positive rate per block.

 # Safety
 `base_rates` must point to `count` doubles; `out` must be writable.
 */
enum SeltuneStatus seltune_block_spec_new(const double *base_rates,
                                          size_t count,
                                          struct SeltuneBlockSpec **out);

/*
 # Safety
 `spec` must be NULL or a handle from [`seltune_block_spec_new`] not yet freed.
 */
void seltune_block_spec_free(struct SeltuneBlockSpec *spec);

/*
 Number of blocks, or 0 for NULL.

 # Safety
 `spec` must be NULL or a live handle.
 */
size_t seltune_block_spec_block_count(const struct SeltuneBlockSpec *spec);

/*
 Genotype length (blocks + 1 threshold gene), or 0 for NULL.

 # Safety
 `spec` must be NULL or a live handle.
 */
size_t seltune_block_spec_genotype_len(const struct SeltuneBlockSpec *spec);

/*
 Learning-rate multiplier `10^(2(gene - 0.5))` of one importance gene.

 # Safety
 `out` must be writable.
 */
enum SeltuneStatus seltune_importance_weight(double gene, double *out);

/*
 Decodes a genotype. `genes` holds `genes_len` values in `[0, 1]` (one
 per block, then the threshold). Each output array must hold
 `out_len >= block count` entries; any output pointer may be NULL to skip
 it. `mask_out[b]` is 1 when block `b` is fine-tuned, 0 when frozen.

 # Safety
 Non-NULL pointers must be valid for the stated lengths.
 */
enum SeltuneStatus seltune_decode(const struct SeltuneBlockSpec *spec,
                                  const double *genes,
                                  size_t genes_len,
                                  uint8_t *mask_out,
                                  double *weights_out,
                                  double *eta_out,
                                  double *rates_out,
                                  size_t out_len);

/*
 Fraction of parameters in fine-tuned blocks. `mask[b]` is 1 for
 fine-tuned blocks, 0 for frozen ones.

 # Safety
 `mask` and `param_counts` must point to `len` values; `out` must be writable.
 */
enum SeltuneStatus seltune_trainable_fraction(const uint8_t *mask,
                                              const uint64_t *param_counts,
                                              size_t len,
                                              double *out);

/*
 Splits `n` samples (`ids[i]` with class `classes[i]`) into `fold_count`
 stratified folds using `seed`.

 # Safety
 `ids` and `classes` must each point to `n` NUL-terminated strings;
 `out` must be writable.
 */
enum SeltuneStatus seltune_partition_new(const char *const *ids,
                                         const char *const *classes,
                                         size_t n,
                                         size_t fold_count,
                                         uint64_t seed,
                                         struct SeltunePartition **out);

/*
 # Safety
 `p` must be NULL or a live handle from [`seltune_partition_new`].
 */
void seltune_partition_free(struct SeltunePartition *p);

/*
 Number of folds, or 0 for NULL.

 # Safety
 `p` must be NULL or a live handle.
 */
size_t seltune_partition_fold_count(const struct SeltunePartition *p);

/*
 Number of samples in fold `fold`.

 # Safety
 `p` must be a live handle; `out` must be writable.
 */
enum SeltuneStatus seltune_partition_fold_len(const struct SeltunePartition *p,
                                              size_t fold,
                                              size_t *out);

/*
 Sample id at `index` of fold `fold` (folds are sorted by id). The
 string is owned by the partition and valid until it is freed.

 # Safety
 `p` must be a live handle; `out` must be writable.
 */
enum SeltuneStatus seltune_partition_sample_id(const struct SeltunePartition *p,
                                               size_t fold,
                                               size_t index,
                                               const char **out);

/*
 Fold used at `generation`: `generation mod fold_count`.

 # Safety
 `out` must be writable.
 */
enum SeltuneStatus seltune_fold_for_generation(size_t generation, size_t fold_count, size_t *out);

/*
 Writes the default settings (population 10, 3 elites, 10 generations,
 3 seeds, 30 epochs, patience 3, perturbation 0.25).

 # Safety
 `out` must be writable.
 */
enum SeltuneStatus seltune_search_config_default(struct SeltuneSearchConfig *out);

/*
 Runs a full search, calling `evaluate` for every training trial. Folds
 rotate through `partition` (its fold count is used). On success `*out`
 receives a result handle to release with [`seltune_search_result_free`].

 # Safety
 Handles must be live; `evaluate` must be non-NULL and, with
 `capacity > 1`, safe to call concurrently with `user_data`.
 */
enum SeltuneStatus seltune_search_run(const struct SeltuneSearchConfig *config,
                                      const struct SeltuneBlockSpec *spec,
                                      const struct SeltunePartition *partition,
                                      SeltuneEvaluateFn evaluate,
                                      void *user_data,
                                      struct SeltuneSearchResult **out);

/*
 # Safety
 `r` must be NULL or a live handle from [`seltune_search_run`].
 */
void seltune_search_result_free(struct SeltuneSearchResult *r);

/*
 Number of distinct evaluated configurations, or 0 for NULL.

 # Safety
 `r` must be NULL or a live handle.
 */
size_t seltune_search_result_count(const struct SeltuneSearchResult *r);

/*
 Configuration at `rank` (0 = best, lowest phi). `genes_out` (may be NULL)
 receives the genotype and must hold `genes_len >= genotype length`.
 `accuracy_out` receives `1 - phi`.

 # Safety
 `r` must be a live handle; non-NULL outputs must be writable.
 */
enum SeltuneStatus seltune_search_result_get(const struct SeltuneSearchResult *r,
                                             size_t rank,
                                             uint64_t *genotype_id_out,
                                             double *phi_out,
                                             double *accuracy_out,
                                             double *genes_out,
                                             size_t genes_len);

/*
 Number of completed generations, or 0 for NULL.

 # Safety
 `r` must be NULL or a live handle.
 */
size_t seltune_search_result_generations(const struct SeltuneSearchResult *r);

/*
 Best and mean phi of the surviving population after `generation`.

 # Safety
 `r` must be a live handle; non-NULL outputs must be writable.
 */
enum SeltuneStatus seltune_search_result_generation(const struct SeltuneSearchResult *r,
                                                    size_t generation,
                                                    double *best_phi_out,
                                                    double *mean_phi_out);

/*
 Runs the search described by a TOML config file, writing artifacts to
 its output directory (same as `seltune run`).

 # Safety
 `config_path` must be a NUL-terminated string.
 */
enum SeltuneStatus seltune_run_config(const char *config_path);

/*
 Continues a run from its checkpoint file (same as `seltune resume`).

 # Safety
 `checkpoint_path` must be a NUL-terminated string.
 */
enum SeltuneStatus seltune_resume(const char *checkpoint_path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SELTUNE_H */
