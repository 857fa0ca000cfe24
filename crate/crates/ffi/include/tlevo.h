#ifndef TLEVO_H
#define TLEVO_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by fallible functions.
 */
typedef enum TlevoStatus {
  TLEVO_STATUS_OK = 0,
  TLEVO_STATUS_NULL_POINTER = 1,
  TLEVO_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The requested value does not exist (no best chromosome, index out of range).
   */
  TLEVO_STATUS_NOT_FOUND = 3,
  TLEVO_STATUS_PANIC = 4,
} TlevoStatus;

/**
 * Why a search stopped.
 */
typedef enum TlevoStopReason {
  TLEVO_STOP_REASON_GENERATION_CAP = 0,
  TLEVO_STOP_REASON_PLATEAU = 1,
  TLEVO_STOP_REASON_EVALUATOR_FAILURE = 2,
} TlevoStopReason;

/**
 * Search settings. Opaque.
 */
typedef struct TlevoConfig TlevoConfig;

/**
 * Outcome of a search. Opaque.
 */
typedef struct TlevoResult TlevoResult;

/**
 * Gene values of one chromosome.
 */
typedef struct TlevoChromosome {
  uint32_t included_layers;
  uint32_t frozen_layers;
  double learning_rate;
  double dropout;
} TlevoChromosome;

/**
 * Architecture derived from a chromosome. Only the first `block_count`
 * entries of `block_layer_counts` are meaningful.
 */
typedef struct TlevoPlan {
  uint32_t block_layer_counts[4];
  uint32_t block_count;
  uint32_t frozen_prefix;
  uint32_t se_layer_count;
  double learning_rate;
  double dropout;
} TlevoPlan;

/**
 * Loss callback. Writes the average loss of `plan` after `epochs` epochs to
 * `loss_out` and returns 0, or returns non-zero on failure.
 */
typedef int32_t (*TlevoEvaluateFn)(void *user_data,
                                   const struct TlevoPlan *plan,
                                   uint32_t epochs,
                                   double *loss_out);

/**
 * One row of the per-generation record.
 */
typedef struct TlevoGeneration {
  uint32_t index;
  double best_fitness;
  double avg_fitness;
  size_t evaluator_calls;
  size_t cache_hits;
  struct TlevoChromosome best;
} TlevoGeneration;

/**
 * McNemar's test outcome; `statistic` and `p_value` are NaN when
 * `computable` is false.
 */
typedef struct TlevoMcNemar {
  bool computable;
  double statistic;
  double p_value;
} TlevoMcNemar;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *tlevo_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tlevo_version(void);

/**
 * Default settings with the given seed. Never returns NULL.
 */
struct TlevoConfig *tlevo_config_new(uint64_t seed);

/**
 * # Safety
 * `config` must be NULL or a pointer from [`tlevo_config_new`] not yet freed.
 */
void tlevo_config_free(struct TlevoConfig *config);

/**
 * Population size (at least 2). Rejected values leave the settings unchanged.
 *
 * # Safety
 * `config` must be NULL or a live config handle.
 */
enum TlevoStatus tlevo_config_set_population_size(struct TlevoConfig *config, size_t value);

/**
 * Generation cap (at least 1). Rejected values leave the settings unchanged.
 *
 * # Safety
 * `config` must be NULL or a live config handle.
 */
enum TlevoStatus tlevo_config_set_max_generations(struct TlevoConfig *config, uint32_t value);

/**
 * Plateau threshold on the change in average fitness. Rejected values leave the settings unchanged.
 *
 * # Safety
 * `config` must be NULL or a live config handle.
 */
enum TlevoStatus tlevo_config_set_plateau_epsilon(struct TlevoConfig *config, double value);

/**
 * Per-gene mutation probability in [0, 1]. Rejected values leave the settings unchanged.
 *
 * # Safety
 * `config` must be NULL or a live config handle.
 */
enum TlevoStatus tlevo_config_set_mutation_rate(struct TlevoConfig *config, double value);

/**
 * Tournament size (at least 2). Rejected values leave the settings unchanged.
 *
 * # Safety
 * `config` must be NULL or a live config handle.
 */
enum TlevoStatus tlevo_config_set_tournament_draws(struct TlevoConfig *config, size_t value);

/**
 * Training epochs requested per fitness probe. Rejected values leave the settings unchanged.
 *
 * # Safety
 * `config` must be NULL or a live config handle.
 */
enum TlevoStatus tlevo_config_set_epochs(struct TlevoConfig *config, uint32_t value);

/**
 * RNG seed. Rejected values leave the settings unchanged.
 *
 * # Safety
 * `config` must be NULL or a live config handle.
 */
enum TlevoStatus tlevo_config_set_seed(struct TlevoConfig *config, uint64_t value);

/**
 * Maps a chromosome (validated against the default gene domains) to its
 * architecture.
 *
 * # Safety
 * `chromosome` and `plan_out` must be NULL or valid for reads/writes.
 */
enum TlevoStatus tlevo_map_to_architecture(const struct TlevoChromosome *chromosome,
                                           struct TlevoPlan *plan_out);

/**
 * Runs a search against the built-in synthetic landscape whose optimum is
 * (57, 2, 0.1, 0.1).
 *
 * # Safety
 * `config` must be a live config handle and `result_out` valid for writes.
 */
enum TlevoStatus tlevo_run_synthetic(const struct TlevoConfig *config,
                                     struct TlevoResult **result_out);

/**
 * Runs a search, scoring chromosomes with `evaluate`. Evaluations happen
 * serially on the calling thread. A non-zero callback return stops the
 * search with `TLEVO_STOP_REASON_EVALUATOR_FAILURE`.
 *
 * # Safety
 * `config` must be a live config handle, `result_out` valid for writes, and
 * `evaluate` safe to call with `user_data`.
 */
enum TlevoStatus tlevo_run_with_callback(const struct TlevoConfig *config,
                                         TlevoEvaluateFn evaluate,
                                         void *user_data,
                                         struct TlevoResult **result_out);

/**
 * # Safety
 * `result` must be NULL or a handle from a run function not yet freed.
 */
void tlevo_result_free(struct TlevoResult *result);

/**
 * # Safety
 * `result` and `out` must be valid.
 */
enum TlevoStatus tlevo_result_stop_reason(const struct TlevoResult *result,
                                          enum TlevoStopReason *out);

/**
 * Number of fully evaluated generations; 0 for a NULL handle.
 *
 * # Safety
 * `result` must be NULL or a live result handle.
 */
size_t tlevo_result_generation_count(const struct TlevoResult *result);

/**
 * # Safety
 * `result` and `out` must be valid.
 */
enum TlevoStatus tlevo_result_generation(const struct TlevoResult *result,
                                         size_t index,
                                         struct TlevoGeneration *out);

/**
 * All-time best chromosome and its fitness. `NotFound` when the first
 * generation failed to evaluate.
 *
 * # Safety
 * `result`, `chromosome_out` and `fitness_out` must be valid.
 */
enum TlevoStatus tlevo_result_best(const struct TlevoResult *result,
                                   struct TlevoChromosome *chromosome_out,
                                   double *fitness_out);

/**
 * Evaluator error that stopped the run, or NULL. Valid while `result` lives.
 *
 * # Safety
 * `result` must be NULL or a live result handle.
 */
const char *tlevo_result_failure_message(const struct TlevoResult *result);

/**
 * Per-generation CSV as a newly allocated string; free it with
 * [`tlevo_string_free`]. NULL on failure.
 *
 * # Safety
 * `result` must be NULL or a live result handle.
 */
char *tlevo_result_generations_csv(const struct TlevoResult *result);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void tlevo_string_free(char *s);

/**
 * ROC AUC of `scores` against 0/1 `labels`, both of length `n`.
 *
 * # Safety
 * `labels` and `scores` must point to `n` readable elements; `auc_out`
 * must be valid for writes.
 */
enum TlevoStatus tlevo_auc(const uint8_t *labels, const double *scores, size_t n, double *auc_out);

/**
 * McNemar's test on a paired contingency table: `a` both correct, `b`
 * only the first model correct, `c` only the second, `d` both wrong.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum TlevoStatus tlevo_mcnemar(uint64_t a,
                               uint64_t b,
                               uint64_t c,
                               uint64_t d,
                               struct TlevoMcNemar *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TLEVO_H */
