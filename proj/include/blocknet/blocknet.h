/* blocknet C API: datasets and models as opaque handles, plus the experiment
 * commands the CLI exposes. All functions that can fail return bn_status;
 * bn_last_error() carries the most recent error message of the calling
 * thread. */

#ifndef BLOCKNET_BLOCKNET_H
#define BLOCKNET_BLOCKNET_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bn_status {
  BN_OK = 0,
  BN_ERR_INVALID_ARGUMENT = 1,
  BN_ERR_IO = 2,
  BN_ERR_BAD_MAGIC = 3,
  BN_ERR_BAD_VERSION = 4,
  BN_ERR_TRUNCATED = 5,
  BN_ERR_BAD_TASK = 6,
  BN_ERR_GENERATION_FAILED = 7,
  BN_ERR_DIVERGED = 8,
  BN_ERR_DIGEST_MISMATCH = 9,
  BN_ERR_VERIFY_FAILED = 10,
  BN_ERR_UNKNOWN = 11
} bn_status;

const char* bn_status_name(bn_status status);

/* Message for the last failing call on this thread; empty string if none. */
const char* bn_last_error(void);

/* --- datasets ----------------------------------------------------------- */

typedef struct bn_dataset bn_dataset;

/* Generates a class-balanced labeled dataset for one of the six tasks
 * (ang_crs, ang_crs_ln, ang_tri_ln, blt_srp, blt_srp_ln, crs_ncrs). */
bn_status bn_dataset_generate(const char* task, uint64_t n, uint64_t seed,
                              int threads, bn_dataset** out);
bn_status bn_dataset_write(const bn_dataset* ds, const char* path);
bn_status bn_dataset_read(const char* path, bn_dataset** out);
uint64_t bn_dataset_size(const bn_dataset* ds);
const char* bn_dataset_task(const bn_dataset* ds);
void bn_dataset_free(bn_dataset* ds);

/* --- models -------------------------------------------------------------- */

/* A handle wraps either a plain network (.bnmd) or a block composition
 * (.bnbm); bn_model_load dispatches on the file's magic. */
typedef struct bn_model bn_model;

bn_status bn_model_load(const char* path, bn_model** out);
int64_t bn_model_param_count(const bn_model* model); /* trainable parameters */
bn_status bn_model_evaluate(const bn_model* model, const bn_dataset* ds,
                            double* error_pct);
void bn_model_free(bn_model* model);

/* --- experiment commands -------------------------------------------------- */

/* Runs the experiment described by a key=value config file; trained models,
 * per-epoch logs, and cached results go under out_dir. On success writes the
 * aggregate "mean best worst params" into summary (when non-NULL) as four
 * doubles. */
bn_status bn_cmd_train(const char* config_path, const char* out_dir, int threads,
                       double summary[4]);

/* Reproduces result table 1, 2 or 3 at the given dataset scale; writes
 * table<id>.csv under out_dir. */
bn_status bn_cmd_table(int table_id, double scale, int repetitions,
                       uint64_t master_seed, const char* out_dir, int threads);

/* Sweeps block architectures over base-model counts (comma-separated list,
 * e.g. "1,2,3,4,5"); writes fig3.csv and fig3_plot.dat under out_dir. */
bn_status bn_cmd_fig3(const char* base_counts, int samples_per_count, double scale,
                      int repetitions, uint64_t master_seed, const char* out_dir,
                      int threads);

/* Parameter-count, freeze-law and gradient self-checks; prints one line per
 * check. Returns BN_OK only if every check passes. */
bn_status bn_cmd_verify(uint64_t seed);

#ifdef __cplusplus
}
#endif

#endif /* BLOCKNET_BLOCKNET_H */
