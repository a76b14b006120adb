/*
 * dpcvqa — decoupled perception / residual-calibration video quality
 * assessment, C interface.
 *
 * A frozen multimodal model's verbalizer logits give a base quality score
 * q_b and confidence u_b; a lightweight trainable branch attends over frozen
 * visual plus auxiliary tokens and predicts a bounded residual correction
 * Delta, so the final score is y_hat = q_b + Delta.
 *
 * All functions return DPCVQA_OK (0) on success or a nonzero status code;
 * dpcvqa_last_error() holds a thread-local description of the most recent
 * failure on the calling thread. Objects are opaque handles released with
 * their matching _free function. Strings returned through char** out
 * parameters are heap-allocated; release them with dpcvqa_string_free.
 */

#ifndef DPCVQA_H
#define DPCVQA_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DPCVQA_API __declspec(dllexport)
#else
#define DPCVQA_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef int32_t dpcvqa_status;

enum {
    DPCVQA_OK = 0,
    DPCVQA_E_INVALID_ARGUMENT = 1,
    DPCVQA_E_SHAPE_MISMATCH = 2,
    DPCVQA_E_LENGTH_MISMATCH = 3,
    DPCVQA_E_NOT_FINITE = 4,
    DPCVQA_E_OUT_OF_RANGE = 5,
    DPCVQA_E_BAD_MAGIC = 6,
    DPCVQA_E_BAD_VERSION = 7,
    DPCVQA_E_TRUNCATED = 8,
    DPCVQA_E_FORMAT = 9,
    DPCVQA_E_IO = 10,
    DPCVQA_E_NUMERIC = 11,
    DPCVQA_E_UNDEFINED_METRIC = 12,
    DPCVQA_E_PROTOCOL = 13,
    DPCVQA_E_DATA = 14,
    DPCVQA_E_INTERNAL = 15
};

/* Variant modes (ablation surface). */
enum {
    DPCVQA_MODE_BASE_ONLY = 0,
    DPCVQA_MODE_DIRECT = 1,
    DPCVQA_MODE_SCORE_COND = 2,
    DPCVQA_MODE_RESIDUAL = 3
};

typedef struct dpcvqa_container dpcvqa_container; /* loaded feature file  */
typedef struct dpcvqa_model dpcvqa_model;         /* calibration branch   */

DPCVQA_API uint32_t dpcvqa_abi_version(void);
DPCVQA_API const char* dpcvqa_status_name(dpcvqa_status status);
DPCVQA_API const char* dpcvqa_last_error(void);
DPCVQA_API void dpcvqa_string_free(char* s);

/* Labeled sub-seed derivation. All toolchain randomness fans out from one
 * user seed through labels "split", "init" and "train" (the latter two also
 * keyed by fold index). */
DPCVQA_API uint64_t dpcvqa_derive_seed(uint64_t seed, const char* label,
                                       uint64_t index);

/* ---- containers (.dpcf feature files) ---------------------------------- */

typedef struct dpcvqa_synth_config {
    uint64_t record_count;
    uint32_t k;        /* verbalizer count            */
    uint32_t d_m;      /* visual token dimension      */
    uint32_t d_a;      /* auxiliary token dimension   */
    uint32_t n_vis;    /* visual tokens per record    */
    uint32_t n_aux;    /* auxiliary tokens per record */
    double noise_sigma;
    uint64_t seed;
} dpcvqa_synth_config;

typedef struct dpcvqa_container_info {
    uint32_t version;
    uint32_t k;
    uint32_t d_m;
    uint32_t d_a;
    uint64_t record_count;
    uint64_t labeled_count;
    float mos_lo;
    float mos_hi;
} dpcvqa_container_info;

DPCVQA_API void dpcvqa_synth_config_init(dpcvqa_synth_config* cfg);
DPCVQA_API dpcvqa_status dpcvqa_container_generate(
    const dpcvqa_synth_config* cfg, dpcvqa_container** out);
DPCVQA_API dpcvqa_status dpcvqa_container_open(const char* path,
                                               dpcvqa_container** out);
DPCVQA_API dpcvqa_status dpcvqa_container_save(const dpcvqa_container* c,
                                               const char* path);
DPCVQA_API dpcvqa_status dpcvqa_container_info_get(const dpcvqa_container* c,
                                                   dpcvqa_container_info* out);
DPCVQA_API void dpcvqa_container_free(dpcvqa_container* c);

/* ---- models ------------------------------------------------------------- */

typedef struct dpcvqa_model_config {
    uint32_t d;       /* shared latent dimension */
    uint32_t queries; /* learnable calibration queries M */
    uint32_t heads;   /* attention heads (must divide d) */
    double alpha;     /* residual bound */
    int32_t mode;     /* DPCVQA_MODE_* */
} dpcvqa_model_config;

DPCVQA_API void dpcvqa_model_config_init(dpcvqa_model_config* cfg);

/* Creates a model with dimensions taken from the container header. The seed
 * drives the calibrated-start initialization. */
DPCVQA_API dpcvqa_status dpcvqa_model_create(const dpcvqa_model_config* cfg,
                                             const dpcvqa_container* dims_from,
                                             uint64_t seed, dpcvqa_model** out);
DPCVQA_API dpcvqa_status dpcvqa_model_open(const char* path,
                                           dpcvqa_model** out);
DPCVQA_API dpcvqa_status dpcvqa_model_save(const dpcvqa_model* m,
                                           const char* path);
DPCVQA_API dpcvqa_status dpcvqa_model_get_mode(const dpcvqa_model* m,
                                               int32_t* mode);
/* Replaces the default equally spaced verbalizer anchors. `k` must match the
 * model's verbalizer count; anchors must be strictly increasing in [0,1]. */
DPCVQA_API dpcvqa_status dpcvqa_model_set_anchors(dpcvqa_model* m,
                                                  const double* anchors,
                                                  uint32_t k);
/* Attention heads are a runtime hyperparameter and are not stored in
 * checkpoints; call this after dpcvqa_model_open when a model was trained
 * with more than one head. */
DPCVQA_API dpcvqa_status dpcvqa_model_set_heads(dpcvqa_model* m,
                                                uint32_t heads);
DPCVQA_API void dpcvqa_model_free(dpcvqa_model* m);

/* ---- training ------------------------------------------------------------ */

typedef struct dpcvqa_train_config {
    double learning_rate;
    double weight_decay;
    double beta1;
    double beta2;
    double epsilon;
    uint32_t batch_size;
    uint32_t epochs;
    double lambda_res;
    double smooth_l1_beta;
    uint64_t seed; /* user-level seed; split/init/train streams derive from it */
} dpcvqa_train_config;

typedef void (*dpcvqa_epoch_callback)(uint32_t epoch, double train_loss,
                                      double mean_abs_delta, double val_srcc,
                                      double val_plcc, void* user);

DPCVQA_API void dpcvqa_train_config_init(dpcvqa_train_config* cfg);

/* Trains the model on the given fold of the 5-fold few-shot split and leaves
 * the best checkpoint (by validation SRCC) in the model handle. */
DPCVQA_API dpcvqa_status dpcvqa_train_fold(dpcvqa_model* m,
                                           const dpcvqa_container* data,
                                           const dpcvqa_train_config* cfg,
                                           uint32_t fold,
                                           dpcvqa_epoch_callback cb,
                                           void* user);

/* ---- scoring / evaluation -------------------------------------------------- */

typedef struct dpcvqa_metrics {
    double srcc;
    double plcc;
    double mean_abs_delta;
    uint64_t n;
} dpcvqa_metrics;

enum {
    DPCVQA_POOL_TRAIN = 0,
    DPCVQA_POOL_VAL = 1,
    DPCVQA_POOL_TEST = 2
};

/* Per-record scores (id, q_b, u_b, delta, y_hat, y) as CSV; unlabeled rows
 * leave the y column empty. */
DPCVQA_API dpcvqa_status dpcvqa_score_csv(const dpcvqa_model* m,
                                          const dpcvqa_container* data,
                                          char** out_csv);

/* Correlation metrics over one pool of one protocol fold (split derived from
 * `seed`), or over every labeled record. `out_csv` may be NULL. */
DPCVQA_API dpcvqa_status dpcvqa_evaluate_fold(const dpcvqa_model* m,
                                              const dpcvqa_container* data,
                                              uint64_t seed, uint32_t fold,
                                              int32_t pool,
                                              dpcvqa_metrics* out,
                                              char** out_csv);
DPCVQA_API dpcvqa_status dpcvqa_evaluate_all(const dpcvqa_model* m,
                                             const dpcvqa_container* data,
                                             dpcvqa_metrics* out,
                                             char** out_csv);

/* Trains and evaluates all five folds; returns the per-fold table plus mean
 * row as TSV. The model handle only supplies the architecture; fresh
 * parameters are initialized per fold. */
DPCVQA_API dpcvqa_status dpcvqa_run_protocol(const dpcvqa_model* m,
                                             const dpcvqa_container* data,
                                             const dpcvqa_train_config* cfg,
                                             dpcvqa_metrics* mean_out,
                                             char** out_tsv);

/* Residual diagnostics over the labeled records: per-sample table, the
 * base-error histogram (20 bins over [-1,1]) and the per-decile mean of
 * (y - q_b) against the base score. Any out pointer may be NULL. */
DPCVQA_API dpcvqa_status dpcvqa_analyze(const dpcvqa_model* m,
                                        const dpcvqa_container* data,
                                        char** samples_csv, char** hist_csv,
                                        char** deciles_csv);

/* ---- gradient verification --------------------------------------------------- */

/* Sweeps analytic gradients against central finite differences (binary64,
 * h = 1e-5) over a grid of small random configurations in every variant
 * mode. Writes the worst relative error and a per-tensor report. `corrupt`
 * doubles one gradient coordinate first, as a self-test of the check. */
DPCVQA_API dpcvqa_status dpcvqa_fd_check(uint64_t seed, int32_t corrupt,
                                         double* max_rel_error, char** report);

#ifdef __cplusplus
}
#endif

#endif /* DPCVQA_H */
