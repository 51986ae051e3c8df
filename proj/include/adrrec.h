/*
 * adrrec - sequential recommender with multi-dimensional embedding kernels,
 * mix-attention, and layer-wise noise-injection regularization.
 *
 * C interface over the C++ core: opaque handles, integer status codes,
 * JSON strings for structured data. All functions return ADRREC_OK (0) on
 * success; on failure adrrec_last_error() describes the problem for the
 * calling thread. Strings returned through char** must be released with
 * adrrec_string_free().
 */
#ifndef ADRREC_H
#define ADRREC_H

#ifdef __cplusplus
extern "C" {
#endif

typedef struct adrrec_corpus adrrec_corpus;
typedef struct adrrec_model adrrec_model;

enum adrrec_status {
    ADRREC_OK = 0,
    ADRREC_ERR_INTERNAL = 1,
    ADRREC_ERR_CONFIG = 2,
    ADRREC_ERR_DATA = 3,
    ADRREC_ERR_NUMERIC = 4
};

const char* adrrec_version(void);
/* Message for the most recent failure on this thread ("" if none). */
const char* adrrec_last_error(void);
void adrrec_string_free(char* s);

/* --- corpus ----------------------------------------------------------- */

/* format: "movielens-dat" | "amazon-csv" | "jsonl". */
int adrrec_corpus_prepare(const char* input_path, const char* format, int min_count,
                          adrrec_corpus** out);
int adrrec_corpus_load(const char* cache_path, adrrec_corpus** out);
int adrrec_corpus_save(const adrrec_corpus* corpus, const char* cache_path);
/* {"n_users":..,"n_items":..,"n_actions":..,"avg_length":..} */
int adrrec_corpus_stats_json(const adrrec_corpus* corpus, char** json_out);
void adrrec_corpus_free(adrrec_corpus* corpus);

/* --- configuration ----------------------------------------------------- */

/* Full default training configuration (all keys materialized). */
int adrrec_config_default_json(char** json_out);
/* Strict validation: unknown keys and out-of-range values are rejected. */
int adrrec_config_validate(const char* config_json);

/* --- training ----------------------------------------------------------- */

/* Runs the training loop, writes checkpoint.adrk / report.jsonl /
 * effective_config.json under out_dir, and returns the best-validation
 * model. out_model may be NULL when only the artifacts are wanted. */
int adrrec_train(const adrrec_corpus* corpus, const char* config_json, const char* out_dir,
                 adrrec_model** out_model);
int adrrec_model_load(const char* checkpoint_path, adrrec_model** out);
int adrrec_model_save(const adrrec_model* model, const char* checkpoint_path);
void adrrec_model_free(adrrec_model* model);

/* --- evaluation ---------------------------------------------------------- */

/* options_json keys (all optional): "k" (array of cutoffs, default [5,10]),
 * "negatives" (default 100; 0 ranks against the full vocabulary),
 * "seed" (default 1), "batch_size" (default 128). */
int adrrec_evaluate_json(const adrrec_model* model, const adrrec_corpus* corpus,
                         const char* options_json, char** report_json);
/* Leave-one-out evaluation with a contiguous span of the test context masked. */
int adrrec_ood_eval_json(const adrrec_model* model, const adrrec_corpus* corpus,
                         double fraction, const char* options_json, char** report_json);
/* Full fit+evaluate per seed ("1,2,3"); reports per-metric mean and std. */
int adrrec_multiseed_json(const adrrec_corpus* corpus, const char* config_json,
                          const char* seeds_csv, const char* options_json,
                          char** report_json);

/* --- verification --------------------------------------------------------- */

/* Finite-difference check of the full objective on the built-in tiny model.
 * Returns ADRREC_OK when the worst relative error is below 1e-4. */
int adrrec_gradcheck(double* worst_rel_out);

#ifdef __cplusplus
}
#endif

#endif /* ADRREC_H */
