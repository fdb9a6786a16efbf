/* tsesv.h
 * C interface to the target-speaker-extraction speaker-verification
 * toolkit. All functions return 0 on success, 2 on input/usage errors
 * (bad paths, malformed files, invalid configuration) and 1 on internal
 * numeric failures; the message is retrievable from the context.
 */

#ifndef TSESV_H
#define TSESV_H

#ifdef __cplusplus
extern "C" {
#endif

typedef struct tsesv_ctx tsesv_ctx;

tsesv_ctx* tsesv_ctx_new(void);
void tsesv_ctx_free(tsesv_ctx* ctx);

/* Message from the most recent failing call; empty string if none. */
const char* tsesv_last_error(const tsesv_ctx* ctx);

/* Synthesize the speaker corpus into out_dir (+ corpus.jsonl). */
int tsesv_synth_corpus(tsesv_ctx* ctx, const char* config_path, const char* out_dir);

/* Render the mixture plan: WAVs, mixtures.jsonl and the two test trial
 * lists (trials_mixture.txt, trials_clean.txt). */
int tsesv_simulate(tsesv_ctx* ctx, const char* config_path, const char* corpus_manifest,
                   const char* out_dir);

/* Train an extraction network. variant may be NULL/"" to use the config
 * value, or "sbf-mtsal" / "sbf-mtsal-concat". */
int tsesv_train_extractor(tsesv_ctx* ctx, const char* config_path, const char* variant,
                          const char* mixture_manifest, const char* corpus_manifest,
                          const char* out_model, const char* out_log);

/* Extract every mixture in the manifest into out_dir. */
int tsesv_extract(tsesv_ctx* ctx, const char* model_path, const char* mixture_manifest,
                  const char* corpus_manifest, const char* out_dir);

/* Train the UBM/i-vector/LDA/PLDA back-end from one or more corpus-schema
 * manifests (train split only). */
int tsesv_train_backend(tsesv_ctx* ctx, const char* config_path, const char* const* manifests,
                        int n_manifests, const char* out_model);

/* Score a trial list. mixture_manifest may be NULL/"" when all test sides
 * are clean utterances; tse_model may be NULL/"" to score audio as-is. */
int tsesv_score(tsesv_ctx* ctx, const char* backend_model, const char* trials_path,
                const char* corpus_manifest, const char* mixture_manifest,
                const char* tse_model, const char* out_scores);

/* EER / minDCF report JSON plus an optional DET curve CSV (pass NULL/""
 * to skip the curve). */
int tsesv_report(tsesv_ctx* ctx, const char* scores_path, const char* out_json,
                 const char* out_det_csv);

/* Opaque handle for repeated extraction with one loaded model. */
typedef struct tsesv_extractor tsesv_extractor;

tsesv_extractor* tsesv_extractor_load(tsesv_ctx* ctx, const char* model_path);
void tsesv_extractor_free(tsesv_extractor* model);
int tsesv_extractor_run(tsesv_ctx* ctx, const tsesv_extractor* model, const char* mixture_wav,
                        const char* aux_wav, const char* out_wav);

#ifdef __cplusplus
}
#endif

#endif /* TSESV_H */
