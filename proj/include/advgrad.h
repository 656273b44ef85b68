/* advgrad C API: adversarial attack / defense / robust-training toolkit.
 *
 * Opaque handles, status codes, and UTF-8 JSON strings. Every function that
 * can fail returns advgrad_status; the message for the most recent failure
 * on the calling thread is available via advgrad_last_error(). Strings
 * returned through char** out-parameters are heap-allocated and must be
 * released with advgrad_string_free().
 */
#ifndef ADVGRAD_H
#define ADVGRAD_H

#ifdef __cplusplus
extern "C" {
#endif

typedef struct advgrad_model advgrad_model;
typedef struct advgrad_dataset advgrad_dataset;

typedef enum advgrad_status {
  ADVGRAD_OK = 0,
  ADVGRAD_ERR_INVALID_ARGUMENT = 1, /* bad parameter, shape, or config */
  ADVGRAD_ERR_FORMAT = 2,           /* malformed model/dataset/JSON input */
  ADVGRAD_ERR_INTERNAL = 3          /* invariant violation */
} advgrad_status;

/* "MAJOR.MINOR.PATCH" and the "MAJOR.MINOR" prefix reports carry. Static
 * storage; do not free. */
const char* advgrad_version(void);
const char* advgrad_version_report(void);

/* Message for the last failure on this thread (static storage; valid until
 * the next failing call). */
const char* advgrad_last_error(void);

void advgrad_string_free(char* s);

/* ---- datasets (IDX format, MNIST layout) ---- */
advgrad_status advgrad_dataset_load_idx(const char* images_path,
                                        const char* labels_path,
                                        advgrad_dataset** out);
void advgrad_dataset_free(advgrad_dataset* ds);
long advgrad_dataset_size(const advgrad_dataset* ds);
advgrad_status advgrad_dataset_slice(const advgrad_dataset* ds, long offset,
                                     long count, advgrad_dataset** out);

/* ---- models ---- */
/* arch examples: "mlp:64-32-10", "conv:1x8x8:c4x3x3s1p1:d10" */
advgrad_status advgrad_model_init(const char* arch, unsigned long long seed,
                                  advgrad_model** out);
advgrad_status advgrad_model_load(const char* path, advgrad_model** out);
advgrad_status advgrad_model_save(const advgrad_model* model,
                                  const char* path);
void advgrad_model_free(advgrad_model* model);
/* descriptor string; heap-allocated. */
advgrad_status advgrad_model_descriptor(const advgrad_model* model,
                                        char** out);

/* ---- training ----
 * config_json: {"epochs": int, "batch_size": int, "lr": number,
 *               "seed": unsigned, "inner_attack": {attack config} | absent}
 * With inner_attack present this is adversarial training: each minibatch is
 * regenerated against the current parameters before the SGD step.
 * log_out (optional): per-epoch loss lines. */
advgrad_status advgrad_train(advgrad_model* model,
                             const advgrad_dataset* dataset,
                             const char* config_json, char** log_out);

/* ---- evaluation / benchmarking ----
 * options_json:
 *   {"attack": {attack config} | null,
 *    "defense": "pipeline spec" (optional, e.g. "median:3,bitsqueeze:1"),
 *    "bpda": bool (optional; straight-through wrap of non-differentiable
 *                  defense stages),
 *    "seed": unsigned,
 *    "model_digest": string (optional, recorded verbatim),
 *    "dataset_id": string (optional, recorded verbatim)}
 * report_out: one-line JSON AttackReport. */
advgrad_status advgrad_evaluate(const advgrad_model* model,
                                const advgrad_dataset* dataset,
                                const char* options_json, char** report_out);

/* Structural validation of a report line against this build's schema and
 * version. Returns ADVGRAD_OK or ADVGRAD_ERR_FORMAT (details via
 * advgrad_last_error). */
advgrad_status advgrad_report_validate(const char* report_json);

/* Comma-separated list of attack names the evaluator dispatches. */
advgrad_status advgrad_attack_list(char** out);
/* Comma-separated hyperparameter names the named attack requires before a
 * report may be emitted. */
advgrad_status advgrad_attack_required_params(const char* attack, char** out);

/* FNV-1a 64 content digest, hex; the digest recorded in reports. */
advgrad_status advgrad_file_digest(const char* path, char** digest_out);

#ifdef __cplusplus
}
#endif

#endif /* ADVGRAD_H */
