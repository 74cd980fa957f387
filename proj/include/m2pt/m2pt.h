/* C interface to the multimodal prompt-tuning library. Every function
 * returns an m2pt_status; on failure m2pt_last_error() describes it. */
#ifndef M2PT_M2PT_H
#define M2PT_M2PT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define M2PT_API __attribute__((visibility("default")))
#else
#define M2PT_API
#endif

typedef enum m2pt_status {
  M2PT_OK = 0,
  M2PT_ERR_DIMENSION = 1,
  M2PT_ERR_NUMERIC = 2,
  M2PT_ERR_CAPACITY = 3,
  M2PT_ERR_LAYOUT = 4,
  M2PT_ERR_REGISTRY = 5,
  M2PT_ERR_FORMAT = 6,
  M2PT_ERR_CONFIG = 7,
  M2PT_ERR_SPLIT = 8,
  M2PT_ERR_STATE = 9,
  M2PT_ERR_IO = 10,
  M2PT_ERR_USAGE = 11,
  M2PT_ERR_INTERNAL = 99
} m2pt_status;

typedef struct m2pt_config m2pt_config;
typedef struct m2pt_session m2pt_session;

/* Message for the most recent failure on this thread ("" if none). */
M2PT_API const char* m2pt_last_error(void);
M2PT_API const char* m2pt_status_name(m2pt_status status);

/* ---- configuration ---- */
M2PT_API m2pt_status m2pt_config_new(m2pt_config** out);
M2PT_API m2pt_status m2pt_config_load(const char* path, m2pt_config** out);
M2PT_API m2pt_status m2pt_config_parse(const char* text, m2pt_config** out);
M2PT_API void m2pt_config_free(m2pt_config* config);
/* Dotted key such as "train.lr" or "prompt.visual_len". */
M2PT_API m2pt_status m2pt_config_set(m2pt_config* config, const char* key, const char* value);
/* Current value of a key as text; same buffer protocol as m2pt_config_echo. */
M2PT_API m2pt_status m2pt_config_get(const m2pt_config* config, const char* key, char* buf, size_t capacity,
                                     size_t* needed);
M2PT_API m2pt_status m2pt_config_validate(const m2pt_config* config);
/* Copies the text form (NUL-terminated) into buf when it fits; *needed
 * receives the size including the terminator. */
M2PT_API m2pt_status m2pt_config_echo(const m2pt_config* config, char* buf, size_t capacity, size_t* needed);

/* ---- sessions: one model plus its task split ---- */
M2PT_API m2pt_status m2pt_session_create(const m2pt_config* config, m2pt_session** out);
M2PT_API void m2pt_session_free(m2pt_session* session);
/* Trains on the training mixture; writes the step,epoch,lr,loss log to
 * metrics_csv when it is non-NULL. */
M2PT_API m2pt_status m2pt_session_train(m2pt_session* session, const char* metrics_csv);
/* Zero-shot exact-match accuracy on the held-out tasks; per-task rows go to
 * eval_csv when non-NULL. */
M2PT_API m2pt_status m2pt_session_evaluate(m2pt_session* session, const char* eval_csv, double* mean_accuracy);
M2PT_API m2pt_status m2pt_session_save(const m2pt_session* session, const char* path);
M2PT_API m2pt_status m2pt_session_load(m2pt_session* session, const char* path);
M2PT_API m2pt_status m2pt_session_trainable_params(const m2pt_session* session, uint64_t* count);
/* Writes the train/unseen split records (one JSON object per line). */
M2PT_API m2pt_status m2pt_session_write_splits(const m2pt_session* session, const char* directory);
/* Last-layer attention maps for the held-out instance with the given seed
 * (searched across all tasks); writes CSVs into directory. */
M2PT_API m2pt_status m2pt_session_analyze_attention(const m2pt_session* session, uint64_t instance_seed,
                                                    const char* directory);

/* ---- parameter accounting ---- */
typedef struct m2pt_param_account {
  uint64_t visual_prompts;
  uint64_t textual_prompts;
  uint64_t interaction;
  uint64_t head;
  uint64_t trainable;
  double base_total;
  double ratio_of_base;  /* trainable / base_total */
  double ratio_of_total; /* trainable / (base_total + trainable) */
} m2pt_param_account;

/* paper_scale != 0 uses 24×1024 vision / 32×4096 language dims with a 7e9
 * base; otherwise the config's dims and its frozen element count. Prompt
 * lengths, schedule and head/interaction flags come from the config. */
M2PT_API m2pt_status m2pt_count_params(const m2pt_config* config, int paper_scale, m2pt_param_account* out);

/* ---- experiments: each writes one CSV table ---- */
/* drop: "visual", "textual" or "interaction". */
M2PT_API m2pt_status m2pt_run_ablation(const m2pt_config* config, const char* drop, const char* csv_path);
M2PT_API m2pt_status m2pt_run_locations(const m2pt_config* config, const char* csv_path);
M2PT_API m2pt_status m2pt_run_grid(const m2pt_config* config, const double* lrs, size_t n_lrs,
                                   const uint64_t* lts, size_t n_lts, const uint64_t* lvs, size_t n_lvs,
                                   const char* csv_path);
M2PT_API m2pt_status m2pt_run_sweep_data(const m2pt_config* config, const double* fractions, size_t n,
                                         const char* csv_path);
M2PT_API m2pt_status m2pt_run_sweep_epochs(const m2pt_config* config, const uint64_t* epochs, size_t n,
                                           const char* csv_path);
M2PT_API m2pt_status m2pt_run_sweep_init(const m2pt_config* config, const char* csv_path);

#ifdef __cplusplus
}
#endif

#endif
