/*
 * cnnselect C API.
 *
 * SLA-aware probabilistic model selection for cloud inference: profile
 * store, budget arithmetic, the three-stage selector, a seeded request-replay
 * simulator and a mock inference gateway.
 *
 * Conventions:
 *  - Every fallible call returns a cns_status; on failure a message is
 *    available from cns_last_error() on the same thread.
 *  - Objects are opaque handles released with the matching *_free call.
 *  - Strings returned through `char** out` are NUL-terminated, owned by the
 *    caller and released with cns_string_free().
 */
#ifndef CNNSELECT_CNNSELECT_H
#define CNNSELECT_CNNSELECT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(CNNSELECT_BUILDING)
#    define CNS_API __declspec(dllexport)
#  else
#    define CNS_API __declspec(dllimport)
#  endif
#else
#  define CNS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cns_status {
  CNS_OK = 0,
  CNS_E_INVALID_ARGUMENT = 1,
  CNS_E_PARSE = 2,
  CNS_E_DUPLICATE_NAME = 3,
  CNS_E_NOT_FOUND = 4,
  CNS_E_DOMAIN = 5,
  CNS_E_NO_MODELS = 6,
  CNS_E_ESTIMATION_UNAVAILABLE = 7,
  CNS_E_CONFIG = 8,
  CNS_E_INSUFFICIENT_POLICIES = 9,
  CNS_E_VALIDATION = 10,
  CNS_E_CONFLICT = 11,
  CNS_E_IO = 12,
  CNS_E_INTERNAL = 13
} cns_status;

typedef enum cns_format { CNS_FORMAT_JSON = 0, CNS_FORMAT_CSV = 1 } cns_format;

typedef enum cns_accuracy_metric { CNS_TOP1 = 0, CNS_TOP5 = 1 } cns_accuracy_metric;

typedef struct cns_store cns_store;
typedef struct cns_rng cns_rng;
typedef struct cns_report cns_report;
typedef struct cns_gateway cns_gateway;

CNS_API const char* cns_version(void);
CNS_API const char* cns_status_string(cns_status status);
CNS_API const char* cns_last_error(void);
CNS_API void cns_string_free(char* s);

/* ---- profile store ---------------------------------------------------- */

CNS_API cns_status cns_store_new(cns_store** out);
/* Parses a profile document; `len` bytes of `text`. */
CNS_API cns_status cns_store_load(const char* text, size_t len, cns_format format,
                                  cns_store** out);
/* Format chosen by extension (.json / .csv). */
CNS_API cns_status cns_store_load_file(const char* path, cns_store** out);
CNS_API void cns_store_free(cns_store* store);
CNS_API size_t cns_store_size(const cns_store* store);
/* Writes the updated profile as a JSON record when `profile_json` is non-null. */
CNS_API cns_status cns_store_observe(cns_store* store, const char* name, double elapsed_ms,
                                     char** profile_json);
/* Inserts or replaces one profile-file record (JSON object). */
CNS_API cns_status cns_store_upsert(cns_store* store, const char* record_json);
/* Overrides every observation count, keeping mean/std as the prior. */
CNS_API cns_status cns_store_set_pseudo_count(cns_store* store, uint64_t count);
/* Snapshot serialized in the profile file format, ordered by name. */
CNS_API cns_status cns_store_save(const cns_store* store, cns_format format, char** out);

/* Returns CNS_OK for a valid document, CNS_E_VALIDATION otherwise; `report`
 * receives one violation per line (empty when valid). */
CNS_API cns_status cns_profiles_validate(const char* text, size_t len, cns_format format,
                                         char** report);
CNS_API cns_status cns_profiles_convert(const char* text, size_t len, cns_format from,
                                        cns_format to, char** out);
/* Aligned human-readable table of a profile document. */
CNS_API cns_status cns_profiles_show(const char* text, size_t len, cns_format format,
                                     char** out);

/* ---- budget ----------------------------------------------------------- */

typedef struct cns_request_context {
  double sla_ms;
  double arrival_ms;
  double input_transfer_ms;
  double device_time_ms;
  double threshold_ms;
} cns_request_context;

typedef struct cns_budget_range {
  double budget_ms;
  double upper_ms;
  double lower_ms;
} cns_budget_range;

/* Validates the context (CNS_E_DOMAIN) and derives [T_L, T_U]. */
CNS_API cns_status cns_compute_budget(const cns_request_context* ctx, cns_budget_range* out);
CNS_API int cns_should_downscale(double t_downscale_ms, double t_upload_small_ms,
                                 double t_upload_orig_ms);

/* ---- selector --------------------------------------------------------- */

typedef struct cns_selector_config {
  cns_accuracy_metric accuracy_metric;
  int include_base_in_exploration;
  double denominator_epsilon_ms;
  uint64_t rng_seed;
} cns_selector_config;

CNS_API void cns_selector_config_init(cns_selector_config* cfg);
CNS_API cns_status cns_rng_new(uint64_t seed, cns_rng** out);
CNS_API void cns_rng_free(cns_rng* rng);
/* Runs the three-stage selection on a snapshot of `store`. The decision is
 * written as a JSON object. `rng` may be null, in which case a generator
 * seeded from cfg->rng_seed is used for this call only. */
CNS_API cns_status cns_select(const cns_store* store, const cns_budget_range* range,
                              const cns_selector_config* cfg, cns_rng* rng, char** decision_json);

/* ---- simulator -------------------------------------------------------- */

/* Fills up to `capacity` values; `count` always receives the full length. */
CNS_API cns_status cns_sla_sweep(double min_ms, double max_ms, double step_ms, double* out,
                                 size_t capacity, size_t* count);
/* `config_json` is a simulation config object; with `device_fallback` set
 * the cnnselect_device column is added. */
CNS_API cns_status cns_simulate(const char* config_json, int device_fallback, cns_report** out);
CNS_API cns_status cns_report_load(const char* json_text, size_t len, cns_report** out);
CNS_API void cns_report_free(cns_report* report);
CNS_API cns_status cns_report_csv(const cns_report* report, char** out);
CNS_API cns_status cns_report_usage_csv(const cns_report* report, char** out);
CNS_API cns_status cns_report_json(const cns_report* report, char** out);
CNS_API cns_status cns_report_summary(const cns_report* report, char** out);
CNS_API cns_status cns_compare(const cns_report* report, const char* baseline,
                               const char* candidate, char** csv_out);

/* ---- gateway ---------------------------------------------------------- */

/* `config_json` keys (all optional): profiles_path, seed, test_mode,
 * freeze_profiles, allow_create, device_time_ms, threshold_ms,
 * accuracy_metric, include_base_in_exploration, denominator_epsilon_ms,
 * network_profile_path, http_threads, time_scale. */
CNS_API cns_status cns_gateway_new(const char* config_json, cns_gateway** out);
CNS_API void cns_gateway_free(cns_gateway* gateway);
/* Serves in a background thread; port 0 binds an ephemeral port. */
CNS_API cns_status cns_gateway_start(cns_gateway* gateway, const char* host, int port,
                                     int* bound_port);
/* Serves on the calling thread until cns_gateway_stop(). */
CNS_API cns_status cns_gateway_listen(cns_gateway* gateway, const char* host, int port);
CNS_API void cns_gateway_stop(cns_gateway* gateway);
/* In-process equivalent of POST /v1/infer. */
CNS_API cns_status cns_gateway_infer(cns_gateway* gateway, const char* request_json,
                                     char** response_json);

#ifdef __cplusplus
}
#endif

#endif /* CNNSELECT_CNNSELECT_H */
