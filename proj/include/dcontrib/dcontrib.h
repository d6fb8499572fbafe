// Copyright 2026 The dcontrib Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DCONTRIB_DCONTRIB_H_
#define DCONTRIB_DCONTRIB_H_

/* C interface of the dcontrib library. Every call returns a dc_status; on
 * failure dc_last_error_message() holds a description for the calling thread. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DC_API __declspec(dllexport)
#else
#define DC_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dc_status {
  DC_OK = 0,
  DC_ERR_INVALID_ARGUMENT = 1,
  DC_ERR_PARSE = 2,
  DC_ERR_DOMAIN = 3,
  DC_ERR_IO = 4,
  DC_ERR_PROTOCOL = 5,
  DC_ERR_TRAINING = 6,
  DC_ERR_CAMPAIGN = 7,
  DC_ERR_INTERNAL = 8
} dc_status;

typedef struct dc_config dc_config;
typedef struct dc_ensemble dc_ensemble;

/* Receives one log line; `user` is passed through untouched. May be NULL. */
typedef void (*dc_log_fn)(const char* line, void* user);
typedef void (*dc_listening_fn)(uint16_t port, void* user);

DC_API const char* dc_version(void);
DC_API const char* dc_last_error_message(void);
DC_API const char* dc_status_name(dc_status status);
/* Process exit code for a status: 0 ok, 2 bad input, 3 campaign or training failure, 1 otherwise. */
DC_API int dc_status_exit_code(dc_status status);

DC_API dc_status dc_config_load(const char* path, dc_config** out);
DC_API dc_status dc_config_parse(const char* json_text, dc_config** out);
DC_API dc_status dc_config_set_seed(dc_config* config, uint64_t seed);
/* "in-process" or "sockets". */
DC_API dc_status dc_config_set_transport(dc_config* config, const char* transport);
DC_API dc_status dc_config_set_output_dir(dc_config* config, const char* dir);
DC_API dc_status dc_config_set_manifest(dc_config* config, const char* manifest_path);
DC_API void dc_config_free(dc_config* config);

DC_API dc_status dc_run_ingest(const dc_config* config, dc_log_fn log, void* user);
DC_API dc_status dc_run_synth(const dc_config* config, dc_log_fn log, void* user);
/* `actor_executable` is started in actor mode for the socket transport; may be NULL otherwise. */
DC_API dc_status dc_run_decentralised(const dc_config* config, const char* actor_executable, dc_log_fn log,
                                      void* user);
DC_API dc_status dc_run_central(const dc_config* config, dc_log_fn log, void* user);
DC_API dc_status dc_run_compare(const dc_config* config, dc_log_fn log, void* user);

typedef struct dc_actor_options {
  const char* dataset;   /* actor CSV */
  const char* actor_id;
  const char* listen;    /* host:port, port 0 picks a free one */
  uint64_t seed;
  size_t min_overlap;
  int decline;
  int max_calls;
} dc_actor_options;

DC_API dc_status dc_actor_serve(const dc_actor_options* options, dc_listening_fn on_listening, dc_log_fn log,
                                void* user);

/* Mean absolute relative deviation of `count` values, divided by `types`. */
DC_API dc_status dc_quality_kpi(const double* actuals, const double* setpoints, size_t parts, size_t types,
                                double* out);
DC_API dc_status dc_kendall_tau(const double* a, const double* b, size_t n, double* out);
DC_API dc_status dc_spearman_rho(const double* a, const double* b, size_t n, double* out);

/* Trains on row-major `features` (rows x cols) against `targets`. `hyper_json`
 * overrides defaults and may be NULL. */
DC_API dc_status dc_ensemble_train(const double* features, size_t rows, size_t cols, const double* targets,
                                   const char* hyper_json, uint64_t seed, dc_ensemble** out);
DC_API dc_status dc_ensemble_predict(const dc_ensemble* ensemble, const double* x, size_t cols, double* mean,
                                     double* knowledge_variance, double* data_variance, double* total_variance);
/* Mean total variance over the validation rows of the training data. */
DC_API dc_status dc_ensemble_validation_uncertainty(const dc_ensemble* ensemble, double* out);
DC_API dc_status dc_ensemble_save(const dc_ensemble* ensemble, const char* path);
DC_API dc_status dc_ensemble_load(const char* path, dc_ensemble** out);
DC_API void dc_ensemble_free(dc_ensemble* ensemble);

#ifdef __cplusplus
}
#endif

#endif  /* DCONTRIB_DCONTRIB_H_ */
