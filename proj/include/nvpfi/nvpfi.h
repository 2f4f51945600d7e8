/* Copyright 2026 The nvpfi Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface to the nvpfi fault-injection lab.
 *
 * Every function returns an nvpfi_status. On failure the message is available
 * from nvpfi_last_error() on the calling thread until the next failing call.
 * Handles are opaque and owned by the caller; release them with the matching
 * *_free function. Strings returned through char** are released with
 * nvpfi_free_string().
 */

#ifndef NVPFI_NVPFI_H_
#define NVPFI_NVPFI_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define NVPFI_API __declspec(dllexport)
#else
#define NVPFI_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nvpfi_status {
  NVPFI_OK = 0,
  NVPFI_ERR_CONFIG = 1,   /* invalid configuration, plan or arguments */
  NVPFI_ERR_IO = 2,       /* unreadable or malformed file */
  NVPFI_ERR_METRIC = 3,   /* metric undefined (empty evaluation set) */
  NVPFI_ERR_RUNTIME = 4,  /* any other failure */
  NVPFI_ERR_ARGUMENT = 5  /* null handle or pointer */
} nvpfi_status;

typedef enum nvpfi_prediction {
  NVPFI_NOMINAL = 0,
  NVPFI_ANOMALOUS = 1,
  NVPFI_DUE = 2
} nvpfi_prediction;

typedef struct nvpfi_model nvpfi_model;
typedef struct nvpfi_dataset nvpfi_dataset;

typedef struct nvpfi_model_info {
  uint32_t input_dim;
  uint32_t n_coupling;
  uint32_t fc_depth;
  uint32_t units;
  int32_t has_threshold;
  float threshold;
  uint64_t n_parameters;
} nvpfi_model_info;

typedef struct nvpfi_synthetic_spec {
  uint32_t n_channels;
  uint32_t window_len;
  uint32_t n_nominal;
  uint32_t n_anomalous;
  const char* anomaly_kind; /* "bias-shift" | "stuck-at" | "noise-burst" */
  double magnitude;
  uint64_t seed;
} nvpfi_synthetic_spec;

NVPFI_API const char* nvpfi_version(void);
NVPFI_API const char* nvpfi_last_error(void);
NVPFI_API void nvpfi_free_string(char* s);

/* Models */
NVPFI_API nvpfi_status nvpfi_model_load(const char* path, nvpfi_model** out);
NVPFI_API nvpfi_status nvpfi_model_save(const nvpfi_model* model, const char* path);
NVPFI_API nvpfi_status nvpfi_model_create_random(uint32_t input_dim, uint32_t n_coupling,
                                                 uint32_t fc_depth, uint32_t units,
                                                 uint64_t seed, float scale, nvpfi_model** out);
NVPFI_API nvpfi_status nvpfi_model_clone(const nvpfi_model* model, nvpfi_model** out);
NVPFI_API void nvpfi_model_free(nvpfi_model* model);
NVPFI_API nvpfi_status nvpfi_model_info_get(const nvpfi_model* model, nvpfi_model_info* out);
NVPFI_API nvpfi_status nvpfi_model_log_prob(const nvpfi_model* model, const float* x, size_t n,
                                            float* out);
NVPFI_API nvpfi_status nvpfi_model_classify(const nvpfi_model* model, const float* x, size_t n,
                                            nvpfi_prediction* out);
NVPFI_API nvpfi_status nvpfi_model_set_threshold(nvpfi_model* model, float threshold);
/* Sets the threshold to the given percentile of log_prob over the nominal samples. */
NVPFI_API nvpfi_status nvpfi_model_calibrate(nvpfi_model* model, const nvpfi_dataset* data,
                                             double percentile, float* out_threshold);
/* Lowercase hex SHA-256 of the serialized model; `out` holds 65 bytes. */
NVPFI_API nvpfi_status nvpfi_model_sha256(const nvpfi_model* model, char* out);
NVPFI_API nvpfi_status nvpfi_model_census_csv(const nvpfi_model* model, char** out_csv);
/* Corrupts `model` in place with a state plan (JSON, domain "state").
 * `out_audit` may be null; otherwise receives one JSON record per line. */
NVPFI_API nvpfi_status nvpfi_model_inject_states(nvpfi_model* model, const char* plan_json,
                                                 uint64_t seed, char** out_audit);
NVPFI_API nvpfi_status nvpfi_model_grid_write(const char* out_dir, uint32_t input_dim,
                                              uint64_t seed, float scale,
                                              const nvpfi_dataset* calibration,
                                              double percentile);

/* Datasets */
NVPFI_API nvpfi_status nvpfi_dataset_load(const char* path, nvpfi_dataset** out);
NVPFI_API void nvpfi_dataset_free(nvpfi_dataset* data);
NVPFI_API size_t nvpfi_dataset_size(const nvpfi_dataset* data);
NVPFI_API size_t nvpfi_dataset_dim(const nvpfi_dataset* data);
NVPFI_API nvpfi_status nvpfi_dataset_generate(const nvpfi_synthetic_spec* spec,
                                              const char* out_prefix);

/* Campaigns and analysis */
NVPFI_API nvpfi_status nvpfi_campaign_run(const char* config_path, const char* out_dir,
                                          size_t workers, int audit);
NVPFI_API nvpfi_status nvpfi_histogram_csv(const nvpfi_model* model, const char* plan_json,
                                           const nvpfi_dataset* data, size_t bins,
                                           uint64_t seed, char** out_csv);
NVPFI_API nvpfi_status nvpfi_plotdata_csv(const char* results_csv_path, const char* kind,
                                          char** out_csv);

/* Bit utilities */
NVPFI_API nvpfi_status nvpfi_flip_bit(float value, int bit, const char* direction, float* out,
                                      int* masked);

#ifdef __cplusplus
}
#endif

#endif /* NVPFI_NVPFI_H_ */
