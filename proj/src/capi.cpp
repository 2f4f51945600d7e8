// Copyright 2026 The nvpfi Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nvpfi/nvpfi.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <string>

#include "nvpfi/campaign.hpp"
#include "nvpfi/errors.hpp"

struct nvpfi_model {
  nvpfi::ModelState state;
};

struct nvpfi_dataset {
  nvpfi::Dataset data;
};

namespace {

thread_local std::string g_last_error;

nvpfi_status fail(nvpfi_status code, const char* what) {
  g_last_error = what;
  return code;
}

// Runs `body`, translating exceptions into status codes.
template <typename F>
nvpfi_status guarded(F&& body) {
  try {
    body();
    return NVPFI_OK;
  } catch (const nvpfi::ConfigError& e) {
    return fail(NVPFI_ERR_CONFIG, e.what());
  } catch (const nvpfi::LoadError& e) {
    return fail(NVPFI_ERR_IO, e.what());
  } catch (const nvpfi::MetricUndefined& e) {
    return fail(NVPFI_ERR_METRIC, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(NVPFI_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(NVPFI_ERR_RUNTIME, e.what());
  } catch (...) {
    return fail(NVPFI_ERR_RUNTIME, "unknown error");
  }
}

#define NVPFI_REQUIRE(ptr)                                          \
  do {                                                              \
    if ((ptr) == nullptr) return fail(NVPFI_ERR_ARGUMENT, #ptr " is null"); \
  } while (0)

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

float calibrate(nvpfi::ModelState& model, const nvpfi::Dataset& data, double percentile) {
  if (data.dim() != model.definition.input_dim) {
    throw nvpfi::ConfigError("calibration data has " + std::to_string(data.dim()) +
                             " features, model expects " +
                             std::to_string(model.definition.input_dim));
  }
  std::vector<float> scores;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] == nvpfi::Label::Nominal) {
      scores.push_back(nvpfi::log_prob(model, data.sample(i)));
    }
  }
  if (scores.empty()) throw nvpfi::ConfigError("calibration data has no nominal samples");
  const float tau = nvpfi::percentile_threshold(std::move(scores), percentile);
  model.threshold = tau;
  return tau;
}

}  // namespace

extern "C" {

const char* nvpfi_version(void) { return "1.0.0"; }

const char* nvpfi_last_error(void) { return g_last_error.c_str(); }

void nvpfi_free_string(char* s) { std::free(s); }

nvpfi_status nvpfi_model_load(const char* path, nvpfi_model** out) {
  NVPFI_REQUIRE(path);
  NVPFI_REQUIRE(out);
  *out = nullptr;
  return guarded([&] { *out = new nvpfi_model{nvpfi::load_model(path)}; });
}

nvpfi_status nvpfi_model_save(const nvpfi_model* model, const char* path) {
  NVPFI_REQUIRE(model);
  NVPFI_REQUIRE(path);
  return guarded([&] { nvpfi::save_model(model->state, path); });
}

nvpfi_status nvpfi_model_create_random(uint32_t input_dim, uint32_t n_coupling, uint32_t fc_depth,
                                       uint32_t units, uint64_t seed, float scale,
                                       nvpfi_model** out) {
  NVPFI_REQUIRE(out);
  *out = nullptr;
  return guarded([&] {
    nvpfi::ModelDefinition def;
    def.input_dim = input_dim;
    def.n_coupling = n_coupling;
    def.fc_depth = fc_depth;
    def.units = units;
    def.validate();
    nvpfi::RandomStream stream(seed);
    *out = new nvpfi_model{nvpfi::make_random_model(def, stream, scale)};
  });
}

nvpfi_status nvpfi_model_clone(const nvpfi_model* model, nvpfi_model** out) {
  NVPFI_REQUIRE(model);
  NVPFI_REQUIRE(out);
  *out = nullptr;
  return guarded([&] { *out = new nvpfi_model{model->state}; });
}

void nvpfi_model_free(nvpfi_model* model) { delete model; }

nvpfi_status nvpfi_model_info_get(const nvpfi_model* model, nvpfi_model_info* out) {
  NVPFI_REQUIRE(model);
  NVPFI_REQUIRE(out);
  return guarded([&] {
    const auto& d = model->state.definition;
    out->input_dim = static_cast<uint32_t>(d.input_dim);
    out->n_coupling = static_cast<uint32_t>(d.n_coupling);
    out->fc_depth = static_cast<uint32_t>(d.fc_depth);
    out->units = static_cast<uint32_t>(d.units);
    out->has_threshold = model->state.threshold.has_value() ? 1 : 0;
    out->threshold = model->state.threshold.value_or(0.0f);
    out->n_parameters = nvpfi::parameter_count(d);
  });
}

nvpfi_status nvpfi_model_log_prob(const nvpfi_model* model, const float* x, size_t n, float* out) {
  NVPFI_REQUIRE(model);
  NVPFI_REQUIRE(x);
  NVPFI_REQUIRE(out);
  return guarded([&] {
    if (n != model->state.definition.input_dim) {
      throw nvpfi::ConfigError("input has " + std::to_string(n) + " values, model expects " +
                               std::to_string(model->state.definition.input_dim));
    }
    *out = nvpfi::log_prob(model->state, std::span<const float>(x, n));
  });
}

nvpfi_status nvpfi_model_classify(const nvpfi_model* model, const float* x, size_t n,
                                  nvpfi_prediction* out) {
  NVPFI_REQUIRE(model);
  NVPFI_REQUIRE(x);
  NVPFI_REQUIRE(out);
  return guarded([&] {
    if (n != model->state.definition.input_dim) {
      throw nvpfi::ConfigError("input has " + std::to_string(n) + " values, model expects " +
                               std::to_string(model->state.definition.input_dim));
    }
    *out = static_cast<nvpfi_prediction>(
        nvpfi::classify(model->state, std::span<const float>(x, n)));
  });
}

nvpfi_status nvpfi_model_set_threshold(nvpfi_model* model, float threshold) {
  NVPFI_REQUIRE(model);
  return guarded([&] {
    if (!std::isfinite(threshold)) throw nvpfi::ConfigError("threshold must be finite");
    model->state.threshold = threshold;
  });
}

nvpfi_status nvpfi_model_calibrate(nvpfi_model* model, const nvpfi_dataset* data,
                                   double percentile, float* out_threshold) {
  NVPFI_REQUIRE(model);
  NVPFI_REQUIRE(data);
  return guarded([&] {
    const float tau = calibrate(model->state, data->data, percentile);
    if (out_threshold) *out_threshold = tau;
  });
}

nvpfi_status nvpfi_model_sha256(const nvpfi_model* model, char* out) {
  NVPFI_REQUIRE(model);
  NVPFI_REQUIRE(out);
  return guarded([&] {
    const auto hex = nvpfi::model_digest(model->state);
    std::memcpy(out, hex.c_str(), hex.size() + 1);
  });
}

nvpfi_status nvpfi_model_census_csv(const nvpfi_model* model, char** out_csv) {
  NVPFI_REQUIRE(model);
  NVPFI_REQUIRE(out_csv);
  *out_csv = nullptr;
  return guarded([&] {
    *out_csv = dup_string(nvpfi::format_census_csv(nvpfi::bit_census(model->state)));
  });
}

nvpfi_status nvpfi_model_inject_states(nvpfi_model* model, const char* plan_json, uint64_t seed,
                                       char** out_audit) {
  NVPFI_REQUIRE(model);
  NVPFI_REQUIRE(plan_json);
  if (out_audit) *out_audit = nullptr;
  return guarded([&] {
    const auto plan = nvpfi::parse_plan_json(plan_json);
    const auto* sp = std::get_if<nvpfi::StateInjectionPlan>(&plan);
    if (!sp) throw nvpfi::ConfigError("inject_states needs a plan with domain \"state\"");
    nvpfi::RandomStream stream = nvpfi::derive_stream(seed, {});
    nvpfi::InjectionReport report;
    nvpfi::inject_states_inplace(model->state, *sp, stream, &report);
    if (out_audit) {
      std::string text;
      for (const auto& rec : report.records) text += nvpfi::to_json_line(rec) + "\n";
      *out_audit = dup_string(text);
    }
  });
}

nvpfi_status nvpfi_model_grid_write(const char* out_dir, uint32_t input_dim, uint64_t seed,
                                    float scale, const nvpfi_dataset* calibration,
                                    double percentile) {
  NVPFI_REQUIRE(out_dir);
  return guarded([&] {
    nvpfi::ModelDefinition base;
    base.input_dim = input_dim;
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    for (const auto& e : nvpfi::build_model_grid(base, seed)) {
      nvpfi::RandomStream stream(e.init_seed);
      auto model = nvpfi::make_random_model(e.definition, stream, scale);
      if (calibration) calibrate(model, calibration->data, percentile);
      nvpfi::save_model(model, dir / (e.id + ".rnvp"));
    }
  });
}

nvpfi_status nvpfi_dataset_load(const char* path, nvpfi_dataset** out) {
  NVPFI_REQUIRE(path);
  NVPFI_REQUIRE(out);
  *out = nullptr;
  return guarded([&] { *out = new nvpfi_dataset{nvpfi::load_dataset(path)}; });
}

void nvpfi_dataset_free(nvpfi_dataset* data) { delete data; }

size_t nvpfi_dataset_size(const nvpfi_dataset* data) { return data ? data->data.size() : 0; }

size_t nvpfi_dataset_dim(const nvpfi_dataset* data) { return data ? data->data.dim() : 0; }

nvpfi_status nvpfi_dataset_generate(const nvpfi_synthetic_spec* spec, const char* out_prefix) {
  NVPFI_REQUIRE(spec);
  NVPFI_REQUIRE(out_prefix);
  return guarded([&] {
    nvpfi::SyntheticSpec s;
    s.n_channels = spec->n_channels;
    s.window_len = spec->window_len;
    s.n_nominal = spec->n_nominal;
    s.n_anomalous = spec->n_anomalous;
    if (spec->anomaly_kind) s.anomaly_kind = nvpfi::parse_anomaly_kind(spec->anomaly_kind);
    s.magnitude = spec->magnitude;
    s.seed = spec->seed;
    s.validate();
    const std::filesystem::path prefix(out_prefix);
    if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
    nvpfi::save_splits(nvpfi::generate_synthetic(s), out_prefix);
  });
}

nvpfi_status nvpfi_campaign_run(const char* config_path, const char* out_dir, size_t workers,
                                int audit) {
  NVPFI_REQUIRE(config_path);
  NVPFI_REQUIRE(out_dir);
  return guarded([&] {
    if (workers == 0) throw nvpfi::ConfigError("workers must be >= 1");
    const auto config = nvpfi::load_campaign_config(config_path);
    nvpfi::RunOptions opts;
    opts.workers = workers;
    opts.audit = audit != 0;
    nvpfi::run_campaign_to_dir(config, out_dir, opts);
  });
}

nvpfi_status nvpfi_histogram_csv(const nvpfi_model* model, const char* plan_json,
                                 const nvpfi_dataset* data, size_t bins, uint64_t seed,
                                 char** out_csv) {
  NVPFI_REQUIRE(model);
  NVPFI_REQUIRE(plan_json);
  NVPFI_REQUIRE(data);
  NVPFI_REQUIRE(out_csv);
  *out_csv = nullptr;
  return guarded([&] {
    const auto plan = nvpfi::parse_plan_json(plan_json);
    const auto h = nvpfi::masked_output_histogram(model->state, plan, data->data, bins, seed);
    *out_csv = dup_string(nvpfi::format_histogram_csv(h));
  });
}

nvpfi_status nvpfi_plotdata_csv(const char* results_csv_path, const char* kind, char** out_csv) {
  NVPFI_REQUIRE(results_csv_path);
  NVPFI_REQUIRE(kind);
  NVPFI_REQUIRE(out_csv);
  *out_csv = nullptr;
  return guarded([&] {
    const auto bytes = nvpfi::read_file_bytes(results_csv_path);
    const auto rows = nvpfi::parse_results_csv(std::string(bytes.begin(), bytes.end()));
    *out_csv = dup_string(nvpfi::format_csv(nvpfi::emit_plot_data(rows, nvpfi::parse_plot_kind(kind))));
  });
}

nvpfi_status nvpfi_flip_bit(float value, int bit, const char* direction, float* out, int* masked) {
  NVPFI_REQUIRE(direction);
  NVPFI_REQUIRE(out);
  return guarded([&] {
    if (bit < 0 || bit > 31) throw nvpfi::ConfigError("bit must be in [0, 31]");
    const auto r = nvpfi::flip_bit(value, bit, nvpfi::parse_direction(direction));
    *out = r.value;
    if (masked) *masked = r.masked ? 1 : 0;
  });
}

}  // extern "C"
