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

// nvpfi command-line front end. Links only the C API.
//
// Exit codes: 0 success, 2 configuration error, 1 runtime failure.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "nvpfi/nvpfi.h"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

int report(nvpfi_status status) {
  if (status == NVPFI_OK) return 0;
  std::cerr << "nvpfi: " << nvpfi_last_error() << "\n";
  return (status == NVPFI_ERR_CONFIG || status == NVPFI_ERR_ARGUMENT) ? kExitConfig
                                                                      : kExitRuntime;
}

struct ModelDeleter {
  void operator()(nvpfi_model* m) const { nvpfi_model_free(m); }
};
struct DatasetDeleter {
  void operator()(nvpfi_dataset* d) const { nvpfi_dataset_free(d); }
};
struct StringDeleter {
  void operator()(char* s) const { nvpfi_free_string(s); }
};
using ModelPtr = std::unique_ptr<nvpfi_model, ModelDeleter>;
using DatasetPtr = std::unique_ptr<nvpfi_dataset, DatasetDeleter>;
using StringPtr = std::unique_ptr<char, StringDeleter>;

// Writes `text` to `path`, or to stdout when the path is empty or "-".
int emit(const char* text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::fputs(text, stdout);
    return 0;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    std::cerr << "nvpfi: cannot write " << path << "\n";
    return kExitRuntime;
  }
  out << text;
  return out ? 0 : kExitRuntime;
}

// A plan argument is either a JSON file path or inline JSON text.
std::string read_plan(const std::string& arg) {
  std::error_code ec;
  if (std::filesystem::is_regular_file(arg, ec)) {
    std::ifstream in(arg, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
  }
  return arg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic fault-injection lab for Real NVP anomaly detectors", "nvpfi"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(nvpfi_version()));

  // run
  auto* run = app.add_subcommand("run", "Execute a campaign and write results.csv");
  std::string run_config, run_out;
  std::size_t run_workers = 1;
  bool run_audit = false;
  run->add_option("--config", run_config, "Campaign config (JSON)")->required();
  run->add_option("--out", run_out, "Output directory")->required();
  run->add_option("--workers", run_workers, "Worker threads")->check(CLI::PositiveNumber);
  run->add_flag("--audit", run_audit, "Also write audit.jsonl");

  // census
  auto* census = app.add_subcommand("census", "Per-bit count of set bits in weights and biases");
  std::string census_model, census_out;
  census->add_option("--model", census_model, "Weights file")->required();
  census->add_option("--out", census_out, "Output CSV (default stdout)");

  // histogram
  auto* hist = app.add_subcommand("histogram", "Final-layer scale/translation output histograms");
  std::string hist_model, hist_plan, hist_data, hist_out;
  std::size_t hist_bins = 50;
  std::uint64_t hist_seed = 0;
  hist->add_option("--model", hist_model, "Weights file")->required();
  hist->add_option("--plan", hist_plan, "Plan JSON text or file")->required();
  hist->add_option("--data", hist_data, "Dataset CSV")->required();
  hist->add_option("--bins", hist_bins, "Bin count (>= 2)")->required();
  hist->add_option("--seed", hist_seed, "Fault stream seed");
  hist->add_option("--out", hist_out, "Output CSV (default stdout)");

  // plotdata
  auto* plot = app.add_subcommand("plotdata", "Radial or parallel-coordinates tables");
  std::string plot_rows, plot_kind, plot_out;
  plot->add_option("--rows", plot_rows, "results.csv")->required();
  plot->add_option("--kind", plot_kind, "radial|parallel")
      ->required()
      ->check(CLI::IsMember({"radial", "parallel"}));
  plot->add_option("--out", plot_out, "Output CSV (default stdout)");

  // gen-data
  auto* gendata = app.add_subcommand("gen-data", "Synthetic surrogate dataset (three splits)");
  std::string gd_prefix, gd_kind = "bias-shift";
  std::uint32_t gd_channels = 4, gd_window = 4, gd_nominal = 1500, gd_anomalous = 300;
  double gd_magnitude = 10.0;
  std::uint64_t gd_seed = 1;
  gendata->add_option("--out", gd_prefix, "Output prefix; writes <prefix>_{train,val,test}.csv")
      ->required();
  gendata->add_option("--channels", gd_channels, "Channel count");
  gendata->add_option("--window", gd_window, "Window length");
  gendata->add_option("--nominal", gd_nominal, "Nominal window count");
  gendata->add_option("--anomalous", gd_anomalous, "Anomalous window count");
  gendata->add_option("--kind", gd_kind, "bias-shift|stuck-at|noise-burst");
  gendata->add_option("--magnitude", gd_magnitude, "Anomaly magnitude in channel std units");
  gendata->add_option("--seed", gd_seed, "Generator seed");

  // gen-model
  auto* genmodel = app.add_subcommand("gen-model", "Random-initialized model(s)");
  std::string gm_out, gm_calibrate;
  bool gm_grid = false;
  std::uint32_t gm_dim = 16, gm_coupling = 4, gm_depth = 3, gm_units = 32;
  std::uint64_t gm_seed = 0;
  float gm_scale = 0.1f;
  double gm_percentile = 5.0;
  genmodel->add_option("--out", gm_out, "Weights file, or directory with --grid")->required();
  genmodel->add_flag("--grid", gm_grid, "Write the 18-model reference grid");
  genmodel->add_option("--dim", gm_dim, "Input dimension");
  genmodel->add_option("--coupling", gm_coupling, "Coupling layers");
  genmodel->add_option("--depth", gm_depth, "FC layers per net");
  genmodel->add_option("--units", gm_units, "Units per FC layer");
  genmodel->add_option("--seed", gm_seed, "Initialization seed");
  genmodel->add_option("--scale", gm_scale, "Uniform init half-width");
  genmodel->add_option("--calibrate", gm_calibrate, "Set the threshold from this dataset");
  genmodel->add_option("--percentile", gm_percentile, "Threshold percentile of nominal scores");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (run->parsed()) {
    return report(nvpfi_campaign_run(run_config.c_str(), run_out.c_str(), run_workers,
                                     run_audit ? 1 : 0));
  }

  if (census->parsed()) {
    nvpfi_model* raw = nullptr;
    if (auto s = nvpfi_model_load(census_model.c_str(), &raw); s != NVPFI_OK) return report(s);
    ModelPtr model(raw);
    char* csv = nullptr;
    if (auto s = nvpfi_model_census_csv(model.get(), &csv); s != NVPFI_OK) return report(s);
    return emit(StringPtr(csv).get(), census_out);
  }

  if (hist->parsed()) {
    nvpfi_model* raw_model = nullptr;
    if (auto s = nvpfi_model_load(hist_model.c_str(), &raw_model); s != NVPFI_OK) return report(s);
    ModelPtr model(raw_model);
    nvpfi_dataset* raw_data = nullptr;
    if (auto s = nvpfi_dataset_load(hist_data.c_str(), &raw_data); s != NVPFI_OK) return report(s);
    DatasetPtr data(raw_data);
    char* csv = nullptr;
    const std::string plan = read_plan(hist_plan);
    if (auto s = nvpfi_histogram_csv(model.get(), plan.c_str(), data.get(), hist_bins, hist_seed,
                                     &csv);
        s != NVPFI_OK) {
      return report(s);
    }
    return emit(StringPtr(csv).get(), hist_out);
  }

  if (plot->parsed()) {
    char* csv = nullptr;
    if (auto s = nvpfi_plotdata_csv(plot_rows.c_str(), plot_kind.c_str(), &csv); s != NVPFI_OK) {
      return report(s);
    }
    return emit(StringPtr(csv).get(), plot_out);
  }

  if (gendata->parsed()) {
    nvpfi_synthetic_spec spec{gd_channels, gd_window,         gd_nominal, gd_anomalous,
                              gd_kind.c_str(), gd_magnitude, gd_seed};
    return report(nvpfi_dataset_generate(&spec, gd_prefix.c_str()));
  }

  if (genmodel->parsed()) {
    DatasetPtr calib;
    if (!gm_calibrate.empty()) {
      nvpfi_dataset* raw = nullptr;
      if (auto s = nvpfi_dataset_load(gm_calibrate.c_str(), &raw); s != NVPFI_OK) return report(s);
      calib.reset(raw);
    }
    if (gm_grid) {
      return report(nvpfi_model_grid_write(gm_out.c_str(), gm_dim, gm_seed, gm_scale, calib.get(),
                                           gm_percentile));
    }
    nvpfi_model* raw = nullptr;
    if (auto s = nvpfi_model_create_random(gm_dim, gm_coupling, gm_depth, gm_units, gm_seed,
                                           gm_scale, &raw);
        s != NVPFI_OK) {
      return report(s);
    }
    ModelPtr model(raw);
    if (calib) {
      if (auto s = nvpfi_model_calibrate(model.get(), calib.get(), gm_percentile, nullptr);
          s != NVPFI_OK) {
        return report(s);
      }
    }
    return report(nvpfi_model_save(model.get(), gm_out.c_str()));
  }
  return kExitConfig;
}
