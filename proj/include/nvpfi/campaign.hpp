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

#pragma once

// Fault-injection campaigns.
//
// A campaign expands its sweep axes into plan points, crosses them with the
// models, seeds and experiments, and runs every experiment on a private copy
// of the pristine model restored from a snapshot. Each experiment draws from
// a stream derived from (config id, model id, seed index, experiment index),
// so results do not depend on scheduling or on which other points exist.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "nvpfi/fault.hpp"
#include "nvpfi/metrics.hpp"
#include "nvpfi/model_io.hpp"
#include "nvpfi/realnvp.hpp"

namespace nvpfi {

struct ModelRef {
  std::string id;
  std::filesystem::path path;
};

// Axis values; each list must be non-empty. Bit-flip axes only expand for
// type "bitflip".
struct StateSweep {
  std::vector<std::string> type;  // zeros|random|bitflip
  std::vector<int> mode{100};
  std::vector<StateVariable> variable{StateVariable::All};
  std::vector<double> amount;
  std::vector<BitSelector> bit{BitSelector::random()};
  std::vector<Direction> direction{Direction::Both};
  std::vector<SignFilter> sign{SignFilter::Both};
};

struct OutputModeSpec {
  OutputMode mode = OutputMode::AllLayers;
  std::size_t layer_index = 0;
};

struct OutputSweep {
  std::vector<std::string> type;
  std::vector<OutputModeSpec> mode{OutputModeSpec{}};
  std::vector<OutputVariable> variable{OutputVariable::All};
  std::vector<ActivationFilter> activation{ActivationFilter::All};
  std::vector<OutputMethod> method{OutputMethod::Partial};
  std::vector<double> amount;
  std::vector<BitSelector> bit{BitSelector::random()};
  std::vector<Direction> direction{Direction::Both};
  std::vector<SignFilter> sign{SignFilter::Both};
};

struct CampaignConfig {
  std::uint64_t base_seed = 0;
  std::size_t n_exps = 10;
  std::size_t n_seeds = 3;
  std::vector<ModelRef> models;
  std::filesystem::path dataset;
  SdcVariant metric = SdcVariant::Relative;
  DuePolicy due_policy = DuePolicy::SeparateDue;
  RandomFault random;  // parameters used by every "random" plan point
  std::optional<StateSweep> state_sweep;
  std::optional<OutputSweep> output_sweep;
};

// Parses the JSON config; relative paths resolve against `base_dir`.
CampaignConfig parse_campaign_config(const std::string& json_text,
                                     const std::filesystem::path& base_dir = {});
CampaignConfig load_campaign_config(const std::filesystem::path& path);

using PlanVariant = std::variant<StateInjectionPlan, OutputInjectionPlan>;

struct PlanPoint {
  std::string config_id;  // canonical, stable text form of the plan
  PlanVariant plan;
};

// Cross product of the sweep axes, state sweep first. Invalid points are
// collected and reported together in one ConfigError.
std::vector<PlanPoint> expand_plans(const CampaignConfig& config);

// Plan JSON used by the histogram verb: {"domain": "state"|"output", ...}.
PlanVariant parse_plan_json(const std::string& json_text, const RandomFault& random = {});
std::string canonical_plan_id(const PlanVariant& plan);

struct ExperimentDescriptor {
  std::size_t plan_index = 0;
  std::size_t model_index = 0;
  std::size_t seed_index = 0;
  std::size_t exp_index = 0;
  std::array<std::uint64_t, 4> stream_labels{};
};

// |models| x |plans| x n_seeds x n_exps descriptors in (plan, model, seed, exp) order.
std::vector<ExperimentDescriptor> expand_grid(const CampaignConfig& config,
                                              const std::vector<PlanPoint>& plans);

// Model ids of the reference grid, or of the configured list.
std::vector<std::string> model_ids(const CampaignConfig& config);

struct ResultRow {
  std::string config_id;
  std::string model_id;
  long long seed_index = 0;  // -1 on aggregate rows
  long long exp_index = 0;   // -1 on aggregate rows
  std::string injection_domain;  // state|output
  std::string type, mode, variable, amount, bit, direction, sign, activation, method;
  double sdc_rate = 0.0;
  double due_rate = 0.0;
  double masked_rate = 0.0;
  std::size_t n_samples = 0;
  double baseline_accuracy = 0.0;

  bool is_aggregate() const noexcept { return exp_index < 0; }
};

const std::vector<std::string>& result_columns();
std::string format_results_csv(const std::vector<ResultRow>& rows);
std::vector<ResultRow> parse_results_csv(const std::string& text);

// Called on the worker thread. `working` is the worker's model right after the
// reset (before injection) and again after the experiment finished.
struct ExperimentObserver {
  std::function<void(const ExperimentDescriptor&, const ModelState& working)> on_reset;
  std::function<void(const ExperimentDescriptor&, const ModelState& working)> on_finish;
};

struct RunOptions {
  std::size_t workers = 1;
  bool audit = false;
  const ExperimentObserver* observer = nullptr;
};

struct CampaignResult {
  std::vector<ResultRow> rows;
  std::vector<std::string> audit_lines;
  std::size_t experiments = 0;
};

// Already-loaded inputs, for callers that keep models in memory.
struct CampaignInputs {
  std::vector<std::string> model_ids;
  std::vector<ModelState> models;
  Dataset dataset;
};

CampaignInputs load_campaign_inputs(const CampaignConfig& config);
CampaignResult run_campaign(const CampaignConfig& config, const CampaignInputs& inputs,
                            const RunOptions& options = {});
CampaignResult run_campaign(const CampaignConfig& config, const RunOptions& options = {});

// Writes results.csv (and audit.jsonl when auditing) into `out_dir`.
CampaignResult run_campaign_to_dir(const CampaignConfig& config,
                                   const std::filesystem::path& out_dir,
                                   const RunOptions& options = {});

struct BitCensus {
  std::array<std::uint64_t, 32> weights{};
  std::array<std::uint64_t, 32> biases{};
  std::uint64_t n_weights = 0;
  std::uint64_t n_biases = 0;
};

BitCensus bit_census(const ModelState& model);
std::string format_census_csv(const BitCensus& census);

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::uint64_t> counts;
  std::uint64_t nonfinite = 0;

  std::size_t bin_of(double v) const noexcept;
};

struct OutputHistograms {
  Histogram scale;        // fixed support [-1, 1]
  Histogram translation;  // support spans the observed finite values
};

// Final coupling layer's scale and translation outputs (post-activation,
// after any output faults) over every dataset sample.
OutputHistograms masked_output_histogram(const ModelState& model, const PlanVariant& plan,
                                         const Dataset& data, std::size_t bins,
                                         std::uint64_t seed);
std::string format_histogram_csv(const OutputHistograms& h);

enum class PlotKind { Radial, ParallelCoords };
PlotKind parse_plot_kind(std::string_view text);

struct PlotTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

// Radial: aggregate SDC per (domain, type, variable, model); label "D{d}U{u}".
// ParallelCoords: one line per experiment row, plan axes then sdc_rate.
PlotTable emit_plot_data(const std::vector<ResultRow>& rows, PlotKind kind);
std::string format_csv(const PlotTable& table);

// RFC 4180 field quoting.
std::string csv_field(const std::string& value);
std::string format_rate(double v);

}  // namespace nvpfi
