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

// SDC / DUE / masked rates.
//
// Only samples the fault-free model classifies correctly are evaluated. For
// one experiment, a sample is
//   DUE    if the faulty score is NaN or +/-Inf,
//   masked if the faulty prediction still equals the ground truth,
//   SDC    otherwise.
// The per-campaign rate is the mean of the per-experiment rates over all
// experiments and seeds. Counts stay integral until the final division.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "nvpfi/realnvp.hpp"

namespace nvpfi {

enum class DuePolicy : std::uint8_t { SeparateDue, DueCountsAsSdc };
enum class SdcVariant : std::uint8_t { Absolute, Relative };
enum class OutcomeClass : std::uint8_t { Masked, Sdc, Due };

std::string_view to_string(DuePolicy p) noexcept;
std::string_view to_string(SdcVariant v) noexcept;
DuePolicy parse_due_policy(std::string_view text);
SdcVariant parse_sdc_variant(std::string_view text);

using SampleId = std::int64_t;

struct BaselineRecord {
  std::vector<SampleId> ids;
  std::vector<Prediction> predictions;  // fault-free, never Due
  std::vector<Label> labels;
  std::vector<SampleId> correct_set;    // ascending
  std::vector<std::pair<SampleId, Label>> label_index;  // sorted by id

  // Throws ConfigError if lengths differ, ids repeat, or any prediction is Due.
  static BaselineRecord build(std::vector<SampleId> ids, std::vector<Prediction> predictions,
                              std::vector<Label> labels);

  double accuracy() const noexcept;
  Label label_of(SampleId id) const;
};

struct ExperimentOutcome {
  std::vector<SampleId> ids;  // evaluation set, subset of the baseline correct-set
  std::vector<Prediction> faulty;
  std::vector<OutcomeClass> classes;
};

// Classifies faulty predictions (aligned with `eval_ids`) against ground truth.
ExperimentOutcome make_outcome(const BaselineRecord& baseline, std::span<const SampleId> eval_ids,
                               std::span<const Prediction> faulty);

struct RateCounts {
  std::uint64_t sdc = 0;
  std::uint64_t due = 0;
  std::uint64_t masked = 0;
  std::uint64_t n = 0;

  bool operator==(const RateCounts&) const = default;
};

struct Rates {
  double sdc = 0.0;
  double due = 0.0;
  double masked = 0.0;
  RateCounts counts;  // after the DUE policy is applied
};

// Throws MetricUndefined for an empty evaluation set.
Rates sdc_rate_exp(const BaselineRecord& baseline, const ExperimentOutcome& outcome,
                   DuePolicy policy);

// Mean of per-experiment fractions; summed in ascending order so the result
// does not depend on the order experiments finished in.
double sdc_rate_aggregate(std::span<const double> per_experiment, std::size_t n_exps,
                          std::size_t n_seeds);

struct AggregateRates {
  double sdc = 0.0;
  double due = 0.0;
  double masked = 0.0;
};

// Exact mean from integer counts: one division when all experiments share a
// denominator (always the case inside one campaign point).
AggregateRates sdc_rate_aggregate(std::span<const RateCounts> per_experiment, std::size_t n_exps,
                                  std::size_t n_seeds);

// Evaluation set per model: own correct-set (Relative) or the intersection of
// all correct-sets (Absolute). Throws MetricUndefined on an empty intersection.
std::vector<std::vector<SampleId>> build_correct_set(SdcVariant variant,
                                                     std::span<const BaselineRecord> baselines);

}  // namespace nvpfi
