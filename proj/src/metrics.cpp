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

#include "nvpfi/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nvpfi/errors.hpp"

namespace nvpfi {

std::string_view to_string(DuePolicy p) noexcept {
  return p == DuePolicy::SeparateDue ? "separate" : "merged";
}

std::string_view to_string(SdcVariant v) noexcept {
  return v == SdcVariant::Absolute ? "absolute" : "relative";
}

DuePolicy parse_due_policy(std::string_view text) {
  if (text == "separate") return DuePolicy::SeparateDue;
  if (text == "merged") return DuePolicy::DueCountsAsSdc;
  throw ConfigError("unknown due_policy '" + std::string(text) + "' (separate|merged)");
}

SdcVariant parse_sdc_variant(std::string_view text) {
  if (text == "absolute") return SdcVariant::Absolute;
  if (text == "relative") return SdcVariant::Relative;
  throw ConfigError("unknown metric variant '" + std::string(text) + "' (absolute|relative)");
}

BaselineRecord BaselineRecord::build(std::vector<SampleId> ids,
                                     std::vector<Prediction> predictions,
                                     std::vector<Label> labels) {
  if (ids.size() != predictions.size() || ids.size() != labels.size()) {
    throw ConfigError("baseline: ids, predictions and labels differ in length");
  }
  BaselineRecord b;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (predictions[i] == Prediction::Due) {
      throw ConfigError("baseline prediction for sample " + std::to_string(ids[i]) +
                        " is non-finite; the fault-free model must score every sample");
    }
    if (matches(predictions[i], labels[i])) b.correct_set.push_back(ids[i]);
  }
  std::sort(b.correct_set.begin(), b.correct_set.end());
  auto sorted_ids = ids;
  std::sort(sorted_ids.begin(), sorted_ids.end());
  if (std::adjacent_find(sorted_ids.begin(), sorted_ids.end()) != sorted_ids.end()) {
    throw ConfigError("baseline: duplicate sample ids");
  }
  for (std::size_t i = 0; i < ids.size(); ++i) b.label_index.emplace_back(ids[i], labels[i]);
  std::sort(b.label_index.begin(), b.label_index.end());
  b.ids = std::move(ids);
  b.predictions = std::move(predictions);
  b.labels = std::move(labels);
  return b;
}

double BaselineRecord::accuracy() const noexcept {
  if (ids.empty()) return 0.0;
  return static_cast<double>(correct_set.size()) / static_cast<double>(ids.size());
}

Label BaselineRecord::label_of(SampleId id) const {
  const auto it = std::lower_bound(
      label_index.begin(), label_index.end(), id,
      [](const std::pair<SampleId, Label>& e, SampleId key) { return e.first < key; });
  if (it == label_index.end() || it->first != id) {
    throw ConfigError("sample " + std::to_string(id) + " not in baseline");
  }
  return it->second;
}

ExperimentOutcome make_outcome(const BaselineRecord& baseline, std::span<const SampleId> eval_ids,
                               std::span<const Prediction> faulty) {
  if (eval_ids.size() != faulty.size()) {
    throw ConfigError("outcome: ids and predictions differ in length");
  }
  ExperimentOutcome out;
  out.ids.assign(eval_ids.begin(), eval_ids.end());
  out.faulty.assign(faulty.begin(), faulty.end());
  out.classes.reserve(faulty.size());
  for (std::size_t i = 0; i < eval_ids.size(); ++i) {
    if (!std::binary_search(baseline.correct_set.begin(), baseline.correct_set.end(),
                            eval_ids[i])) {
      throw ConfigError("sample " + std::to_string(eval_ids[i]) +
                        " is outside the baseline correct-set");
    }
    if (faulty[i] == Prediction::Due) {
      out.classes.push_back(OutcomeClass::Due);
    } else if (matches(faulty[i], baseline.label_of(eval_ids[i]))) {
      out.classes.push_back(OutcomeClass::Masked);
    } else {
      out.classes.push_back(OutcomeClass::Sdc);
    }
  }
  return out;
}

Rates sdc_rate_exp(const BaselineRecord& baseline, const ExperimentOutcome& outcome,
                   DuePolicy policy) {
  (void)baseline;  // classes were resolved against it by make_outcome
  if (outcome.classes.empty()) {
    throw MetricUndefined("SDC rate undefined: no correctly classified samples to evaluate");
  }
  RateCounts c;
  c.n = outcome.classes.size();
  for (auto cls : outcome.classes) {
    switch (cls) {
      case OutcomeClass::Masked: ++c.masked; break;
      case OutcomeClass::Sdc: ++c.sdc; break;
      case OutcomeClass::Due: ++c.due; break;
    }
  }
  if (policy == DuePolicy::DueCountsAsSdc) {
    c.sdc += c.due;
    c.due = 0;
  }
  const auto n = static_cast<double>(c.n);
  return Rates{static_cast<double>(c.sdc) / n, static_cast<double>(c.due) / n,
               static_cast<double>(c.masked) / n, c};
}

namespace {

void check_length(std::size_t got, std::size_t n_exps, std::size_t n_seeds) {
  if (n_exps == 0 || n_seeds == 0) throw ConfigError("n_exps and n_seeds must be >= 1");
  if (got != n_exps * n_seeds) {
    throw ConfigError("aggregate expects " + std::to_string(n_exps * n_seeds) +
                      " experiment rates, got " + std::to_string(got));
  }
}

}  // namespace

double sdc_rate_aggregate(std::span<const double> per_experiment, std::size_t n_exps,
                          std::size_t n_seeds) {
  check_length(per_experiment.size(), n_exps, n_seeds);
  std::vector<double> sorted(per_experiment.begin(), per_experiment.end());
  std::sort(sorted.begin(), sorted.end());
  // Neumaier-compensated sum keeps the mean within one ulp of the exact value.
  double sum = 0.0;
  double carry = 0.0;
  for (double v : sorted) {
    const double t = sum + v;
    carry += std::fabs(sum) >= std::fabs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  return (sum + carry) / static_cast<double>(sorted.size());
}

AggregateRates sdc_rate_aggregate(std::span<const RateCounts> per_experiment, std::size_t n_exps,
                                  std::size_t n_seeds) {
  check_length(per_experiment.size(), n_exps, n_seeds);
  for (const auto& c : per_experiment) {
    if (c.n == 0) throw MetricUndefined("experiment with an empty evaluation set");
  }
  const std::uint64_t n0 = per_experiment.front().n;
  const bool shared = std::all_of(per_experiment.begin(), per_experiment.end(),
                                  [n0](const RateCounts& c) { return c.n == n0; });
  AggregateRates out;
  if (shared) {
    RateCounts total;
    for (const auto& c : per_experiment) {
      total.sdc += c.sdc;
      total.due += c.due;
      total.masked += c.masked;
    }
    const double denom = static_cast<double>(n0) * static_cast<double>(per_experiment.size());
    out.sdc = static_cast<double>(total.sdc) / denom;
    out.due = static_cast<double>(total.due) / denom;
    out.masked = static_cast<double>(total.masked) / denom;
    return out;
  }
  std::vector<double> sdc, due, masked;
  for (const auto& c : per_experiment) {
    const auto n = static_cast<double>(c.n);
    sdc.push_back(static_cast<double>(c.sdc) / n);
    due.push_back(static_cast<double>(c.due) / n);
    masked.push_back(static_cast<double>(c.masked) / n);
  }
  out.sdc = sdc_rate_aggregate(sdc, n_exps, n_seeds);
  out.due = sdc_rate_aggregate(due, n_exps, n_seeds);
  out.masked = sdc_rate_aggregate(masked, n_exps, n_seeds);
  return out;
}

std::vector<std::vector<SampleId>> build_correct_set(SdcVariant variant,
                                                     std::span<const BaselineRecord> baselines) {
  if (baselines.empty()) throw ConfigError("build_correct_set needs at least one model");
  std::vector<std::vector<SampleId>> sets;
  if (variant == SdcVariant::Relative) {
    for (const auto& b : baselines) sets.push_back(b.correct_set);
    return sets;
  }
  std::vector<SampleId> shared = baselines.front().correct_set;
  for (std::size_t i = 1; i < baselines.size(); ++i) {
    std::vector<SampleId> next;
    std::set_intersection(shared.begin(), shared.end(), baselines[i].correct_set.begin(),
                          baselines[i].correct_set.end(), std::back_inserter(next));
    shared.swap(next);
  }
  if (shared.empty()) {
    throw MetricUndefined("absolute SDC undefined: models share no correctly classified sample");
  }
  sets.assign(baselines.size(), shared);
  return sets;
}

}  // namespace nvpfi
