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

// Fault models for binary32 network state.
//
// Layer-state faults corrupt stored weights/biases before inference.
// Layer-output faults corrupt post-activation vectors while the forward pass
// runs. Both draw their targets with select_targets and corrupt them with one
// of three fault types: Zeros, Random (Gaussian) and BitFlip.
//
// Bit numbering follows the binary32 layout: bit 0 is the mantissa LSB,
// bits 23..30 the exponent, bit 31 the sign.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "nvpfi/numeric.hpp"
#include "nvpfi/realnvp.hpp"

namespace nvpfi {

enum class Direction : std::uint8_t { ZeroToOne, OneToZero, Both };
enum class SignFilter : std::uint8_t { Positive, Negative, Both };

std::string_view to_string(Direction d) noexcept;
std::string_view to_string(SignFilter s) noexcept;
Direction parse_direction(std::string_view text);
SignFilter parse_sign_filter(std::string_view text);

// Fixed bit position, or nullopt for an independent uniform draw per target.
struct BitSelector {
  std::optional<int> position;

  static BitSelector fixed(int bit) { return BitSelector{bit}; }
  static BitSelector random() { return BitSelector{}; }
  bool operator==(const BitSelector&) const = default;
};

struct ZerosFault {
  bool operator==(const ZerosFault&) const = default;
};

// Replaces the value with a draw from N(mean, stddev), or adds that draw to
// the value when `additive` is set.
struct RandomFault {
  float mean = 0.0f;
  float stddev = 1.0f;
  bool additive = false;
  bool operator==(const RandomFault&) const = default;
};

struct BitFlipFault {
  BitSelector bit;
  Direction direction = Direction::Both;
  SignFilter sign = SignFilter::Both;
  bool operator==(const BitFlipFault&) const = default;
};

using FaultType = std::variant<ZerosFault, RandomFault, BitFlipFault>;

std::string_view fault_name(const FaultType& fault) noexcept;  // zeros|random|bitflip
void validate_fault(const FaultType& fault);

enum class StateVariable : std::uint8_t { Bias, Weight, All };
std::string_view to_string(StateVariable v) noexcept;
StateVariable parse_state_variable(std::string_view text);

struct StateInjectionPlan {
  int mode = 100;  // percentage of FC layers: 20, 40, 60, 80 or 100
  StateVariable variable = StateVariable::All;
  FaultType fault = ZerosFault{};
  double amount = 0.0;  // per-layer injection rate, percent

  void validate() const;
};

enum class OutputMode : std::uint8_t { SpecificLayer, RandomLayer, AllLayers };
enum class OutputVariable : std::uint8_t { Scale, Translation, All };
enum class ActivationFilter : std::uint8_t { ReLU, Tanh, Linear, All };
enum class OutputMethod : std::uint8_t { Partial, Complete };

std::string_view to_string(OutputVariable v) noexcept;
std::string_view to_string(ActivationFilter a) noexcept;
std::string_view to_string(OutputMethod m) noexcept;
OutputVariable parse_output_variable(std::string_view text);
ActivationFilter parse_activation_filter(std::string_view text);
OutputMethod parse_output_method(std::string_view text);

struct OutputInjectionPlan {
  OutputMode mode = OutputMode::AllLayers;
  std::size_t layer_index = 0;  // only for SpecificLayer
  OutputVariable variable = OutputVariable::All;
  ActivationFilter activation = ActivationFilter::All;
  OutputMethod method = OutputMethod::Partial;
  FaultType fault = ZerosFault{};
  double amount = 0.0;

  // "all", "random", or the coupling index.
  std::string mode_string() const;
  // n_coupling = 0 skips the layer-range check.
  void validate(std::size_t n_coupling = 0) const;
};

enum class TargetVariable : std::uint8_t { Weight, Bias, Output };
std::string_view to_string(TargetVariable v) noexcept;

struct InjectionRecord {
  static constexpr std::size_t kNoSample = static_cast<std::size_t>(-1);

  std::size_t coupling = 0;
  NetKind net = NetKind::Scale;
  std::size_t fc = 0;
  TargetVariable variable = TargetVariable::Weight;
  std::size_t flat_index = 0;
  int bit = -1;  // -1 when the fault type is not a bit flip
  std::uint32_t old_bits = 0;
  std::uint32_t new_bits = 0;
  bool masked = false;
  std::size_t sample = kNoSample;  // evaluation sample, output faults only

  bool operator==(const InjectionRecord&) const = default;
};

struct InjectionReport {
  std::vector<InjectionRecord> records;

  bool operator==(const InjectionReport&) const = default;
};

// One JSON object per record, no trailing newline.
std::string to_json_line(const InjectionRecord& record);

struct FlipResult {
  float value;
  bool masked;
};

// Inverts `bit` when its current state is the direction's source state (any
// state for Both); otherwise returns the value unchanged with masked = true.
FlipResult flip_bit(float value, int bit, Direction direction) noexcept;

bool passes_sign_filter(float value, SignFilter filter) noexcept;

// round-half-up(pool * amount / 100), at least 1 when amount > 0 and pool > 0.
std::size_t target_count(std::size_t pool_size, double amount) noexcept;

// Uniform sample without replacement from the indices whose sign passes the
// filter (zero is positive). `values` may be empty when filter is Both.
// Returned indices are ascending.
std::vector<std::size_t> select_targets(std::size_t population_size, double amount,
                                        RandomStream& stream, SignFilter sign_filter,
                                        std::span<const float> values);

struct CorruptedValue {
  float value;
  int bit;
  bool masked;
};

// Applies one fault to one value, drawing from `stream` as the type requires.
CorruptedValue corrupt_value(const FaultType& fault, float value, RandomStream& stream);

// Corrupts a copy of `model`; the input is left untouched.
std::pair<ModelState, InjectionReport> inject_states(const ModelState& model,
                                                     const StateInjectionPlan& plan,
                                                     RandomStream& stream);

// In-place variant used by the campaign runner's working copy. `report` may be null.
void inject_states_inplace(ModelState& model, const StateInjectionPlan& plan,
                           RandomStream& stream, InjectionReport* report);

// Canonical FC layer enumeration order: coupling, scale then translation, fc.
std::vector<SiteId> all_fc_sites(const ModelDefinition& def);

// Hook sites for an output plan. RandomLayer draws its coupling index from `stream`.
std::vector<SiteId> plan_output_hooks(const ModelState& model, const OutputInjectionPlan& plan,
                                      RandomStream& stream);

// Output tap corrupting post-activation values at a fixed set of sites. The
// random coupling index (RandomLayer) is drawn once, at construction.
class OutputInjector : public OutputTap {
 public:
  OutputInjector(const ModelState& model, const OutputInjectionPlan& plan, RandomStream& stream,
                 InjectionReport* report = nullptr);

  const std::vector<SiteId>& sites() const noexcept { return sites_; }

  // log_prob with faults applied on every visit of every hook site.
  float log_prob(std::span<const float> x, std::size_t sample = InjectionRecord::kNoSample);

  bool wants(const SiteId& site, Activation act) const override;
  void on_output(const SiteId& site, Activation act, std::span<float> values) override;

 private:
  std::size_t site_slot(const SiteId& site) const noexcept;

  const ModelState& model_;
  OutputInjectionPlan plan_;
  RandomStream& stream_;
  InjectionReport* report_;
  std::vector<SiteId> sites_;
  std::vector<std::uint8_t> active_;
  std::size_t sample_ = InjectionRecord::kNoSample;
};

std::pair<float, InjectionReport> forward_with_output_injection(const ModelState& model,
                                                                std::span<const float> x,
                                                                const OutputInjectionPlan& plan,
                                                                RandomStream& stream);

// Serialized model state; restore() reproduces every 32-bit pattern.
struct Snapshot {
  std::vector<std::uint8_t> bytes;
  bool operator==(const Snapshot&) const = default;
};

Snapshot snapshot(const ModelState& model);
ModelState restore(const Snapshot& snap);

}  // namespace nvpfi
