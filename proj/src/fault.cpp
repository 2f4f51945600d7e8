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

#include "nvpfi/fault.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "nvpfi/errors.hpp"
#include "nvpfi/model_io.hpp"

namespace nvpfi {

std::string_view to_string(Direction d) noexcept {
  switch (d) {
    case Direction::ZeroToOne: return "0to1";
    case Direction::OneToZero: return "1to0";
    case Direction::Both: return "both";
  }
  return "?";
}

std::string_view to_string(SignFilter s) noexcept {
  switch (s) {
    case SignFilter::Positive: return "positive";
    case SignFilter::Negative: return "negative";
    case SignFilter::Both: return "both";
  }
  return "?";
}

Direction parse_direction(std::string_view text) {
  if (text == "0to1") return Direction::ZeroToOne;
  if (text == "1to0") return Direction::OneToZero;
  if (text == "both") return Direction::Both;
  throw ConfigError("unknown direction '" + std::string(text) + "' (0to1|1to0|both)");
}

SignFilter parse_sign_filter(std::string_view text) {
  if (text == "positive") return SignFilter::Positive;
  if (text == "negative") return SignFilter::Negative;
  if (text == "both") return SignFilter::Both;
  throw ConfigError("unknown sign filter '" + std::string(text) + "' (positive|negative|both)");
}

std::string_view fault_name(const FaultType& fault) noexcept {
  switch (fault.index()) {
    case 0: return "zeros";
    case 1: return "random";
    default: return "bitflip";
  }
}

void validate_fault(const FaultType& fault) {
  if (const auto* r = std::get_if<RandomFault>(&fault)) {
    if (!(r->stddev > 0.0f) || !std::isfinite(r->stddev) || !std::isfinite(r->mean)) {
      throw ConfigError("random fault needs finite mean and std > 0");
    }
  } else if (const auto* b = std::get_if<BitFlipFault>(&fault)) {
    if (b->bit.position && (*b->bit.position < 0 || *b->bit.position > 31)) {
      throw ConfigError("bit position " + std::to_string(*b->bit.position) +
                        " outside [0, 31]");
    }
  }
}

std::string_view to_string(StateVariable v) noexcept {
  switch (v) {
    case StateVariable::Bias: return "bias";
    case StateVariable::Weight: return "weight";
    case StateVariable::All: return "all";
  }
  return "?";
}

StateVariable parse_state_variable(std::string_view text) {
  if (text == "bias") return StateVariable::Bias;
  if (text == "weight") return StateVariable::Weight;
  if (text == "all") return StateVariable::All;
  throw ConfigError("unknown state variable '" + std::string(text) + "' (bias|weight|all)");
}

namespace {

void check_amount(double amount) {
  if (!(amount >= 0.0 && amount <= 100.0)) {
    throw ConfigError("amount must be a percentage in [0, 100]");
  }
}

}  // namespace

void StateInjectionPlan::validate() const {
  if (mode != 20 && mode != 40 && mode != 60 && mode != 80 && mode != 100) {
    throw ConfigError("state mode must be one of 20, 40, 60, 80, 100 (got " +
                      std::to_string(mode) + ")");
  }
  check_amount(amount);
  validate_fault(fault);
}

std::string_view to_string(OutputVariable v) noexcept {
  switch (v) {
    case OutputVariable::Scale: return "scale";
    case OutputVariable::Translation: return "translation";
    case OutputVariable::All: return "all";
  }
  return "?";
}

std::string_view to_string(ActivationFilter a) noexcept {
  switch (a) {
    case ActivationFilter::ReLU: return "relu";
    case ActivationFilter::Tanh: return "tanh";
    case ActivationFilter::Linear: return "linear";
    case ActivationFilter::All: return "all";
  }
  return "?";
}

std::string_view to_string(OutputMethod m) noexcept {
  return m == OutputMethod::Partial ? "partial" : "complete";
}

OutputVariable parse_output_variable(std::string_view text) {
  if (text == "scale") return OutputVariable::Scale;
  if (text == "translation") return OutputVariable::Translation;
  if (text == "all") return OutputVariable::All;
  throw ConfigError("unknown output variable '" + std::string(text) +
                    "' (scale|translation|all)");
}

ActivationFilter parse_activation_filter(std::string_view text) {
  if (text == "relu") return ActivationFilter::ReLU;
  if (text == "tanh") return ActivationFilter::Tanh;
  if (text == "linear") return ActivationFilter::Linear;
  if (text == "all") return ActivationFilter::All;
  throw ConfigError("unknown activation filter '" + std::string(text) +
                    "' (relu|tanh|linear|all)");
}

OutputMethod parse_output_method(std::string_view text) {
  if (text == "partial") return OutputMethod::Partial;
  if (text == "complete") return OutputMethod::Complete;
  throw ConfigError("unknown method '" + std::string(text) + "' (partial|complete)");
}

std::string OutputInjectionPlan::mode_string() const {
  switch (mode) {
    case OutputMode::AllLayers: return "all";
    case OutputMode::RandomLayer: return "random";
    case OutputMode::SpecificLayer: return std::to_string(layer_index);
  }
  return "?";
}

void OutputInjectionPlan::validate(std::size_t n_coupling) const {
  if (mode == OutputMode::SpecificLayer && n_coupling > 0 && layer_index >= n_coupling) {
    throw ConfigError("output layer index " + std::to_string(layer_index) +
                      " out of range for " + std::to_string(n_coupling) + " coupling layers");
  }
  check_amount(amount);
  validate_fault(fault);
}

std::string_view to_string(TargetVariable v) noexcept {
  switch (v) {
    case TargetVariable::Weight: return "weight";
    case TargetVariable::Bias: return "bias";
    case TargetVariable::Output: return "output";
  }
  return "?";
}

std::string to_json_line(const InjectionRecord& r) {
  char buf[320];
  std::snprintf(buf, sizeof buf,
                "{\"coupling\":%zu,\"net\":\"%s\",\"fc\":%zu,\"variable\":\"%s\","
                "\"index\":%zu,\"bit\":%d,\"old_bits\":\"0x%08X\",\"new_bits\":\"0x%08X\","
                "\"masked\":%s",
                r.coupling, std::string(to_string(r.net)).c_str(), r.fc,
                std::string(to_string(r.variable)).c_str(), r.flat_index, r.bit,
                static_cast<unsigned>(r.old_bits), static_cast<unsigned>(r.new_bits),
                r.masked ? "true" : "false");
  std::string line(buf);
  if (r.sample != InjectionRecord::kNoSample) line += ",\"sample\":" + std::to_string(r.sample);
  line += "}";
  return line;
}

FlipResult flip_bit(float value, int bit, Direction direction) noexcept {
  const std::uint32_t mask = std::uint32_t{1} << bit;
  const std::uint32_t bits = float_bits(value);
  const bool set = (bits & mask) != 0;
  const bool eligible = direction == Direction::Both ||
                        (direction == Direction::ZeroToOne && !set) ||
                        (direction == Direction::OneToZero && set);
  if (!eligible) return {value, true};
  return {bits_float(bits ^ mask), false};
}

bool passes_sign_filter(float value, SignFilter filter) noexcept {
  const bool negative = (float_bits(value) >> 31) != 0;
  switch (filter) {
    case SignFilter::Positive: return !negative;
    case SignFilter::Negative: return negative;
    case SignFilter::Both: return true;
  }
  return true;
}

std::size_t target_count(std::size_t pool_size, double amount) noexcept {
  if (pool_size == 0 || !(amount > 0.0)) return 0;
  const double exact = static_cast<double>(pool_size) * amount / 100.0;
  auto count = static_cast<std::size_t>(std::floor(exact + 0.5));
  count = std::max<std::size_t>(count, 1);
  return std::min(count, pool_size);
}

namespace {

// First k entries of `pool` after a partial Fisher-Yates shuffle, sorted.
std::vector<std::size_t> sample_without_replacement(std::vector<std::size_t> pool, std::size_t k,
                                                    RandomStream& stream) {
  if (k < pool.size()) {
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(stream.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
  }
  return pool;
}

}  // namespace

std::vector<std::size_t> select_targets(std::size_t population_size, double amount,
                                        RandomStream& stream, SignFilter sign_filter,
                                        std::span<const float> values) {
  if (!values.empty() && values.size() != population_size) {
    throw ConfigError("select_targets: values length does not match population");
  }
  if (values.empty() && sign_filter != SignFilter::Both && population_size > 0) {
    throw ConfigError("select_targets: sign filter needs the values");
  }
  std::vector<std::size_t> pool;
  pool.reserve(population_size);
  for (std::size_t i = 0; i < population_size; ++i) {
    if (sign_filter == SignFilter::Both || passes_sign_filter(values[i], sign_filter)) {
      pool.push_back(i);
    }
  }
  const std::size_t k = target_count(pool.size(), amount);
  if (k == 0) return {};
  return sample_without_replacement(std::move(pool), k, stream);
}

CorruptedValue corrupt_value(const FaultType& fault, float value, RandomStream& stream) {
  CorruptedValue out{value, -1, false};
  if (std::holds_alternative<ZerosFault>(fault)) {
    out.value = 0.0f;
  } else if (const auto* r = std::get_if<RandomFault>(&fault)) {
    const float draw = stream.gaussian(r->mean, r->stddev);
    out.value = r->additive ? value + draw : draw;
  } else {
    const auto& b = std::get<BitFlipFault>(fault);
    out.bit = b.bit.position ? *b.bit.position : static_cast<int>(stream.below(32));
    const auto flipped = flip_bit(value, out.bit, b.direction);
    out.value = flipped.value;
    out.masked = flipped.masked;
  }
  if (float_bits(out.value) == float_bits(value)) out.masked = true;
  return out;
}

namespace {

SignFilter sign_filter_of(const FaultType& fault) {
  if (const auto* b = std::get_if<BitFlipFault>(&fault)) return b->sign;
  return SignFilter::Both;
}

void corrupt_array(std::span<float> values, const FaultType& fault, double amount,
                   RandomStream& stream, InjectionReport* report, InjectionRecord proto) {
  const auto targets =
      select_targets(values.size(), amount, stream, sign_filter_of(fault), values);
  for (std::size_t idx : targets) {
    const float old = values[idx];
    const auto c = corrupt_value(fault, old, stream);
    values[idx] = c.value;
    if (report) {
      InjectionRecord rec = proto;
      rec.flat_index = idx;
      rec.bit = c.bit;
      rec.old_bits = float_bits(old);
      rec.new_bits = float_bits(c.value);
      rec.masked = c.masked;
      report->records.push_back(rec);
    }
  }
}

FcLayer& layer_at(ModelState& model, const SiteId& site) {
  return model.layers[site.coupling].net(site.net)[site.fc];
}

}  // namespace

std::vector<SiteId> all_fc_sites(const ModelDefinition& def) {
  std::vector<SiteId> sites;
  sites.reserve(def.total_fc_layers());
  for (std::size_t c = 0; c < def.n_coupling; ++c) {
    for (NetKind net : {NetKind::Scale, NetKind::Translation}) {
      for (std::size_t k = 0; k < def.fc_depth; ++k) sites.push_back({c, net, k});
    }
  }
  return sites;
}

void inject_states_inplace(ModelState& model, const StateInjectionPlan& plan,
                           RandomStream& stream, InjectionReport* report) {
  plan.validate();
  const auto sites = all_fc_sites(model.definition);
  const std::size_t n_layers =
      (static_cast<std::size_t>(plan.mode) * sites.size() + 99) / 100;  // ceil
  std::vector<std::size_t> order(sites.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto chosen = sample_without_replacement(std::move(order), n_layers, stream);

  for (std::size_t li : chosen) {
    const SiteId& site = sites[li];
    FcLayer& fc = layer_at(model, site);
    InjectionRecord proto;
    proto.coupling = site.coupling;
    proto.net = site.net;
    proto.fc = site.fc;
    if (plan.variable != StateVariable::Bias) {
      proto.variable = TargetVariable::Weight;
      corrupt_array(fc.weights.data(), plan.fault, plan.amount, stream, report, proto);
    }
    if (plan.variable != StateVariable::Weight) {
      proto.variable = TargetVariable::Bias;
      corrupt_array(fc.bias, plan.fault, plan.amount, stream, report, proto);
    }
  }
}

std::pair<ModelState, InjectionReport> inject_states(const ModelState& model,
                                                     const StateInjectionPlan& plan,
                                                     RandomStream& stream) {
  ModelState copy = model;
  InjectionReport report;
  inject_states_inplace(copy, plan, stream, &report);
  return {std::move(copy), std::move(report)};
}

namespace {

bool activation_passes(ActivationFilter filter, Activation act) {
  switch (filter) {
    case ActivationFilter::ReLU: return act == Activation::ReLU;
    case ActivationFilter::Tanh: return act == Activation::Tanh;
    case ActivationFilter::Linear: return act == Activation::Linear;
    case ActivationFilter::All: return true;
  }
  return false;
}

}  // namespace

std::vector<SiteId> plan_output_hooks(const ModelState& model, const OutputInjectionPlan& plan,
                                      RandomStream& stream) {
  const auto& def = model.definition;
  plan.validate(def.n_coupling);
  if (plan.mode == OutputMode::SpecificLayer && plan.layer_index >= model.layers.size()) {
    throw ConfigError("output layer index out of range");
  }
  std::vector<std::size_t> couplings;
  switch (plan.mode) {
    case OutputMode::SpecificLayer: couplings = {plan.layer_index}; break;
    case OutputMode::RandomLayer:
      couplings = {static_cast<std::size_t>(stream.below(model.layers.size()))};
      break;
    case OutputMode::AllLayers:
      couplings.resize(model.layers.size());
      std::iota(couplings.begin(), couplings.end(), std::size_t{0});
      break;
  }
  std::vector<SiteId> sites;
  for (std::size_t c : couplings) {
    for (NetKind net : {NetKind::Scale, NetKind::Translation}) {
      if (plan.variable == OutputVariable::Scale && net != NetKind::Scale) continue;
      if (plan.variable == OutputVariable::Translation && net != NetKind::Translation) continue;
      const FcNet& fcs = model.layers[c].net(net);
      const std::size_t first = plan.method == OutputMethod::Partial ? fcs.size() - 1 : 0;
      for (std::size_t k = first; k < fcs.size(); ++k) {
        if (activation_passes(plan.activation, fcs[k].activation)) sites.push_back({c, net, k});
      }
    }
  }
  return sites;
}

OutputInjector::OutputInjector(const ModelState& model, const OutputInjectionPlan& plan,
                               RandomStream& stream, InjectionReport* report)
    : model_(model),
      plan_(plan),
      stream_(stream),
      report_(report),
      sites_(plan_output_hooks(model, plan, stream)),
      active_(model.definition.total_fc_layers(), 0) {
  for (const auto& s : sites_) active_[site_slot(s)] = 1;
}

std::size_t OutputInjector::site_slot(const SiteId& site) const noexcept {
  const std::size_t depth = model_.definition.fc_depth;
  return (site.coupling * 2 + (site.net == NetKind::Scale ? 0 : 1)) * depth + site.fc;
}

bool OutputInjector::wants(const SiteId& site, Activation) const {
  return active_[site_slot(site)] != 0;
}

void OutputInjector::on_output(const SiteId& site, Activation, std::span<float> values) {
  InjectionRecord proto;
  proto.coupling = site.coupling;
  proto.net = site.net;
  proto.fc = site.fc;
  proto.variable = TargetVariable::Output;
  proto.sample = sample_;
  corrupt_array(values, plan_.fault, plan_.amount, stream_, report_, proto);
}

float OutputInjector::log_prob(std::span<const float> x, std::size_t sample) {
  sample_ = sample;
  if (sites_.empty()) return nvpfi::log_prob(model_, x);
  return nvpfi::log_prob(model_, x, this);
}

std::pair<float, InjectionReport> forward_with_output_injection(const ModelState& model,
                                                                std::span<const float> x,
                                                                const OutputInjectionPlan& plan,
                                                                RandomStream& stream) {
  InjectionReport report;
  OutputInjector injector(model, plan, stream, &report);
  const float lp = injector.log_prob(x);
  return {lp, std::move(report)};
}

Snapshot snapshot(const ModelState& model) { return Snapshot{encode_model(model)}; }

ModelState restore(const Snapshot& snap) { return decode_model(snap.bytes); }

}  // namespace nvpfi
