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

#include "nvpfi/realnvp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nvpfi/errors.hpp"

namespace nvpfi {

std::string_view to_string(NetKind net) noexcept {
  return net == NetKind::Scale ? "scale" : "translation";
}

std::string_view to_string(Prediction p) noexcept {
  switch (p) {
    case Prediction::Nominal: return "nominal";
    case Prediction::Anomalous: return "anomalous";
    case Prediction::Due: return "due";
  }
  return "?";
}

bool FcLayer::operator==(const FcLayer& other) const noexcept {
  if (activation != other.activation || !(weights == other.weights) ||
      bias.size() != other.bias.size()) {
    return false;
  }
  for (std::size_t i = 0; i < bias.size(); ++i) {
    if (float_bits(bias[i]) != float_bits(other.bias[i])) return false;
  }
  return true;
}

bool ModelState::operator==(const ModelState& other) const noexcept {
  if (!(definition == other.definition) || layers != other.layers) return false;
  if (threshold.has_value() != other.threshold.has_value()) return false;
  return !threshold || float_bits(*threshold) == float_bits(*other.threshold);
}

void ModelDefinition::validate(bool grid) const {
  if (input_dim < 2) throw ConfigError("input_dim must be >= 2");
  if (n_coupling < 1) throw ConfigError("n_coupling must be >= 1");
  if (fc_depth < 1) throw ConfigError("fc_depth must be >= 1");
  if (units < 1) throw ConfigError("units must be >= 1");
  if (mask_scheme != MaskScheme::AlternatingHalves) throw ConfigError("unknown mask scheme");
  if (grid) {
    const bool ok = (n_coupling == 4 || n_coupling == 6) &&
                    (fc_depth >= 3 && fc_depth <= 5) &&
                    (units == 32 || units == 48 || units == 64);
    if (!ok) throw ConfigError("definition " + id() + " is outside the model grid");
  }
}

std::string ModelDefinition::id() const {
  return "C" + std::to_string(n_coupling) + "D" + std::to_string(fc_depth) + "U" +
         std::to_string(units);
}

std::vector<std::uint8_t> alternating_mask(std::size_t input_dim, std::size_t index) {
  std::vector<std::uint8_t> mask(input_dim);
  const std::size_t half = input_dim / 2;
  for (std::size_t i = 0; i < input_dim; ++i) {
    const bool first = i < half;
    mask[i] = (index % 2 == 0) == first ? 1 : 0;
  }
  return mask;
}

namespace {

std::size_t count_pass(const std::vector<std::uint8_t>& mask) {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

FcNet make_net(std::size_t in, std::size_t out, std::size_t depth, std::size_t units,
               Activation final_act) {
  FcNet net;
  net.reserve(depth);
  for (std::size_t k = 0; k < depth; ++k) {
    const std::size_t rows = (k + 1 == depth) ? out : units;
    const std::size_t cols = (k == 0) ? in : units;
    FcLayer layer;
    layer.weights = Matrix(rows, cols);
    layer.bias.assign(rows, 0.0f);
    layer.activation = (k + 1 == depth) ? final_act : Activation::ReLU;
    net.push_back(std::move(layer));
  }
  return net;
}

void gather(std::span<const float> x, const std::vector<std::uint8_t>& mask, std::uint8_t which,
            std::vector<float>& out) {
  out.clear();
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (mask[i] == which) out.push_back(x[i]);
  }
}

void check_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw ConfigError(std::string(what) + ": length " + std::to_string(got) + " != " +
                      std::to_string(want));
  }
}

}  // namespace

ModelState make_identity_model(const ModelDefinition& def) {
  def.validate();
  ModelState model;
  model.definition = def;
  for (std::size_t c = 0; c < def.n_coupling; ++c) {
    CouplingLayer layer;
    layer.mask = alternating_mask(def.input_dim, c);
    const std::size_t in = count_pass(layer.mask);
    const std::size_t out = def.input_dim - in;
    layer.scale_net = make_net(in, out, def.fc_depth, def.units, Activation::Tanh);
    layer.translation_net = make_net(in, out, def.fc_depth, def.units, Activation::Linear);
    model.layers.push_back(std::move(layer));
  }
  return model;
}

ModelState make_random_model(const ModelDefinition& def, RandomStream& stream, float scale) {
  ModelState model = make_identity_model(def);
  auto draw = [&] {
    return static_cast<float>((2.0 * stream.uniform() - 1.0) * static_cast<double>(scale));
  };
  for (auto& layer : model.layers) {
    for (NetKind kind : {NetKind::Scale, NetKind::Translation}) {
      for (auto& fc : layer.net(kind)) {
        for (float& w : fc.weights.data()) w = draw();
        for (float& b : fc.bias) b = draw();
      }
    }
  }
  return model;
}

void validate_structure(const ModelState& model) {
  const auto& def = model.definition;
  def.validate();
  if (model.layers.size() != def.n_coupling) {
    throw ConfigError("layer count " + std::to_string(model.layers.size()) +
                      " != n_coupling " + std::to_string(def.n_coupling));
  }
  std::vector<std::uint8_t> touched(def.input_dim, 0);
  for (std::size_t c = 0; c < model.layers.size(); ++c) {
    const auto& layer = model.layers[c];
    if (layer.mask != alternating_mask(def.input_dim, c)) {
      throw ConfigError("coupling " + std::to_string(c) + " mask does not alternate halves");
    }
    const std::size_t in = count_pass(layer.mask);
    const std::size_t out = def.input_dim - in;
    for (std::size_t i = 0; i < def.input_dim; ++i) {
      if (!layer.mask[i]) touched[i] = 1;
    }
    for (NetKind kind : {NetKind::Scale, NetKind::Translation}) {
      const auto& net = layer.net(kind);
      if (net.size() != def.fc_depth) {
        throw ConfigError("coupling " + std::to_string(c) + " " + std::string(to_string(kind)) +
                          " net depth mismatch");
      }
      const Activation final_act = kind == NetKind::Scale ? Activation::Tanh : Activation::Linear;
      for (std::size_t k = 0; k < net.size(); ++k) {
        const auto& fc = net[k];
        const bool last = k + 1 == net.size();
        const std::size_t rows = last ? out : def.units;
        const std::size_t cols = k == 0 ? in : def.units;
        if (fc.weights.rows() != rows || fc.weights.cols() != cols || fc.bias.size() != rows) {
          throw ConfigError("coupling " + std::to_string(c) + " fc " + std::to_string(k) +
                            " has the wrong shape");
        }
        if (fc.activation != (last ? final_act : Activation::ReLU)) {
          throw ConfigError("coupling " + std::to_string(c) + " fc " + std::to_string(k) +
                            " has the wrong activation");
        }
      }
    }
  }
  if (std::find(touched.begin(), touched.end(), std::uint8_t{0}) != touched.end()) {
    throw ConfigError("some input dimension is never transformed");
  }
}

std::vector<float> net_forward(const FcNet& net, std::span<const float> input, OutputTap* tap,
                               std::size_t coupling, NetKind kind) {
  std::vector<float> current(input.begin(), input.end());
  std::vector<float> next;
  for (std::size_t k = 0; k < net.size(); ++k) {
    const auto& fc = net[k];
    next.resize(fc.weights.rows());
    fc_forward_into(fc.weights, fc.bias, current, fc.activation, next);
    if (tap) {
      const SiteId site{coupling, kind, k};
      if (tap->wants(site, fc.activation)) tap->on_output(site, fc.activation, next);
    }
    current.swap(next);
  }
  return current;
}

CouplingResult coupling_forward(const CouplingLayer& layer, std::span<const float> x,
                                OutputTap* tap, std::size_t coupling_index) {
  check_dim(x.size(), layer.mask.size(), "coupling_forward");
  std::vector<float> pass;
  gather(x, layer.mask, 1, pass);
  const auto s = net_forward(layer.scale_net, pass, tap, coupling_index, NetKind::Scale);
  const auto t = net_forward(layer.translation_net, pass, tap, coupling_index,
                             NetKind::Translation);
  CouplingResult result;
  result.y.assign(x.begin(), x.end());
  std::size_t u = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (layer.mask[i]) continue;
    result.y[i] = x[i] * std::exp(s[u]) + t[u];
    result.log_det += s[u];
    ++u;
  }
  return result;
}

std::vector<float> coupling_inverse(const CouplingLayer& layer, std::span<const float> y) {
  check_dim(y.size(), layer.mask.size(), "coupling_inverse");
  std::vector<float> pass;
  gather(y, layer.mask, 1, pass);
  const auto s = net_forward(layer.scale_net, pass);
  const auto t = net_forward(layer.translation_net, pass);
  std::vector<float> x(y.begin(), y.end());
  std::size_t u = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (layer.mask[i]) continue;
    x[i] = (y[i] - t[u]) * std::exp(-s[u]);
    ++u;
  }
  return x;
}

FlowResult flow_forward(const ModelState& model, std::span<const float> x, OutputTap* tap) {
  check_dim(x.size(), model.definition.input_dim, "flow_forward");
  FlowResult result;
  result.z.assign(x.begin(), x.end());
  for (std::size_t c = 0; c < model.layers.size(); ++c) {
    auto step = coupling_forward(model.layers[c], result.z, tap, c);
    result.z = std::move(step.y);
    result.log_det += step.log_det;
  }
  return result;
}

std::vector<float> flow_inverse(const ModelState& model, std::span<const float> z) {
  check_dim(z.size(), model.definition.input_dim, "flow_inverse");
  std::vector<float> x(z.begin(), z.end());
  for (std::size_t c = model.layers.size(); c-- > 0;) x = coupling_inverse(model.layers[c], x);
  return x;
}

float standard_normal_log_density(std::span<const float> z) {
  const auto norm_const =
      static_cast<float>(0.5 * static_cast<double>(z.size()) * std::log(2.0 * std::numbers::pi));
  float sq = 0.0f;
  for (float v : z) sq += v * v;
  return -norm_const - 0.5f * sq;
}

float log_prob(const ModelState& model, std::span<const float> x, OutputTap* tap) {
  const auto flow = flow_forward(model, x, tap);
  return standard_normal_log_density(flow.z) + flow.log_det;
}

Prediction classify_score(float score, float threshold) noexcept {
  if (!std::isfinite(score)) return Prediction::Due;
  return score >= threshold ? Prediction::Nominal : Prediction::Anomalous;
}

Prediction classify(const ModelState& model, std::span<const float> x) {
  if (!model.threshold) throw ConfigError("classify: model threshold is not set");
  return classify_score(log_prob(model, x), *model.threshold);
}

float percentile_threshold(std::vector<float> scores, double percentile) {
  if (scores.empty()) throw ConfigError("percentile_threshold: no scores");
  if (!(percentile >= 0.0 && percentile <= 100.0)) {
    throw ConfigError("percentile must be in [0, 100]");
  }
  for (float s : scores) {
    if (!std::isfinite(s)) throw ConfigError("percentile_threshold: non-finite score");
  }
  std::sort(scores.begin(), scores.end());
  const auto rank = static_cast<std::size_t>(
      std::ceil(percentile * static_cast<double>(scores.size()) / 100.0));
  return scores[rank == 0 ? 0 : rank - 1];
}

}  // namespace nvpfi
