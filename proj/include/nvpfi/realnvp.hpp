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

// Real NVP flow built from affine coupling layers. Each coupling layer keeps
// its pass-through half unchanged and transforms the other half as
//   y_u = x_u * exp(s(x_m)) + t(x_m),   log|det J| = sum(s(x_m))
// where s ends in Tanh and t ends in a Linear layer. Hidden layers use ReLU.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nvpfi/numeric.hpp"

namespace nvpfi {

enum class NetKind : std::uint8_t { Scale, Translation };

std::string_view to_string(NetKind net) noexcept;

struct FcLayer {
  Matrix weights;  // out x in
  std::vector<float> bias;
  Activation activation = Activation::Linear;

  bool operator==(const FcLayer& other) const noexcept;
};

using FcNet = std::vector<FcLayer>;

struct CouplingLayer {
  std::vector<std::uint8_t> mask;  // 1 = pass-through
  FcNet scale_net;
  FcNet translation_net;

  const FcNet& net(NetKind kind) const noexcept {
    return kind == NetKind::Scale ? scale_net : translation_net;
  }
  FcNet& net(NetKind kind) noexcept { return kind == NetKind::Scale ? scale_net : translation_net; }

  bool operator==(const CouplingLayer& other) const noexcept = default;
};

enum class MaskScheme : std::uint8_t { AlternatingHalves = 0 };

struct ModelDefinition {
  std::size_t input_dim = 0;
  std::size_t n_coupling = 0;
  std::size_t fc_depth = 0;  // FC layers per net
  std::size_t units = 0;     // hidden width
  MaskScheme mask_scheme = MaskScheme::AlternatingHalves;

  // Structural checks; `grid` additionally restricts to {4,6}x{3,4,5}x{32,48,64}.
  void validate(bool grid = false) const;
  // "C{c}D{d}U{u}".
  std::string id() const;
  std::size_t total_fc_layers() const noexcept { return n_coupling * 2 * fc_depth; }

  bool operator==(const ModelDefinition& other) const noexcept = default;
};

// Pass-through mask of coupling layer `index`: even layers keep [0, d/2),
// odd layers keep [d/2, d).
std::vector<std::uint8_t> alternating_mask(std::size_t input_dim, std::size_t index);

struct ModelState {
  ModelDefinition definition;
  std::vector<CouplingLayer> layers;
  std::optional<float> threshold;  // log-likelihood cutoff

  // Bitwise equality over every stored 32-bit pattern.
  bool operator==(const ModelState& other) const noexcept;
};

// All-zero weights and biases: every coupling layer is the identity map.
ModelState make_identity_model(const ModelDefinition& def);
// Uniform(-scale, scale) weights and biases drawn in canonical order.
ModelState make_random_model(const ModelDefinition& def, RandomStream& stream, float scale);

// Throws ConfigError when activations, shapes or masks break the coupling-layer contract.
void validate_structure(const ModelState& model);

// Location of one FC layer inside the flow.
struct SiteId {
  std::size_t coupling = 0;
  NetKind net = NetKind::Scale;
  std::size_t fc = 0;

  auto operator<=>(const SiteId&) const = default;
};

// Observes (and may overwrite) each FC layer's post-activation output during
// a forward pass. Used by output-domain fault injection and histogramming.
class OutputTap {
 public:
  virtual ~OutputTap() = default;
  // Return false to skip this site entirely (no callback for its values).
  virtual bool wants(const SiteId& site, Activation act) const = 0;
  virtual void on_output(const SiteId& site, Activation act, std::span<float> values) = 0;
};

struct CouplingResult {
  std::vector<float> y;
  float log_det = 0.0f;
};

std::vector<float> net_forward(const FcNet& net, std::span<const float> input,
                               OutputTap* tap = nullptr, std::size_t coupling = 0,
                               NetKind kind = NetKind::Scale);

CouplingResult coupling_forward(const CouplingLayer& layer, std::span<const float> x,
                                OutputTap* tap = nullptr, std::size_t coupling_index = 0);
std::vector<float> coupling_inverse(const CouplingLayer& layer, std::span<const float> y);

struct FlowResult {
  std::vector<float> z;
  float log_det = 0.0f;
};

FlowResult flow_forward(const ModelState& model, std::span<const float> x, OutputTap* tap = nullptr);
std::vector<float> flow_inverse(const ModelState& model, std::span<const float> z);

// -(d/2) log(2 pi) - |z|^2 / 2, accumulated in binary32.
float standard_normal_log_density(std::span<const float> z);

// log N(f(x); 0, I) + log|det df/dx|. Non-finite results are returned as-is.
float log_prob(const ModelState& model, std::span<const float> x, OutputTap* tap = nullptr);

enum class Label : std::uint8_t { Nominal = 0, Anomalous = 1 };
enum class Prediction : std::uint8_t { Nominal = 0, Anomalous = 1, Due = 2 };

std::string_view to_string(Prediction p) noexcept;

// Nominal iff score >= threshold; Due for NaN or +/-Inf scores.
Prediction classify_score(float score, float threshold) noexcept;
Prediction classify(const ModelState& model, std::span<const float> x);

inline bool matches(Prediction p, Label l) noexcept {
  return static_cast<std::uint8_t>(p) == static_cast<std::uint8_t>(l);
}

// Nearest-rank lower percentile: sorted[ceil(p/100 * n) - 1] (index 0 for p = 0).
float percentile_threshold(std::vector<float> scores, double percentile);

}  // namespace nvpfi
