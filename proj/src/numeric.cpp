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

#include "nvpfi/numeric.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "nvpfi/errors.hpp"

namespace nvpfi {

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ConfigError("matrix data length " + std::to_string(data_.size()) + " != " +
                      std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0f;
  return m;
}

bool Matrix::operator==(const Matrix& other) const noexcept {
  if (rows_ != other.rows_ || cols_ != other.cols_) return false;
  // Bitwise: NaN payloads and signed zeros matter for fault bookkeeping.
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (float_bits(data_[i]) != float_bits(other.data_[i])) return false;
  }
  return true;
}

std::string_view to_string(Activation act) noexcept {
  switch (act) {
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Linear: return "linear";
  }
  return "?";
}

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::ReLU;
  if (name == "tanh") return Activation::Tanh;
  if (name == "linear") return Activation::Linear;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

float activate(Activation act, float v) noexcept {
  switch (act) {
    case Activation::ReLU: return (v < 0.0f) ? 0.0f : v;  // NaN compares false: kept
    case Activation::Tanh: return std::tanh(v);
    case Activation::Linear: return v;
  }
  return v;
}

void fc_forward_into(const Matrix& weights, std::span<const float> bias,
                     std::span<const float> input, Activation act, std::span<float> out) {
  if (weights.cols() != input.size() || weights.rows() != bias.size() ||
      out.size() != weights.rows()) {
    throw ConfigError("fc_forward: weights " + std::to_string(weights.rows()) + "x" +
                      std::to_string(weights.cols()) + ", bias " + std::to_string(bias.size()) +
                      ", input " + std::to_string(input.size()));
  }
  const auto w = weights.data();
  const std::size_t cols = weights.cols();
  for (std::size_t i = 0; i < weights.rows(); ++i) {
    const float* row = w.data() + i * cols;
    float acc = 0.0f;
    for (std::size_t j = 0; j < cols; ++j) acc += row[j] * input[j];
    out[i] = activate(act, acc + bias[i]);
  }
}

std::vector<float> fc_forward(const Matrix& weights, std::span<const float> bias,
                              std::span<const float> input, Activation act) {
  std::vector<float> out(weights.rows());
  fc_forward_into(weights, bias, input, act, out);
  return out;
}

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

RandomStream::RandomStream(std::uint64_t base_seed) : state_(mix64(base_seed)) {}

RandomStream& RandomStream::fold(std::uint64_t label) {
  state_ = mix64(state_ ^ mix64(label + kGolden));
  origin_.push_back(label);
  return *this;
}

RandomStream RandomStream::child(std::uint64_t label) const {
  RandomStream copy = *this;
  copy.fold(label);
  return copy;
}

std::uint64_t RandomStream::next_u64() noexcept {
  state_ += kGolden;
  return mix64(state_);
}

double RandomStream::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RandomStream::below(std::uint64_t bound) noexcept {
  // Lemire's nearly-divisionless method with rejection.
  unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(next_u64()) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

float RandomStream::gaussian(float mean, float stddev) noexcept {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double z = radius * std::cos(2.0 * std::numbers::pi * u2);
  return static_cast<float>(static_cast<double>(mean) + static_cast<double>(stddev) * z);
}

RandomStream derive_stream(std::uint64_t base_seed, std::span<const std::uint64_t> labels) {
  RandomStream s(base_seed);
  for (auto label : labels) s.fold(label);
  return s;
}

RandomStream derive_stream(std::uint64_t base_seed, std::initializer_list<std::uint64_t> labels) {
  return derive_stream(base_seed, std::span<const std::uint64_t>(labels.begin(), labels.size()));
}

}  // namespace nvpfi
