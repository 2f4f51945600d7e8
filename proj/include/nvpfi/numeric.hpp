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

#include <bit>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>
#include <vector>

namespace nvpfi {

inline std::uint32_t float_bits(float v) noexcept { return std::bit_cast<std::uint32_t>(v); }
inline float bits_float(std::uint32_t b) noexcept { return std::bit_cast<float>(b); }

// Dense row-major binary32 matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  float operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  float& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  bool operator==(const Matrix& other) const noexcept;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

enum class Activation : std::uint8_t { ReLU, Tanh, Linear };

std::string_view to_string(Activation act) noexcept;
Activation parse_activation(std::string_view name);

// NaN is passed through unchanged by every activation, including ReLU.
float activate(Activation act, float v) noexcept;

// out[i] = act(sum_j W[i,j] * in[j] + b[i]) in binary32, j ascending.
std::vector<float> fc_forward(const Matrix& weights, std::span<const float> bias,
                              std::span<const float> input, Activation act);

// Same as fc_forward but writes into a caller-sized buffer (hot path).
void fc_forward_into(const Matrix& weights, std::span<const float> bias,
                     std::span<const float> input, Activation act, std::span<float> out);

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t z) noexcept;

// 64-bit FNV-1a; used to turn textual ids into stream labels.
std::uint64_t fnv1a64(std::string_view text) noexcept;

// Reproducible splitmix64 stream. Two streams derived from the same base seed
// and the same label sequence produce the same draws on every platform.
class RandomStream {
 public:
  RandomStream() = default;
  explicit RandomStream(std::uint64_t base_seed);

  // Folds one label into the state, extending the origin.
  RandomStream& fold(std::uint64_t label);
  // Copy of this stream with `label` folded in.
  RandomStream child(std::uint64_t label) const;

  std::uint64_t next_u64() noexcept;
  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  // Uniform integer in [0, bound); bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;
  // Box-Muller on two uniform draws, computed in double and rounded to binary32.
  float gaussian(float mean, float stddev) noexcept;

  std::uint64_t state() const noexcept { return state_; }
  const std::vector<std::uint64_t>& origin() const noexcept { return origin_; }

 private:
  std::uint64_t state_ = 0;
  std::vector<std::uint64_t> origin_;
};

RandomStream derive_stream(std::uint64_t base_seed, std::span<const std::uint64_t> labels);
RandomStream derive_stream(std::uint64_t base_seed, std::initializer_list<std::uint64_t> labels);

}  // namespace nvpfi
