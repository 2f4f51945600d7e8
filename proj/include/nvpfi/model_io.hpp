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

// Persistence for models and datasets.
//
// Weights file ("RNVP1"), all integers and floats little-endian:
//
//   offset  size  field
//   0       5     magic "RNVP1"
//   5       4     u32 input_dim
//   9       4     u32 n_coupling
//   13      4     u32 fc_depth
//   17      4     u32 units
//   21      1     u8  mask_scheme (0 = alternating halves)
//   22      1     u8  has_threshold
//   23      2     u16 reserved, must be 0
//   25      4     f32 threshold
//   29      8     u64 payload byte count
//   37      ...   payload: binary32 values in canonical order
//                 (coupling 0..n-1; scale net then translation net;
//                  FC 0..depth-1; weights row-major then bias)
//
// Dataset CSV: header "sample_id,label,<features...>", label 0 = nominal,
// 1 = anomalous; features are a flattened window (time-major, channel-minor).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nvpfi/realnvp.hpp"

namespace nvpfi {

inline constexpr std::size_t kWeightsHeaderSize = 37;

// Number of binary32 values stored for a definition.
std::size_t parameter_count(const ModelDefinition& def);

std::vector<std::uint8_t> encode_model(const ModelState& model);
ModelState decode_model(std::span<const std::uint8_t> bytes);

void save_model(const ModelState& model, const std::filesystem::path& path);
ModelState load_model(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Lower-case hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
// SHA-256 of the canonical encoding.
std::string model_digest(const ModelState& model);

struct Dataset {
  std::vector<std::int64_t> ids;
  std::vector<Label> labels;
  std::vector<std::string> feature_names;
  std::vector<float> features;  // row-major, size() x dim()

  std::size_t size() const noexcept { return ids.size(); }
  std::size_t dim() const noexcept { return feature_names.size(); }
  std::span<const float> sample(std::size_t i) const noexcept {
    return {features.data() + i * dim(), dim()};
  }
  bool operator==(const Dataset&) const = default;
};

// Rejects ragged rows, non-binary labels and NaN/Inf features.
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(const std::string& text);
std::string format_dataset(const Dataset& data);
void save_dataset(const Dataset& data, const std::filesystem::path& path);

enum class AnomalyKind : std::uint8_t { BiasShift, StuckAt, NoiseBurst };
std::string_view to_string(AnomalyKind kind) noexcept;
AnomalyKind parse_anomaly_kind(std::string_view text);

struct SyntheticSpec {
  std::size_t n_channels = 4;
  std::size_t window_len = 4;
  std::size_t n_nominal = 1500;
  std::size_t n_anomalous = 300;
  AnomalyKind anomaly_kind = AnomalyKind::BiasShift;
  double magnitude = 10.0;  // in units of the channel's stationary std
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Nominal windows come from independent stationary AR(1) channels whose
// coefficients, means and scales derive from the seed. Anomalous windows
// alter one channel according to the anomaly kind. Labels are stratified
// across three equal-size splits.
SyntheticSplits generate_synthetic(const SyntheticSpec& spec);

// Writes <prefix>_train.csv, <prefix>_val.csv and <prefix>_test.csv.
void save_splits(const SyntheticSplits& splits, const std::string& prefix);

struct GridEntry {
  std::string id;
  ModelDefinition definition;
  std::uint64_t init_seed = 0;
};

// {4,6} coupling x {3,4,5} depth x {32,48,64} units, ordered by id.
std::vector<GridEntry> build_model_grid(const ModelDefinition& base, std::uint64_t seed);

}  // namespace nvpfi
