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

#include "nvpfi/model_io.hpp"

#include <openssl/sha.h>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "nvpfi/errors.hpp"

namespace nvpfi {

namespace {

constexpr char kMagic[5] = {'R', 'N', 'V', 'P', '1'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(float_bits(v)); }
  void floats(std::span<const float> vs) {
    for (float v : vs) f32(v);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t offset() const noexcept { return pos_; }

  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) {
      throw LoadError(std::string("truncated weights file: missing ") + what, in_.size());
    }
  }
  std::uint8_t u8(const char* what) {
    need(1, what);
    return in_[pos_++];
  }
  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in_[pos_++]) << (8 * i);
    return v;
  }
  float f32(const char* what) { return bits_float(u32(what)); }
  void floats(std::span<float> out, const char* what) {
    for (float& v : out) v = f32(what);
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

// Visits every weight matrix and bias vector in canonical file order.
template <typename Model, typename Fn>
void for_each_array(Model& model, Fn&& fn) {
  for (auto& layer : model.layers) {
    for (NetKind kind : {NetKind::Scale, NetKind::Translation}) {
      for (auto& fc : layer.net(kind)) {
        fn(fc.weights.data());
        fn(std::span(fc.bias));
      }
    }
  }
}

}  // namespace

std::size_t parameter_count(const ModelDefinition& def) {
  def.validate();
  const std::size_t half = def.input_dim / 2;
  std::size_t total = 0;
  for (std::size_t c = 0; c < def.n_coupling; ++c) {
    const std::size_t in = (c % 2 == 0) ? half : def.input_dim - half;
    const std::size_t out = def.input_dim - in;
    std::size_t per_net = 0;
    for (std::size_t k = 0; k < def.fc_depth; ++k) {
      const std::size_t rows = (k + 1 == def.fc_depth) ? out : def.units;
      const std::size_t cols = (k == 0) ? in : def.units;
      per_net += rows * cols + rows;
    }
    total += 2 * per_net;
  }
  return total;
}

std::vector<std::uint8_t> encode_model(const ModelState& model) {
  validate_structure(model);
  const auto& def = model.definition;
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(static_cast<std::uint32_t>(def.input_dim));
  w.u32(static_cast<std::uint32_t>(def.n_coupling));
  w.u32(static_cast<std::uint32_t>(def.fc_depth));
  w.u32(static_cast<std::uint32_t>(def.units));
  w.u8(static_cast<std::uint8_t>(def.mask_scheme));
  w.u8(model.threshold ? 1 : 0);
  w.u16(0);
  w.f32(model.threshold.value_or(0.0f));
  w.u64(static_cast<std::uint64_t>(parameter_count(def)) * 4);
  for_each_array(model, [&](std::span<const float> values) { w.floats(values); });
  return w.take();
}

ModelState decode_model(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(sizeof kMagic, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw LoadError("bad magic, not an RNVP file", 0);
  if (bytes[4] != static_cast<std::uint8_t>(kMagic[4])) {
    throw LoadError("unsupported RNVP format version '" + std::string(1, static_cast<char>(bytes[4])) + "'", 4);
  }
  for (std::size_t i = 0; i < sizeof kMagic; ++i) r.u8("magic");

  ModelDefinition def;
  def.input_dim = r.u32("input_dim");
  def.n_coupling = r.u32("n_coupling");
  def.fc_depth = r.u32("fc_depth");
  def.units = r.u32("units");
  for (std::size_t v : {def.input_dim, def.n_coupling, def.fc_depth, def.units}) {
    if (v > (1u << 16)) throw LoadError("implausible header dimension " + std::to_string(v), 5);
  }
  const std::size_t scheme_offset = r.offset();
  const std::uint8_t scheme = r.u8("mask_scheme");
  if (scheme != 0) throw LoadError("unknown mask scheme " + std::to_string(scheme), scheme_offset);
  def.mask_scheme = MaskScheme::AlternatingHalves;
  const std::size_t flag_offset = r.offset();
  const std::uint8_t has_threshold = r.u8("has_threshold");
  if (has_threshold > 1) throw LoadError("bad threshold flag", flag_offset);
  const std::size_t reserved_offset = r.offset();
  if (r.u16("reserved") != 0) throw LoadError("reserved header bytes are not zero", reserved_offset);
  const float threshold = r.f32("threshold");
  const std::size_t size_offset = r.offset();
  const std::uint64_t declared = r.u64("payload size");

  try {
    def.validate();
  } catch (const ConfigError& e) {
    throw LoadError(std::string("invalid header: ") + e.what(), 5);
  }
  const std::uint64_t expected = static_cast<std::uint64_t>(parameter_count(def)) * 4;
  if (declared != expected) {
    throw LoadError("declared payload size " + std::to_string(declared) +
                        " does not match the header shape (" + std::to_string(expected) + ")",
                    size_offset);
  }
  const std::size_t available = bytes.size() - r.offset();
  if (available > declared) {
    throw LoadError("file is longer than the declared payload (" + std::to_string(bytes.size()) +
                        " bytes)",
                    r.offset() + static_cast<std::size_t>(declared));
  }
  if (available < declared) {
    throw LoadError("truncated weights file: payload needs " + std::to_string(declared) +
                        " bytes, " + std::to_string(available) + " present",
                    bytes.size());
  }

  ModelState model = make_identity_model(def);
  if (has_threshold) model.threshold = threshold;
  for_each_array(model, [&](std::span<float> values) { r.floats(values, "payload"); });
  return model;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string(), 0);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

void save_model(const ModelState& model, const std::filesystem::path& path) {
  write_file_bytes(path, encode_model(model));
}

ModelState load_model(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return decode_model(bytes);
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(bytes.data(), bytes.size(), digest);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * SHA256_DIGEST_LENGTH);
  for (unsigned char c : digest) {
    out.push_back(kHex[c >> 4]);
    out.push_back(kHex[c & 0xF]);
  }
  return out;
}

std::string model_digest(const ModelState& model) { return sha256_hex(encode_model(model)); }

// ---------------------------------------------------------------------------
// Dataset CSV

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::string format_float(float v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
  return buf;
}

}  // namespace

Dataset parse_dataset(const std::string& text) {
  Dataset data;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (!header_seen) {
      if (cells.size() < 3 || cells[0] != "sample_id" || cells[1] != "label") {
        throw LoadError("dataset header must start with sample_id,label and name features",
                        line_no);
      }
      for (std::size_t i = 2; i < cells.size(); ++i) data.feature_names.emplace_back(cells[i]);
      header_seen = true;
      continue;
    }
    if (cells.size() != data.dim() + 2) {
      throw LoadError("row has " + std::to_string(cells.size()) + " columns, expected " +
                          std::to_string(data.dim() + 2),
                      line_no);
    }
    std::int64_t id = 0;
    auto [p1, e1] = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), id);
    if (e1 != std::errc() || p1 != cells[0].data() + cells[0].size()) {
      throw LoadError("bad sample_id", line_no);
    }
    if (cells[1] != "0" && cells[1] != "1") throw LoadError("label must be 0 or 1", line_no);
    data.ids.push_back(id);
    data.labels.push_back(cells[1] == "0" ? Label::Nominal : Label::Anomalous);
    for (std::size_t i = 2; i < cells.size(); ++i) {
      float v = 0.0f;
      auto [p, e] = std::from_chars(cells[i].data(), cells[i].data() + cells[i].size(), v);
      if (e != std::errc() || p != cells[i].data() + cells[i].size()) {
        throw LoadError("bad feature value '" + std::string(cells[i]) + "'", line_no);
      }
      if (!std::isfinite(v)) throw LoadError("non-finite feature value", line_no);
      data.features.push_back(v);
    }
  }
  if (!header_seen) throw LoadError("empty dataset file", 0);
  return data;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string(), 0);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str());
}

std::string format_dataset(const Dataset& data) {
  std::string out = "sample_id,label";
  for (const auto& name : data.feature_names) out += "," + name;
  out += "\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    out += std::to_string(data.ids[i]);
    out += data.labels[i] == Label::Nominal ? ",0" : ",1";
    for (float v : data.sample(i)) {
      out += ",";
      out += format_float(v);
    }
    out += "\n";
  }
  return out;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  const std::string text = format_dataset(data);
  write_file_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// ---------------------------------------------------------------------------
// Synthetic surrogate data

std::string_view to_string(AnomalyKind kind) noexcept {
  switch (kind) {
    case AnomalyKind::BiasShift: return "bias-shift";
    case AnomalyKind::StuckAt: return "stuck-at";
    case AnomalyKind::NoiseBurst: return "noise-burst";
  }
  return "?";
}

AnomalyKind parse_anomaly_kind(std::string_view text) {
  if (text == "bias-shift") return AnomalyKind::BiasShift;
  if (text == "stuck-at") return AnomalyKind::StuckAt;
  if (text == "noise-burst") return AnomalyKind::NoiseBurst;
  throw ConfigError("unknown anomaly kind '" + std::string(text) +
                    "' (bias-shift|stuck-at|noise-burst)");
}

void SyntheticSpec::validate() const {
  if (n_channels < 1 || window_len < 1) throw ConfigError("channels and window must be >= 1");
  if (n_channels * window_len < 2) throw ConfigError("a window needs at least two features");
  if (!(magnitude > 0.0) || !std::isfinite(magnitude)) throw ConfigError("magnitude must be > 0");
}

namespace {

struct ChannelParams {
  double phi;
  double mean;
  double scale;
};

constexpr std::uint64_t kParamsLabel = 0x70617261ULL;   // "para"
constexpr std::uint64_t kSampleLabel = 0x73616d70ULL;   // "samp"

std::vector<float> draw_window(const SyntheticSpec& spec, const std::vector<ChannelParams>& params,
                               RandomStream& rng, bool anomalous) {
  const std::size_t C = spec.n_channels;
  const std::size_t T = spec.window_len;
  std::vector<double> latent(C * T);
  for (std::size_t c = 0; c < C; ++c) {
    const double phi = params[c].phi;
    const double innov = std::sqrt(1.0 - phi * phi);
    double a = rng.gaussian(0.0f, 1.0f);  // stationary start
    for (std::size_t t = 0; t < T; ++t) {
      if (t > 0) a = phi * a + innov * rng.gaussian(0.0f, 1.0f);
      latent[t * C + c] = a;
    }
  }
  std::vector<double> values(C * T);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t c = 0; c < C; ++c) {
      values[t * C + c] = params[c].mean + params[c].scale * latent[t * C + c];
    }
  }
  if (anomalous) {
    const auto ch = static_cast<std::size_t>(rng.below(C));
    const double sigma = params[ch].scale;
    switch (spec.anomaly_kind) {
      case AnomalyKind::BiasShift:
        for (std::size_t t = 0; t < T; ++t) values[t * C + ch] += spec.magnitude * sigma;
        break;
      case AnomalyKind::StuckAt:
        for (std::size_t t = 0; t < T; ++t) {
          values[t * C + ch] = params[ch].mean + spec.magnitude * sigma;
        }
        break;
      case AnomalyKind::NoiseBurst: {
        const std::size_t span = (T + 1) / 2;
        const auto start = static_cast<std::size_t>(rng.below(T - span + 1));
        for (std::size_t t = start; t < start + span; ++t) {
          values[t * C + ch] += spec.magnitude * sigma * rng.gaussian(0.0f, 1.0f);
        }
        break;
      }
    }
  }
  std::vector<float> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<float>(values[i]);
  return out;
}

}  // namespace

SyntheticSplits generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  RandomStream prng = derive_stream(spec.seed, {kParamsLabel});
  std::vector<ChannelParams> params(spec.n_channels);
  for (auto& p : params) {
    p.phi = 0.6 + 0.35 * prng.uniform();
    p.mean = 2.0 * prng.uniform() - 1.0;
    p.scale = 0.5 + prng.uniform();
  }

  std::vector<std::string> names;
  for (std::size_t t = 0; t < spec.window_len; ++t) {
    for (std::size_t c = 0; c < spec.n_channels; ++c) {
      names.push_back("t" + std::to_string(t) + "_c" + std::to_string(c));
    }
  }

  SyntheticSplits splits;
  Dataset* parts[3] = {&splits.train, &splits.val, &splits.test};
  for (auto* d : parts) d->feature_names = names;

  // Stratified: each label's count is divided as evenly as possible, with the
  // remainder going to the earlier splits.
  auto share = [](std::size_t total, std::size_t k) { return total / 3 + (k < total % 3 ? 1 : 0); };
  std::int64_t next_id = 0;
  std::uint64_t nominal_index = 0;
  std::uint64_t anomalous_index = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    Dataset& d = *parts[k];
    for (std::size_t i = 0; i < share(spec.n_nominal, k); ++i) {
      RandomStream rng = derive_stream(spec.seed, {kSampleLabel, 0, nominal_index++});
      const auto w = draw_window(spec, params, rng, false);
      d.ids.push_back(next_id++);
      d.labels.push_back(Label::Nominal);
      d.features.insert(d.features.end(), w.begin(), w.end());
    }
    for (std::size_t i = 0; i < share(spec.n_anomalous, k); ++i) {
      RandomStream rng = derive_stream(spec.seed, {kSampleLabel, 1, anomalous_index++});
      const auto w = draw_window(spec, params, rng, true);
      d.ids.push_back(next_id++);
      d.labels.push_back(Label::Anomalous);
      d.features.insert(d.features.end(), w.begin(), w.end());
    }
  }
  return splits;
}

void save_splits(const SyntheticSplits& splits, const std::string& prefix) {
  save_dataset(splits.train, prefix + "_train.csv");
  save_dataset(splits.val, prefix + "_val.csv");
  save_dataset(splits.test, prefix + "_test.csv");
}

std::vector<GridEntry> build_model_grid(const ModelDefinition& base, std::uint64_t seed) {
  std::vector<GridEntry> grid;
  for (std::size_t c : {4, 6}) {
    for (std::size_t d : {3, 4, 5}) {
      for (std::size_t u : {32, 48, 64}) {
        GridEntry e;
        e.definition = base;
        e.definition.n_coupling = c;
        e.definition.fc_depth = d;
        e.definition.units = u;
        e.definition.validate(true);
        e.id = e.definition.id();
        e.init_seed = derive_stream(seed, {fnv1a64(e.id)}).next_u64();
        grid.push_back(std::move(e));
      }
    }
  }
  return grid;
}

}  // namespace nvpfi
