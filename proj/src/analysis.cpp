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

// Result serialization, bit census, output histograms and plot tables.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <regex>
#include <tuple>

#include "nvpfi/campaign.hpp"
#include "nvpfi/errors.hpp"

namespace nvpfi {

std::string csv_field(const std::string& value) {
  if (value.find_first_of(",\"\r\n") == std::string::npos) return value;
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string format_rate(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

namespace {

std::string join_csv_line(const std::vector<std::string>& fields) {
  std::string line;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) line += ',';
    line += csv_field(fields[i]);
  }
  line += '\n';
  return line;
}

// Splits RFC 4180 text into records; accepts LF or CRLF line ends.
std::vector<std::vector<std::string>> split_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
      }
      record.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw ConfigError("results CSV: unterminated quoted field");
  if (any || !field.empty()) {
    record.push_back(std::move(field));
    records.push_back(std::move(record));
  }
  return records;
}

double parse_double(const std::string& s, const char* column, std::size_t line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("results CSV line " + std::to_string(line) + ": bad " + column + " '" + s +
                      "'");
  }
}

long long parse_int(const std::string& s, const char* column, std::size_t line) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("results CSV line " + std::to_string(line) + ": bad " + column + " '" + s +
                      "'");
  }
}

}  // namespace

const std::vector<std::string>& result_columns() {
  static const std::vector<std::string> kColumns = {
      "config_id", "model_id",  "seed_index", "exp_index",   "injection_domain",
      "type",      "mode",      "variable",   "amount",      "bit",
      "direction", "sign",      "activation", "method",      "sdc_rate",
      "due_rate",  "masked_rate", "n_samples", "baseline_accuracy"};
  return kColumns;
}

std::string format_results_csv(const std::vector<ResultRow>& rows) {
  std::string out = join_csv_line(result_columns());
  for (const auto& r : rows) {
    out += join_csv_line({r.config_id, r.model_id, std::to_string(r.seed_index),
                          std::to_string(r.exp_index), r.injection_domain, r.type, r.mode,
                          r.variable, r.amount, r.bit, r.direction, r.sign, r.activation,
                          r.method, format_rate(r.sdc_rate), format_rate(r.due_rate),
                          format_rate(r.masked_rate), std::to_string(r.n_samples),
                          format_rate(r.baseline_accuracy)});
  }
  return out;
}

std::vector<ResultRow> parse_results_csv(const std::string& text) {
  const auto records = split_csv(text);
  if (records.empty()) throw ConfigError("results CSV is empty");
  const auto& cols = result_columns();
  if (records.front() != cols) {
    std::string msg = "results CSV header mismatch; expected:";
    for (const auto& c : cols) msg += " " + c;
    throw ConfigError(msg);
  }
  std::vector<ResultRow> rows;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& f = records[i];
    const std::size_t line = i + 1;
    if (f.size() != cols.size()) {
      throw ConfigError("results CSV line " + std::to_string(line) + ": expected " +
                        std::to_string(cols.size()) + " fields, got " + std::to_string(f.size()));
    }
    ResultRow r;
    r.config_id = f[0];
    r.model_id = f[1];
    r.seed_index = parse_int(f[2], "seed_index", line);
    r.exp_index = parse_int(f[3], "exp_index", line);
    r.injection_domain = f[4];
    r.type = f[5];
    r.mode = f[6];
    r.variable = f[7];
    r.amount = f[8];
    r.bit = f[9];
    r.direction = f[10];
    r.sign = f[11];
    r.activation = f[12];
    r.method = f[13];
    r.sdc_rate = parse_double(f[14], "sdc_rate", line);
    r.due_rate = parse_double(f[15], "due_rate", line);
    r.masked_rate = parse_double(f[16], "masked_rate", line);
    const long long n = parse_int(f[17], "n_samples", line);
    if (n < 0) throw ConfigError("results CSV line " + std::to_string(line) + ": n_samples < 0");
    r.n_samples = static_cast<std::size_t>(n);
    r.baseline_accuracy = parse_double(f[18], "baseline_accuracy", line);
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Bit census

BitCensus bit_census(const ModelState& model) {
  BitCensus c;
  auto count = [](std::span<const float> values, std::array<std::uint64_t, 32>& counts) {
    for (float v : values) {
      const std::uint32_t bits = float_bits(v);
      for (int b = 0; b < 32; ++b) counts[b] += (bits >> b) & 1u;
    }
  };
  for (const auto& layer : model.layers) {
    for (const FcNet* net : {&layer.scale_net, &layer.translation_net}) {
      for (const auto& fc : *net) {
        count(fc.weights.data(), c.weights);
        count(fc.bias, c.biases);
        c.n_weights += fc.weights.data().size();
        c.n_biases += fc.bias.size();
      }
    }
  }
  return c;
}

std::string format_census_csv(const BitCensus& census) {
  std::string out = "bit,weights,biases,n_weights,n_biases\n";
  for (int b = 0; b < 32; ++b) {
    out += std::to_string(b) + "," + std::to_string(census.weights[b]) + "," +
           std::to_string(census.biases[b]) + "," + std::to_string(census.n_weights) + "," +
           std::to_string(census.n_biases) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Output histograms

std::size_t Histogram::bin_of(double v) const noexcept {
  const std::size_t n = counts.size();
  if (n == 0) return 0;
  if (!(v > lo)) return 0;
  if (!(v < hi)) return n - 1;
  const auto idx = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(n));
  return std::min(idx, n - 1);
}

namespace {

// Runs an optional injector, then records the final coupling layer's final
// scale and translation outputs.
class CaptureTap : public OutputTap {
 public:
  CaptureTap(const ModelState& model, OutputInjector* injector) : injector_(injector) {
    last_coupling_ = model.layers.size() - 1;
    scale_fc_ = model.layers.back().scale_net.size() - 1;
    translation_fc_ = model.layers.back().translation_net.size() - 1;
  }

  bool wants(const SiteId& site, Activation act) const override {
    return is_capture(site) || (injector_ && injector_->wants(site, act));
  }

  void on_output(const SiteId& site, Activation act, std::span<float> values) override {
    if (injector_ && injector_->wants(site, act)) injector_->on_output(site, act, values);
    if (!is_capture(site)) return;
    auto& dst = site.net == NetKind::Scale ? scale : translation;
    dst.insert(dst.end(), values.begin(), values.end());
  }

  std::vector<float> scale;
  std::vector<float> translation;

 private:
  bool is_capture(const SiteId& site) const noexcept {
    if (site.coupling != last_coupling_) return false;
    return site.fc == (site.net == NetKind::Scale ? scale_fc_ : translation_fc_);
  }

  OutputInjector* injector_;
  std::size_t last_coupling_ = 0;
  std::size_t scale_fc_ = 0;
  std::size_t translation_fc_ = 0;
};

Histogram fill_histogram(const std::vector<float>& values, double lo, double hi,
                         std::size_t bins) {
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(bins, 0);
  for (float v : values) {
    if (!std::isfinite(v)) {
      ++h.nonfinite;
      continue;
    }
    ++h.counts[h.bin_of(v)];
  }
  return h;
}

}  // namespace

OutputHistograms masked_output_histogram(const ModelState& model, const PlanVariant& plan,
                                         const Dataset& data, std::size_t bins,
                                         std::uint64_t seed) {
  if (bins < 2) throw ConfigError("histogram needs at least 2 bins");
  validate_structure(model);
  if (data.dim() != model.definition.input_dim) {
    throw ConfigError("dataset has " + std::to_string(data.dim()) + " features, model expects " +
                      std::to_string(model.definition.input_dim));
  }
  RandomStream stream = derive_stream(seed, {fnv1a64(canonical_plan_id(plan))});
  std::vector<float> scale, translation;
  if (const auto* sp = std::get_if<StateInjectionPlan>(&plan)) {
    sp->validate();
    auto [faulty, report] = inject_states(model, *sp, stream);
    CaptureTap tap(faulty, nullptr);
    for (std::size_t i = 0; i < data.size(); ++i) log_prob(faulty, data.sample(i), &tap);
    scale = std::move(tap.scale);
    translation = std::move(tap.translation);
  } else {
    const auto& op = std::get<OutputInjectionPlan>(plan);
    op.validate(model.definition.n_coupling);
    OutputInjector injector(model, op, stream);
    CaptureTap tap(model, &injector);
    for (std::size_t i = 0; i < data.size(); ++i) log_prob(model, data.sample(i), &tap);
    scale = std::move(tap.scale);
    translation = std::move(tap.translation);
  }

  OutputHistograms out;
  out.scale = fill_histogram(scale, -1.0, 1.0, bins);
  double lo = INFINITY, hi = -INFINITY;
  for (float v : translation) {
    if (!std::isfinite(v)) continue;
    lo = std::min(lo, static_cast<double>(v));
    hi = std::max(hi, static_cast<double>(v));
  }
  if (!(lo < hi)) {
    const double c = std::isfinite(lo) ? lo : 0.0;
    lo = c - 0.5;
    hi = c + 0.5;
  }
  out.translation = fill_histogram(translation, lo, hi, bins);
  return out;
}

std::string format_histogram_csv(const OutputHistograms& h) {
  std::string out = "net,bin,lo,hi,count\n";
  auto emit = [&](const char* name, const Histogram& hist) {
    const auto n = static_cast<double>(hist.counts.size());
    for (std::size_t b = 0; b < hist.counts.size(); ++b) {
      const double lo = hist.lo + (hist.hi - hist.lo) * static_cast<double>(b) / n;
      const double hi = hist.lo + (hist.hi - hist.lo) * static_cast<double>(b + 1) / n;
      out += std::string(name) + "," + std::to_string(b) + "," + format_rate(lo) + "," +
             format_rate(hi) + "," + std::to_string(hist.counts[b]) + "\n";
    }
    out += std::string(name) + ",nonfinite,,," + std::to_string(hist.nonfinite) + "\n";
  };
  emit("translation", h.translation);
  emit("scale", h.scale);
  return out;
}

// ---------------------------------------------------------------------------
// Plot tables

PlotKind parse_plot_kind(std::string_view text) {
  if (text == "radial") return PlotKind::Radial;
  if (text == "parallel") return PlotKind::ParallelCoords;
  throw ConfigError("unknown plot kind '" + std::string(text) + "' (radial|parallel)");
}

PlotTable emit_plot_data(const std::vector<ResultRow>& rows, PlotKind kind) {
  if (rows.empty()) throw ConfigError("plot data needs at least one result row");
  PlotTable t;
  if (kind == PlotKind::ParallelCoords) {
    t.header = {"type", "mode",       "variable", "amount", "bit",
                "direction", "sign", "activation", "method", "sdc_rate"};
    for (const auto& r : rows) {
      if (r.is_aggregate()) continue;
      t.rows.push_back({r.type, r.mode, r.variable, r.amount, r.bit, r.direction, r.sign,
                        r.activation, r.method, format_rate(r.sdc_rate)});
    }
    return t;
  }

  t.header = {"injection_domain", "type", "variable", "model_id", "label", "n_coupling",
              "sdc_rate"};
  using Key = std::tuple<std::string, std::string, std::string, std::string>;
  std::map<Key, std::vector<double>> groups;
  for (const auto& r : rows) {
    if (!r.is_aggregate()) continue;
    groups[{r.injection_domain, r.type, r.variable, r.model_id}].push_back(r.sdc_rate);
  }
  static const std::regex kGridId("C([0-9]+)D([0-9]+)U([0-9]+)");
  for (auto& [key, values] : groups) {
    const auto& [domain, type, variable, model_id] = key;
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    std::string label = model_id;
    std::string n_coupling;
    std::smatch m;
    if (std::regex_match(model_id, m, kGridId)) {
      label = "D" + m[2].str() + "U" + m[3].str();
      n_coupling = m[1].str();
    }
    t.rows.push_back({domain, type, variable, model_id, label, n_coupling,
                      format_rate(sum / static_cast<double>(values.size()))});
  }
  return t;
}

std::string format_csv(const PlotTable& table) {
  std::string out = join_csv_line(table.header);
  for (const auto& row : table.rows) out += join_csv_line(row);
  return out;
}

}  // namespace nvpfi
