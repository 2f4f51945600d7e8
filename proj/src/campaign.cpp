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

#include "nvpfi/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "nvpfi/errors.hpp"

namespace nvpfi {

using nlohmann::json;

// ---------------------------------------------------------------------------
// JSON helpers

namespace {

// Scalars are accepted where a list is expected and treated as one value.
std::vector<json> as_list(const json& v, const std::string& key) {
  if (v.is_array()) {
    if (v.empty()) throw ConfigError("sweep axis '" + key + "' is empty");
    return {v.begin(), v.end()};
  }
  return {v};
}

std::string get_string(const json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError("'" + key + "' must be a string");
  return v.get<std::string>();
}

double get_number(const json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError("'" + key + "' must be a number");
  return v.get<double>();
}

std::int64_t get_integer(const json& v, const std::string& key) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    throw ConfigError("'" + key + "' must be an integer");
  }
  return v.get<std::int64_t>();
}

BitSelector parse_bit(const json& v) {
  if (v.is_string() && v.get<std::string>() == "random") return BitSelector::random();
  const auto b = get_integer(v, "bit");
  if (b < 0 || b > 31) throw ConfigError("bit " + std::to_string(b) + " outside [0, 31]");
  return BitSelector::fixed(static_cast<int>(b));
}

OutputModeSpec parse_output_mode(const json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "all") return {OutputMode::AllLayers, 0};
    if (s == "random") return {OutputMode::RandomLayer, 0};
    throw ConfigError("output mode must be \"all\", \"random\" or a coupling index");
  }
  const auto idx = get_integer(v, "mode");
  if (idx < 0) throw ConfigError("output mode index must be >= 0");
  return {OutputMode::SpecificLayer, static_cast<std::size_t>(idx)};
}

void check_type(const std::string& t) {
  if (t != "zeros" && t != "random" && t != "bitflip") {
    throw ConfigError("unknown fault type '" + t + "' (zeros|random|bitflip)");
  }
}

RandomFault parse_random(const json& v, RandomFault base) {
  if (!v.is_object()) throw ConfigError("'random' must be an object");
  for (const auto& [key, val] : v.items()) {
    if (key == "mean") {
      base.mean = static_cast<float>(get_number(val, key));
    } else if (key == "std") {
      base.stddev = static_cast<float>(get_number(val, key));
    } else if (key == "additive") {
      if (!val.is_boolean()) throw ConfigError("'additive' must be a boolean");
      base.additive = val.get<bool>();
    } else {
      throw ConfigError("unknown key 'random." + key + "'");
    }
  }
  validate_fault(base);
  return base;
}

template <typename T, typename Parse>
void read_axis(const json& sweep, const char* key, std::vector<T>& out, Parse parse) {
  if (!sweep.contains(key)) return;
  out.clear();
  for (const auto& v : as_list(sweep.at(key), key)) out.push_back(parse(v));
}

StateSweep parse_state_sweep(const json& j) {
  if (!j.is_object()) throw ConfigError("'state_sweep' must be an object");
  static const char* kKeys[] = {"type", "mode", "variable", "amount", "bit", "direction", "sign"};
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) { return key == k; }) ==
        std::end(kKeys)) {
      throw ConfigError("unknown key 'state_sweep." + key + "'");
    }
  }
  StateSweep s;
  if (!j.contains("type") || !j.contains("amount")) {
    throw ConfigError("state_sweep needs 'type' and 'amount'");
  }
  read_axis(j, "type", s.type, [](const json& v) {
    auto t = get_string(v, "type");
    check_type(t);
    return t;
  });
  read_axis(j, "mode", s.mode, [](const json& v) { return static_cast<int>(get_integer(v, "mode")); });
  read_axis(j, "variable", s.variable,
            [](const json& v) { return parse_state_variable(get_string(v, "variable")); });
  read_axis(j, "amount", s.amount, [](const json& v) { return get_number(v, "amount"); });
  read_axis(j, "bit", s.bit, parse_bit);
  read_axis(j, "direction", s.direction,
            [](const json& v) { return parse_direction(get_string(v, "direction")); });
  read_axis(j, "sign", s.sign,
            [](const json& v) { return parse_sign_filter(get_string(v, "sign")); });
  return s;
}

OutputSweep parse_output_sweep(const json& j) {
  if (!j.is_object()) throw ConfigError("'output_sweep' must be an object");
  static const char* kKeys[] = {"type",   "mode",   "variable",  "activation", "method",
                                "amount", "bit",    "direction", "sign"};
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) { return key == k; }) ==
        std::end(kKeys)) {
      throw ConfigError("unknown key 'output_sweep." + key + "'");
    }
  }
  OutputSweep s;
  if (!j.contains("type") || !j.contains("amount")) {
    throw ConfigError("output_sweep needs 'type' and 'amount'");
  }
  read_axis(j, "type", s.type, [](const json& v) {
    auto t = get_string(v, "type");
    check_type(t);
    return t;
  });
  read_axis(j, "mode", s.mode, parse_output_mode);
  read_axis(j, "variable", s.variable,
            [](const json& v) { return parse_output_variable(get_string(v, "variable")); });
  read_axis(j, "activation", s.activation,
            [](const json& v) { return parse_activation_filter(get_string(v, "activation")); });
  read_axis(j, "method", s.method,
            [](const json& v) { return parse_output_method(get_string(v, "method")); });
  read_axis(j, "amount", s.amount, [](const json& v) { return get_number(v, "amount"); });
  read_axis(j, "bit", s.bit, parse_bit);
  read_axis(j, "direction", s.direction,
            [](const json& v) { return parse_direction(get_string(v, "direction")); });
  read_axis(j, "sign", s.sign,
            [](const json& v) { return parse_sign_filter(get_string(v, "sign")); });
  return s;
}

json parse_json_text(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(what) + " is not valid JSON: " + e.what());
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) path = base / path;
  return path;
}

std::string format_amount(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

FaultType make_fault(const std::string& type, const RandomFault& random, BitSelector bit,
                     Direction dir, SignFilter sign) {
  if (type == "zeros") return ZerosFault{};
  if (type == "random") return random;
  return BitFlipFault{bit, dir, sign};
}

}  // namespace

CampaignConfig parse_campaign_config(const std::string& json_text,
                                     const std::filesystem::path& base_dir) {
  const json j = parse_json_text(json_text, "campaign config");
  if (!j.is_object()) throw ConfigError("campaign config must be a JSON object");
  static const char* kKeys[] = {"base_seed", "n_exps",      "n_seeds", "models",
                                "model_grid", "dataset",    "metric",  "due_policy",
                                "random",    "state_sweep", "output_sweep"};
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) { return key == k; }) ==
        std::end(kKeys)) {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
  CampaignConfig c;
  if (j.contains("base_seed")) {
    const auto& v = j.at("base_seed");
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw ConfigError("'base_seed' must be a non-negative integer");
    }
    c.base_seed = v.get<std::uint64_t>();
  }
  if (j.contains("n_exps")) {
    const auto n = get_integer(j.at("n_exps"), "n_exps");
    if (n < 1) throw ConfigError("n_exps must be >= 1");
    c.n_exps = static_cast<std::size_t>(n);
  }
  if (j.contains("n_seeds")) {
    const auto n = get_integer(j.at("n_seeds"), "n_seeds");
    if (n < 1) throw ConfigError("n_seeds must be >= 1");
    c.n_seeds = static_cast<std::size_t>(n);
  }
  if (j.contains("models") == j.contains("model_grid")) {
    throw ConfigError("config needs exactly one of 'models' or 'model_grid'");
  }
  if (j.contains("models")) {
    const auto& models = j.at("models");
    if (!models.is_array() || models.empty()) throw ConfigError("'models' must be a non-empty list");
    for (const auto& m : models) {
      ModelRef ref;
      if (m.is_string()) {
        ref.path = resolve(base_dir, m.get<std::string>());
        ref.id = ref.path.stem().string();
      } else if (m.is_object() && m.contains("path")) {
        ref.path = resolve(base_dir, get_string(m.at("path"), "path"));
        ref.id = m.contains("id") ? get_string(m.at("id"), "id") : ref.path.stem().string();
      } else {
        throw ConfigError("model entries must be a path or {\"id\", \"path\"}");
      }
      c.models.push_back(std::move(ref));
    }
  } else {
    const auto& g = j.at("model_grid");
    if (!g.is_object() || !g.contains("dir")) throw ConfigError("'model_grid' needs 'dir'");
    const auto dir = resolve(base_dir, get_string(g.at("dir"), "dir"));
    const std::string ext = g.contains("ext") ? get_string(g.at("ext"), "ext") : ".rnvp";
    ModelDefinition base;
    base.input_dim = 2;  // ids only; shapes come from the files
    for (const auto& e : build_model_grid(base, 0)) c.models.push_back({e.id, dir / (e.id + ext)});
  }
  {
    std::vector<std::string> ids;
    for (const auto& m : c.models) ids.push_back(m.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
      throw ConfigError("model ids must be unique");
    }
  }
  if (!j.contains("dataset")) throw ConfigError("config needs 'dataset'");
  c.dataset = resolve(base_dir, get_string(j.at("dataset"), "dataset"));
  if (j.contains("metric")) c.metric = parse_sdc_variant(get_string(j.at("metric"), "metric"));
  if (j.contains("due_policy")) {
    c.due_policy = parse_due_policy(get_string(j.at("due_policy"), "due_policy"));
  }
  if (j.contains("random")) c.random = parse_random(j.at("random"), c.random);
  if (j.contains("state_sweep")) c.state_sweep = parse_state_sweep(j.at("state_sweep"));
  if (j.contains("output_sweep")) c.output_sweep = parse_output_sweep(j.at("output_sweep"));
  if (!c.state_sweep && !c.output_sweep) {
    throw ConfigError("config needs a 'state_sweep' and/or an 'output_sweep'");
  }
  return c;
}

CampaignConfig load_campaign_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_campaign_config(buf.str(), path.parent_path());
}

std::string canonical_plan_id(const PlanVariant& plan) {
  std::string id;
  auto fault_part = [&](const FaultType& fault) {
    if (const auto* r = std::get_if<RandomFault>(&fault)) {
      id += "/mean=" + format_amount(r->mean) + "/std=" + format_amount(r->stddev);
      if (r->additive) id += "/additive";
    } else if (const auto* b = std::get_if<BitFlipFault>(&fault)) {
      id += "/bit=" + (b->bit.position ? std::to_string(*b->bit.position) : std::string("random"));
      id += "/direction=" + std::string(to_string(b->direction));
      id += "/sign=" + std::string(to_string(b->sign));
    }
  };
  if (const auto* s = std::get_if<StateInjectionPlan>(&plan)) {
    id = "state/type=" + std::string(fault_name(s->fault)) + "/mode=" + std::to_string(s->mode) +
         "/variable=" + std::string(to_string(s->variable)) + "/amount=" + format_amount(s->amount);
    fault_part(s->fault);
  } else {
    const auto& o = std::get<OutputInjectionPlan>(plan);
    id = "output/type=" + std::string(fault_name(o.fault)) + "/mode=" + o.mode_string() +
         "/variable=" + std::string(to_string(o.variable)) +
         "/activation=" + std::string(to_string(o.activation)) +
         "/method=" + std::string(to_string(o.method)) + "/amount=" + format_amount(o.amount);
    fault_part(o.fault);
  }
  return id;
}

std::vector<PlanPoint> expand_plans(const CampaignConfig& config) {
  std::vector<PlanPoint> points;
  std::vector<std::string> errors;
  auto add = [&](PlanVariant plan) {
    try {
      std::visit([](const auto& p) { p.validate(); }, plan);
      points.push_back({canonical_plan_id(plan), std::move(plan)});
    } catch (const ConfigError& e) {
      errors.push_back(canonical_plan_id(plan) + ": " + e.what());
    }
  };
  // Bit-flip axes collapse to a single placeholder for other fault types.
  auto fault_axis = [&](const std::string& type, const std::vector<BitSelector>& bits,
                        const std::vector<Direction>& dirs, const std::vector<SignFilter>& signs) {
    std::vector<FaultType> faults;
    if (type != "bitflip") {
      faults.push_back(make_fault(type, config.random, {}, Direction::Both, SignFilter::Both));
      return faults;
    }
    for (const auto& b : bits)
      for (auto d : dirs)
        for (auto s : signs) faults.push_back(make_fault(type, config.random, b, d, s));
    return faults;
  };

  if (const auto& s = config.state_sweep) {
    for (const auto& type : s->type)
      for (int mode : s->mode)
        for (auto var : s->variable)
          for (double amount : s->amount)
            for (const auto& fault : fault_axis(type, s->bit, s->direction, s->sign)) {
              add(StateInjectionPlan{mode, var, fault, amount});
            }
  }
  if (const auto& o = config.output_sweep) {
    for (const auto& type : o->type)
      for (const auto& mode : o->mode)
        for (auto var : o->variable)
          for (auto act : o->activation)
            for (auto method : o->method)
              for (double amount : o->amount)
                for (const auto& fault : fault_axis(type, o->bit, o->direction, o->sign)) {
                  OutputInjectionPlan p;
                  p.mode = mode.mode;
                  p.layer_index = mode.layer_index;
                  p.variable = var;
                  p.activation = act;
                  p.method = method;
                  p.fault = fault;
                  p.amount = amount;
                  add(p);
                }
  }
  std::vector<std::string> ids;
  for (const auto& p : points) ids.push_back(p.config_id);
  std::sort(ids.begin(), ids.end());
  for (std::size_t i = 1; i < ids.size(); ++i) {
    if (ids[i] == ids[i - 1]) errors.push_back(ids[i] + ": duplicate plan point");
  }
  if (!errors.empty()) {
    std::string msg = "invalid sweep (" + std::to_string(errors.size()) + " plan point(s) rejected):";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  if (points.empty()) throw ConfigError("sweep expands to no plan points");
  return points;
}

PlanVariant parse_plan_json(const std::string& json_text, const RandomFault& random) {
  const json j = parse_json_text(json_text, "plan");
  if (!j.is_object() || !j.contains("domain")) throw ConfigError("plan needs a 'domain'");
  const auto domain = get_string(j.at("domain"), "domain");
  json rest = j;
  rest.erase("domain");
  RandomFault rnd = random;
  if (rest.contains("random")) {
    rnd = parse_random(rest.at("random"), rnd);
    rest.erase("random");
  }
  for (const auto& [key, val] : rest.items()) {
    if (val.is_array()) throw ConfigError("plan field '" + key + "' must be a single value");
  }
  CampaignConfig tmp;
  tmp.random = rnd;
  if (domain == "state") {
    tmp.state_sweep = parse_state_sweep(rest);
  } else if (domain == "output") {
    tmp.output_sweep = parse_output_sweep(rest);
  } else {
    throw ConfigError("plan domain must be 'state' or 'output'");
  }
  auto points = expand_plans(tmp);
  return std::move(points.front().plan);
}

std::vector<std::string> model_ids(const CampaignConfig& config) {
  std::vector<std::string> ids;
  for (const auto& m : config.models) ids.push_back(m.id);
  return ids;
}

std::vector<ExperimentDescriptor> expand_grid(const CampaignConfig& config,
                                              const std::vector<PlanPoint>& plans) {
  if (config.n_exps < 1 || config.n_seeds < 1) throw ConfigError("n_exps and n_seeds must be >= 1");
  if (config.models.empty()) throw ConfigError("campaign has no models");
  std::vector<ExperimentDescriptor> out;
  out.reserve(plans.size() * config.models.size() * config.n_seeds * config.n_exps);
  for (std::size_t p = 0; p < plans.size(); ++p) {
    const std::uint64_t plan_hash = fnv1a64(plans[p].config_id);
    for (std::size_t m = 0; m < config.models.size(); ++m) {
      const std::uint64_t model_hash = fnv1a64(config.models[m].id);
      for (std::size_t s = 0; s < config.n_seeds; ++s) {
        for (std::size_t e = 0; e < config.n_exps; ++e) {
          out.push_back({p, m, s, e, {plan_hash, model_hash, s, e}});
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Execution

CampaignInputs load_campaign_inputs(const CampaignConfig& config) {
  CampaignInputs in;
  for (const auto& ref : config.models) {
    ModelState m;
    try {
      m = load_model(ref.path);
    } catch (const LoadError& e) {
      std::string what = e.what();
      what = what.substr(0, what.rfind(" (at offset"));
      throw LoadError("model '" + ref.id + "' (" + ref.path.string() + "): " + what, e.offset());
    }
    in.model_ids.push_back(ref.id);
    in.models.push_back(std::move(m));
  }
  in.dataset = load_dataset(config.dataset);
  return in;
}

namespace {

void fill_plan_fields(ResultRow& row, const PlanPoint& point) {
  row.config_id = point.config_id;
  auto fault_fields = [&](const FaultType& fault) {
    row.type = std::string(fault_name(fault));
    if (const auto* b = std::get_if<BitFlipFault>(&fault)) {
      row.bit = b->bit.position ? std::to_string(*b->bit.position) : "random";
      row.direction = std::string(to_string(b->direction));
      row.sign = std::string(to_string(b->sign));
    }
  };
  if (const auto* s = std::get_if<StateInjectionPlan>(&point.plan)) {
    row.injection_domain = "state";
    row.mode = std::to_string(s->mode);
    row.variable = std::string(to_string(s->variable));
    row.amount = format_amount(s->amount);
    fault_fields(s->fault);
  } else {
    const auto& o = std::get<OutputInjectionPlan>(point.plan);
    row.injection_domain = "output";
    row.mode = o.mode_string();
    row.variable = std::string(to_string(o.variable));
    row.activation = std::string(to_string(o.activation));
    row.method = std::string(to_string(o.method));
    row.amount = format_amount(o.amount);
    fault_fields(o.fault);
  }
}

struct ModelContext {
  Snapshot pristine;
  BaselineRecord baseline;
  std::vector<SampleId> eval_ids;
  std::vector<std::size_t> eval_rows;  // dataset row per eval id
  float threshold = 0.0f;
};

struct ExperimentResult {
  RateCounts counts;
  std::vector<std::string> audit;
};

std::string audit_prefix(const PlanPoint& plan, const std::string& model_id,
                         const ExperimentDescriptor& d) {
  return "{\"config_id\":" + json(plan.config_id).dump() + ",\"model_id\":" +
         json(model_id).dump() + ",\"seed_index\":" + std::to_string(d.seed_index) +
         ",\"exp_index\":" + std::to_string(d.exp_index) + ",";
}

ExperimentResult run_experiment(const CampaignConfig& config, const CampaignInputs& inputs,
                                const std::vector<PlanPoint>& plans,
                                const std::vector<ModelContext>& contexts,
                                const ExperimentDescriptor& d, const RunOptions& options,
                                ModelState& working) {
  const ModelContext& ctx = contexts[d.model_index];
  const PlanPoint& point = plans[d.plan_index];
  RandomStream stream = derive_stream(config.base_seed, std::span(d.stream_labels));

  working = restore(ctx.pristine);
  if (options.observer && options.observer->on_reset) options.observer->on_reset(d, working);

  InjectionReport report;
  InjectionReport* report_ptr = options.audit ? &report : nullptr;
  std::vector<Prediction> faulty(ctx.eval_ids.size());

  if (const auto* sp = std::get_if<StateInjectionPlan>(&point.plan)) {
    inject_states_inplace(working, *sp, stream, report_ptr);
    for (std::size_t i = 0; i < ctx.eval_rows.size(); ++i) {
      const float lp = log_prob(working, inputs.dataset.sample(ctx.eval_rows[i]));
      faulty[i] = classify_score(lp, ctx.threshold);
    }
  } else {
    const auto& op = std::get<OutputInjectionPlan>(point.plan);
    OutputInjector injector(working, op, stream, report_ptr);
    for (std::size_t i = 0; i < ctx.eval_rows.size(); ++i) {
      const std::size_t row = ctx.eval_rows[i];
      const float lp = injector.log_prob(inputs.dataset.sample(row), row);
      faulty[i] = classify_score(lp, ctx.threshold);
    }
  }
  if (options.observer && options.observer->on_finish) options.observer->on_finish(d, working);

  const auto outcome = make_outcome(ctx.baseline, ctx.eval_ids, faulty);
  ExperimentResult result;
  result.counts = sdc_rate_exp(ctx.baseline, outcome, config.due_policy).counts;
  if (options.audit) {
    const std::string prefix = audit_prefix(point, inputs.model_ids[d.model_index], d);
    for (const auto& rec : report.records) {
      auto line = to_json_line(rec);
      result.audit.push_back(prefix + line.substr(1));
    }
  }
  return result;
}

}  // namespace

CampaignResult run_campaign(const CampaignConfig& config, const CampaignInputs& inputs,
                            const RunOptions& options) {
  if (inputs.models.size() != config.models.size()) {
    throw ConfigError("campaign inputs do not match the configured models");
  }
  const auto plans = expand_plans(config);

  // Reject plan points that do not fit some model before running anything.
  std::vector<std::string> errors;
  for (const auto& p : plans) {
    if (const auto* o = std::get_if<OutputInjectionPlan>(&p.plan)) {
      for (std::size_t m = 0; m < inputs.models.size(); ++m) {
        try {
          o->validate(inputs.models[m].definition.n_coupling);
        } catch (const ConfigError& e) {
          errors.push_back(p.config_id + " on model " + inputs.model_ids[m] + ": " + e.what());
        }
      }
    }
  }
  if (!errors.empty()) {
    std::string msg = "invalid sweep for the configured models:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }

  const Dataset& data = inputs.dataset;
  if (data.size() == 0) throw ConfigError("dataset is empty");
  std::vector<BaselineRecord> baselines;
  std::vector<ModelContext> contexts(inputs.models.size());
  for (std::size_t m = 0; m < inputs.models.size(); ++m) {
    const ModelState& model = inputs.models[m];
    validate_structure(model);
    if (!model.threshold) throw ConfigError("model '" + inputs.model_ids[m] + "' has no threshold");
    if (model.definition.input_dim != data.dim()) {
      throw ConfigError("model '" + inputs.model_ids[m] + "' expects " +
                        std::to_string(model.definition.input_dim) + " features, dataset has " +
                        std::to_string(data.dim()));
    }
    std::vector<Prediction> preds(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      preds[i] = classify_score(log_prob(model, data.sample(i)), *model.threshold);
    }
    baselines.push_back(BaselineRecord::build(data.ids, preds, data.labels));
    contexts[m].pristine = snapshot(model);
    contexts[m].threshold = *model.threshold;
  }
  const auto eval_sets = build_correct_set(config.metric, baselines);
  for (std::size_t m = 0; m < contexts.size(); ++m) {
    contexts[m].baseline = std::move(baselines[m]);
    contexts[m].eval_ids = eval_sets[m];
    if (contexts[m].eval_ids.empty()) {
      throw MetricUndefined("model '" + inputs.model_ids[m] +
                            "' classifies no sample correctly; SDC rate undefined");
    }
    std::vector<std::pair<SampleId, std::size_t>> by_id;
    for (std::size_t i = 0; i < data.size(); ++i) by_id.emplace_back(data.ids[i], i);
    std::sort(by_id.begin(), by_id.end());
    for (SampleId id : contexts[m].eval_ids) {
      auto it = std::lower_bound(by_id.begin(), by_id.end(), std::make_pair(id, std::size_t{0}));
      contexts[m].eval_rows.push_back(it->second);
    }
  }

  const auto descriptors = expand_grid(config, plans);
  std::vector<ExperimentResult> results(descriptors.size());

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    ModelState working;
    while (!failed.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= descriptors.size()) break;
      try {
        results[i] = run_experiment(config, inputs, plans, contexts, descriptors[i], options,
                                    working);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        failed.store(true);
      }
    }
  };
  const std::size_t n_workers =
      std::max<std::size_t>(1, std::min(options.workers, descriptors.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  CampaignResult out;
  out.experiments = descriptors.size();
  const std::size_t per_point = config.n_seeds * config.n_exps;
  for (std::size_t start = 0; start < descriptors.size(); start += per_point) {
    const auto& d0 = descriptors[start];
    const PlanPoint& point = plans[d0.plan_index];
    const ModelContext& ctx = contexts[d0.model_index];
    std::vector<RateCounts> counts;
    for (std::size_t k = start; k < start + per_point; ++k) {
      const auto& d = descriptors[k];
      const auto& c = results[k].counts;
      ResultRow row;
      fill_plan_fields(row, point);
      row.model_id = inputs.model_ids[d.model_index];
      row.seed_index = static_cast<long long>(d.seed_index);
      row.exp_index = static_cast<long long>(d.exp_index);
      const auto n = static_cast<double>(c.n);
      row.sdc_rate = static_cast<double>(c.sdc) / n;
      row.due_rate = static_cast<double>(c.due) / n;
      row.masked_rate = static_cast<double>(c.masked) / n;
      row.n_samples = c.n;
      row.baseline_accuracy = ctx.baseline.accuracy();
      out.rows.push_back(std::move(row));
      counts.push_back(c);
      for (auto& line : results[k].audit) out.audit_lines.push_back(std::move(line));
    }
    const auto agg = sdc_rate_aggregate(std::span<const RateCounts>(counts), config.n_exps,
                                        config.n_seeds);
    ResultRow row;
    fill_plan_fields(row, point);
    row.model_id = inputs.model_ids[d0.model_index];
    row.seed_index = -1;
    row.exp_index = -1;
    row.sdc_rate = agg.sdc;
    row.due_rate = agg.due;
    row.masked_rate = agg.masked;
    row.n_samples = ctx.eval_ids.size();
    row.baseline_accuracy = ctx.baseline.accuracy();
    out.rows.push_back(std::move(row));
  }
  return out;
}

CampaignResult run_campaign(const CampaignConfig& config, const RunOptions& options) {
  expand_plans(config);  // fail on bad sweeps before touching files
  const auto inputs = load_campaign_inputs(config);
  return run_campaign(config, inputs, options);
}

CampaignResult run_campaign_to_dir(const CampaignConfig& config,
                                   const std::filesystem::path& out_dir,
                                   const RunOptions& options) {
  auto result = run_campaign(config, options);
  std::filesystem::create_directories(out_dir);
  const std::string csv = format_results_csv(result.rows);
  write_file_bytes(out_dir / "results.csv",
                   std::span(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));
  if (options.audit) {
    std::string text;
    for (const auto& line : result.audit_lines) text += line + "\n";
    write_file_bytes(out_dir / "audit.jsonl",
                     std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }
  return result;
}

}  // namespace nvpfi
