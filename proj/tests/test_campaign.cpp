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

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <string>

#include "doctest.h"
#include "nvpfi/campaign.hpp"
#include "nvpfi/errors.hpp"

using namespace nvpfi;

namespace {

const std::filesystem::path kFixtureDir = NVPFI_FIXTURE_DIR;
const std::filesystem::path kModel = kFixtureDir / "C4D3U32.rnvp";
const std::filesystem::path kData = kFixtureDir / "synthetic_test.csv";

std::string config_json(const std::string& sweeps, int n_exps = 2, int n_seeds = 1,
                        const std::string& models = "") {
  return R"({"base_seed": 11, "n_exps": )" + std::to_string(n_exps) +
         R"(, "n_seeds": )" + std::to_string(n_seeds) + R"(, "models": )" +
         (models.empty() ? "[\"" + kModel.string() + "\"]" : models) + R"(, "dataset": ")" +
         kData.string() + "\", " + sweeps + "}";
}

std::string state_sweep(const std::string& fields) {
  return R"("state_sweep": {)" + fields + "}";
}

const CampaignInputs& fixture_inputs() {
  static const CampaignInputs inputs = [] {
    CampaignConfig c = parse_campaign_config(config_json(state_sweep(R"("type": "zeros", "amount": 1)")));
    return load_campaign_inputs(c);
  }();
  return inputs;
}

std::vector<ResultRow> per_experiment(const std::vector<ResultRow>& rows) {
  std::vector<ResultRow> out;
  for (const auto& r : rows) {
    if (!r.is_aggregate()) out.push_back(r);
  }
  return out;
}

std::string config_error(const std::string& text) {
  try {
    expand_plans(parse_campaign_config(text));
  } catch (const ConfigError& e) {
    return e.what();
  }
  FAIL("expected a configuration error");
  return {};
}

ResultRow plan_row(const std::string& model_id, const std::string& type,
                   const std::string& variable, double sdc) {
  ResultRow r;
  r.config_id = "state/" + type + "/" + variable;
  r.model_id = model_id;
  r.seed_index = -1;
  r.exp_index = -1;
  r.injection_domain = "state";
  r.type = type;
  r.mode = "100";
  r.variable = variable;
  r.amount = "10";
  r.sdc_rate = sdc;
  return r;
}

}  // namespace

TEST_CASE("config parsing rejects malformed sweeps") {
  CHECK(config_error(config_json(state_sweep(R"("type": [], "amount": 1)"))).find("empty") !=
        std::string::npos);
  CHECK(config_error(config_json(state_sweep(R"("type": "zeros", "amount": 1, "rate": 2)")))
            .find("rate") != std::string::npos);
  CHECK_THROWS_AS(parse_campaign_config(config_json(state_sweep(R"("type": "zeros", "amount": 1)"), 0)),
                  ConfigError);
  CHECK_THROWS_AS(parse_campaign_config(R"({"dataset": "d.csv", "models": ["m.rnvp"]})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_campaign_config("not json"), ConfigError);
}

TEST_CASE("every invalid plan point is listed before execution") {
  const auto msg = config_error(
      config_json(state_sweep(R"("type": "zeros", "mode": [20, 30, 100], "amount": [10, 150])")));
  CHECK(msg.find("4 plan point(s) rejected") != std::string::npos);
  CHECK(msg.find("mode=20/variable=all/amount=150") != std::string::npos);
  CHECK(msg.find("mode=30/variable=all/amount=10") != std::string::npos);
  CHECK(msg.find("mode=30/variable=all/amount=150") != std::string::npos);
  CHECK(msg.find("mode=100/variable=all/amount=150") != std::string::npos);
  // Output layers beyond the model's coupling count are rejected at run time, before any experiment.
  const auto cfg = parse_campaign_config(config_json(
      R"("output_sweep": {"type": "zeros", "mode": 9, "amount": 10})"));
  int started = 0;
  ExperimentObserver obs;
  obs.on_reset = [&](const ExperimentDescriptor&, const ModelState&) { ++started; };
  RunOptions opts;
  opts.observer = &obs;
  CHECK_THROWS_AS(run_campaign(cfg, fixture_inputs(), opts), ConfigError);
  CHECK(started == 0);
}

TEST_CASE("expand_grid: one model, one plan, 10 x 3 gives 30 descriptors") {
  const auto cfg = parse_campaign_config(
      config_json(state_sweep(R"("type": "bitflip", "amount": 10, "bit": 3)"), 10, 3));
  const auto plans = expand_plans(cfg);
  REQUIRE(plans.size() == 1);
  const auto ds = expand_grid(cfg, plans);
  REQUIRE(ds.size() == 30);
  std::set<std::array<std::uint64_t, 4>> labels;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(ds[i].seed_index == i / 10);
    CHECK(ds[i].exp_index == i % 10);
    CHECK(ds[i].stream_labels[0] == fnv1a64(plans[0].config_id));
    labels.insert(ds[i].stream_labels);
  }
  CHECK(labels.size() == 30);
}

TEST_CASE("expand_grid: model_grid yields 18 model ids") {
  const auto cfg = parse_campaign_config(
      R"({"model_grid": {"dir": "grid"}, "dataset": "d.csv",
          "state_sweep": {"type": "zeros", "amount": [10, 20]}})",
      "/base");
  const auto ids = model_ids(cfg);
  REQUIRE(ids.size() == 18);
  CHECK(std::set<std::string>(ids.begin(), ids.end()).size() == 18);
  CHECK(cfg.models.front().path == std::filesystem::path("/base/grid/C4D3U32.rnvp"));
  CHECK(expand_grid(cfg, expand_plans(cfg)).size() == 18 * 2 * 30);
}

TEST_CASE("canonical plan ids") {
  const auto cfg = parse_campaign_config(config_json(
      state_sweep(R"("type": ["zeros", "random", "bitflip"], "variable": "bias", "amount": 2.5,
                     "bit": [30, "random"], "direction": "0to1", "sign": "negative")") +
      R"(, "output_sweep": {"type": "zeros", "mode": "random", "variable": "scale",
                           "activation": "tanh", "method": "complete", "amount": 100})"));
  std::vector<std::string> ids;
  for (const auto& p : expand_plans(cfg)) ids.push_back(p.config_id);
  CHECK(ids == std::vector<std::string>{
                   "state/type=zeros/mode=100/variable=bias/amount=2.5",
                   "state/type=random/mode=100/variable=bias/amount=2.5/mean=0/std=1",
                   "state/type=bitflip/mode=100/variable=bias/amount=2.5/bit=30/direction=0to1/sign=negative",
                   "state/type=bitflip/mode=100/variable=bias/amount=2.5/bit=random/direction=0to1/sign=negative",
                   "output/type=zeros/mode=random/variable=scale/activation=tanh/method=complete/amount=100",
               });
  const auto plan = parse_plan_json(R"({"domain": "state", "type": "bitflip", "amount": 2.5,
                                        "variable": "bias", "bit": 30, "direction": "0to1",
                                        "sign": "negative"})");
  CHECK(canonical_plan_id(plan) == ids[2]);
  CHECK_THROWS_AS(parse_plan_json(R"({"domain": "state", "type": "zeros", "amount": [1, 2]})"),
                  ConfigError);
  CHECK_THROWS_AS(parse_plan_json(R"({"type": "zeros", "amount": 1})"), ConfigError);
}

TEST_CASE("amount 0 gives zero SDC and DUE on every row") {
  const auto cfg = parse_campaign_config(config_json(
      state_sweep(R"("type": ["zeros", "bitflip"], "amount": 0, "bit": 30, "direction": "0to1")") +
      R"(, "output_sweep": {"type": "random", "amount": 0})"));
  const auto result = run_campaign(cfg, fixture_inputs());
  REQUIRE(result.rows.size() == 3 * 3);
  for (const auto& r : result.rows) {
    CHECK(r.sdc_rate == 0.0);
    CHECK(r.due_rate == 0.0);
    CHECK(r.masked_rate == 1.0);
  }
}

TEST_CASE("reruns and worker counts give byte-identical CSV") {
  const auto cfg = parse_campaign_config(config_json(
      state_sweep(R"("type": ["zeros", "bitflip"], "amount": 10, "bit": [22, 30])") +
      R"(, "output_sweep": {"type": "bitflip", "mode": "random", "amount": 5})", 3, 2));
  RunOptions one, three;
  three.workers = 3;
  one.audit = three.audit = true;
  const auto a = run_campaign(cfg, fixture_inputs(), one);
  const auto b = run_campaign(cfg, fixture_inputs(), one);
  const auto c = run_campaign(cfg, fixture_inputs(), three);
  CHECK(format_results_csv(a.rows) == format_results_csv(b.rows));
  CHECK(format_results_csv(a.rows) == format_results_csv(c.rows));
  CHECK(a.audit_lines == c.audit_lines);
  CHECK(!a.audit_lines.empty());
}

TEST_CASE("row accounting") {
  const auto cfg = parse_campaign_config(
      config_json(state_sweep(R"("type": "zeros", "mode": [20, 100], "amount": [5, 10, 30])"), 3, 2));
  const auto result = run_campaign(cfg, fixture_inputs());
  const auto plans = expand_plans(cfg);
  const std::size_t descriptors = expand_grid(cfg, plans).size();
  CHECK(result.experiments == descriptors);
  CHECK(per_experiment(result.rows).size() == descriptors);
  CHECK(result.rows.size() - descriptors == plans.size() * cfg.models.size());
  // Aggregate row follows its group and equals the exact count-weighted mean.
  for (std::size_t g = 0; g < plans.size(); ++g) {
    const auto& agg = result.rows[g * 7 + 6];
    REQUIRE(agg.is_aggregate());
    double sum = 0.0;
    for (std::size_t k = 0; k < 6; ++k) {
      const auto& r = result.rows[g * 7 + k];
      CHECK(r.config_id == agg.config_id);
      CHECK(r.n_samples == agg.n_samples);
      sum += r.sdc_rate;
    }
    CHECK(agg.sdc_rate == doctest::Approx(sum / 6).epsilon(1e-12));
  }
}

TEST_CASE("doubling n_exps leaves the shared prefix unchanged") {
  const std::string sweep = state_sweep(R"("type": "bitflip", "amount": 10, "bit": 24)");
  const auto small = run_campaign(parse_campaign_config(config_json(sweep, 2, 2)), fixture_inputs());
  const auto large = run_campaign(parse_campaign_config(config_json(sweep, 4, 2)), fixture_inputs());
  std::map<std::pair<long long, long long>, double> by_key;
  for (const auto& r : per_experiment(large.rows)) by_key[{r.seed_index, r.exp_index}] = r.sdc_rate;
  const auto rows = per_experiment(small.rows);
  REQUIRE(rows.size() == 4);
  for (const auto& r : rows) CHECK(by_key.at({r.seed_index, r.exp_index}) == r.sdc_rate);
}

TEST_CASE("adding sweep points does not perturb existing points") {
  const auto narrow = run_campaign(
      parse_campaign_config(config_json(state_sweep(R"("type": "random", "amount": 10)"))),
      fixture_inputs());
  const auto wide = run_campaign(
      parse_campaign_config(config_json(state_sweep(R"("type": ["zeros", "random"], "amount": [5, 10])"))),
      fixture_inputs());
  std::map<std::string, std::vector<double>> wide_rates;
  for (const auto& r : wide.rows) wide_rates[r.config_id].push_back(r.sdc_rate);
  std::vector<double> narrow_rates;
  for (const auto& r : narrow.rows) narrow_rates.push_back(r.sdc_rate);
  CHECK(wide_rates.at(narrow.rows.front().config_id) == narrow_rates);
}

TEST_CASE("absolute variant evaluates the shared correct set") {
  // Second model: the fixture with a stricter threshold.
  const auto dir = std::filesystem::temp_directory_path() / "nvpfi_campaign_test";
  std::filesystem::create_directories(dir);
  auto strict = load_model(kModel);
  *strict.threshold += 3.0f;
  save_model(strict, dir / "strict.rnvp");
  const std::string models = "[\"" + kModel.string() + "\", {\"id\": \"strict\", \"path\": \"" +
                             (dir / "strict.rnvp").string() + "\"}]";
  const std::string sweep = state_sweep(R"("type": "zeros", "amount": 10)");
  const std::string relative = config_json(sweep, 1, 1, models);
  std::string absolute = relative;
  absolute.insert(1, R"("metric": "absolute", )");
  const auto rel = run_campaign(parse_campaign_config(relative));
  const auto abs = run_campaign(parse_campaign_config(absolute));
  REQUIRE(rel.rows.size() == 4);
  REQUIRE(abs.rows.size() == 4);
  CHECK(rel.rows[0].model_id == "C4D3U32");
  CHECK(rel.rows[2].model_id == "strict");
  CHECK(rel.rows[0].n_samples != rel.rows[2].n_samples);
  CHECK(abs.rows[0].n_samples == abs.rows[2].n_samples);
  CHECK(abs.rows[0].n_samples <= std::min(rel.rows[0].n_samples, rel.rows[2].n_samples));
  CHECK(abs.rows[0].n_samples > 0);
}

TEST_CASE("campaign input errors fail fast") {
  auto cfg = parse_campaign_config(config_json(state_sweep(R"("type": "zeros", "amount": 1)")));
  cfg.models[0].path = kFixtureDir / "missing.rnvp";
  CHECK_THROWS_AS(run_campaign(cfg), LoadError);
  auto inputs = fixture_inputs();
  inputs.models[0].threshold.reset();
  CHECK_THROWS_AS(run_campaign(parse_campaign_config(config_json(state_sweep(
                                   R"("type": "zeros", "amount": 1)"))),
                               inputs),
                  ConfigError);
}

TEST_CASE("results CSV round trip and RFC 4180 quoting") {
  ResultRow r = plan_row("odd,\"id\"", "zeros", "all", 0.123456789012);
  r.seed_index = 2;
  r.exp_index = 7;
  r.n_samples = 480;
  r.baseline_accuracy = 0.9;
  const auto text = format_results_csv({r, plan_row("C4D3U32", "zeros", "bias", 1.0)});
  CHECK(text.find("\"odd,\"\"id\"\"\"") != std::string::npos);
  CHECK(text.find('\r') == std::string::npos);
  CHECK(text.substr(0, text.find('\n')) ==
        "config_id,model_id,seed_index,exp_index,injection_domain,type,mode,variable,amount,bit,"
        "direction,sign,activation,method,sdc_rate,due_rate,masked_rate,n_samples,"
        "baseline_accuracy");
  const auto back = parse_results_csv(text);
  REQUIRE(back.size() == 2);
  CHECK(back[0].model_id == "odd,\"id\"");
  CHECK(back[0].sdc_rate == doctest::Approx(0.123456789).epsilon(1e-12));
  CHECK(format_results_csv(back) == text);
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a\nb") == "\"a\nb\"");
  CHECK(format_rate(1.0 / 3.0) == "0.333333333");
  CHECK_THROWS_AS(parse_results_csv("a,b\n1,2\n"), ConfigError);
}

TEST_CASE("bit census") {
  ModelDefinition d;
  d.input_dim = 4;
  d.n_coupling = 2;
  d.fc_depth = 3;
  d.units = 5;
  auto m = make_identity_model(d);
  for (auto& layer : m.layers) {
    for (auto k : {NetKind::Scale, NetKind::Translation}) {
      for (auto& fc : layer.net(k)) std::fill(fc.bias.begin(), fc.bias.end(), 0.0f);
    }
  }
  const auto zero = bit_census(m);
  for (int b = 0; b < 32; ++b) {
    CHECK(zero.weights[b] == 0);
    CHECK(zero.biases[b] == 0);
  }
  for (auto& layer : m.layers) {
    for (auto k : {NetKind::Scale, NetKind::Translation}) {
      for (auto& fc : layer.net(k)) {
        for (std::size_t r = 0; r < fc.weights.rows(); ++r)
          for (std::size_t c = 0; c < fc.weights.cols(); ++c) fc.weights(r, c) = 1.0f;
      }
    }
  }
  const auto ones = bit_census(m);
  CHECK(ones.n_weights == 2 * 2 * (2 * 5 + 5 * 5 + 5 * 2));
  CHECK(ones.n_biases == 2 * 2 * (5 + 5 + 2));
  for (int b = 0; b < 32; ++b) {
    CHECK(ones.weights[b] == ((b >= 23 && b <= 29) ? ones.n_weights : 0));
  }
  const auto csv = format_census_csv(ones);
  CHECK(csv.substr(0, csv.find('\n')) == "bit,weights,biases,n_weights,n_biases");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 33);

  const auto fixture = bit_census(load_model(kModel));
  CHECK(fixture.weights[30] == 0);
  CHECK(fixture.biases[30] == 0);
}

TEST_CASE("masked output histograms") {
  const auto data = load_dataset(kData);
  const auto zeros_plan = parse_plan_json(R"({"domain": "output", "type": "zeros", "amount": 0})");

  SUBCASE("identity model puts all mass in the bin containing 0") {
    ModelDefinition d;
    d.input_dim = 16;
    d.n_coupling = 4;
    d.fc_depth = 3;
    d.units = 8;
    const auto h = masked_output_histogram(make_identity_model(d), zeros_plan, data, 10, 0);
    for (const Histogram* net : {&h.scale, &h.translation}) {
      const auto zero_bin = net->bin_of(0.0);
      CHECK(net->counts[zero_bin] == data.size() * 8);
      CHECK(net->nonfinite == 0);
    }
    CHECK(h.scale.lo == -1.0);
    CHECK(h.scale.hi == 1.0);
  }
  SUBCASE("trained model: scale support within [-1, 1]") {
    const auto model = load_model(kModel);
    const auto h = masked_output_histogram(model, zeros_plan, data, 20, 0);
    CHECK(h.scale.lo >= -1.0);
    CHECK(h.scale.hi <= 1.0);
    std::uint64_t total = 0;
    for (auto c : h.scale.counts) total += c;
    CHECK(total == data.size() * 8);
    CHECK(h.translation.lo < h.translation.hi);
    const auto csv = format_histogram_csv(h);
    CHECK(csv.substr(0, csv.find('\n')) == "net,bin,lo,hi,count");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 20 + 2);
  }
  SUBCASE("zeros on every scale output collapse the scale histogram") {
    const auto model = load_model(kModel);
    const auto plan = parse_plan_json(
        R"({"domain": "output", "type": "zeros", "variable": "scale", "amount": 100})");
    const auto h = masked_output_histogram(model, plan, data, 9, 0);
    CHECK(h.scale.counts[h.scale.bin_of(0.0)] == data.size() * 8);
  }
  SUBCASE("bit-30 state faults show up as non-finite outputs") {
    const auto model = load_model(kModel);
    const auto plan = parse_plan_json(R"({"domain": "output", "type": "bitflip", "amount": 100,
                                          "variable": "translation", "bit": 30,
                                          "direction": "0to1"})");
    const auto h = masked_output_histogram(model, plan, data, 9, 0);
    CHECK(h.translation.nonfinite > 0);
  }
  CHECK(Histogram{0.0, 1.0, std::vector<std::uint64_t>(4), 0}.bin_of(1.0) == 3);
  CHECK(Histogram{0.0, 1.0, std::vector<std::uint64_t>(4), 0}.bin_of(-5.0) == 0);
}

TEST_CASE("plot data: radial categories and parallel coordinates") {
  ModelDefinition base;
  base.input_dim = 16;
  std::vector<ResultRow> rows;
  double v = 0.0;
  for (const auto& e : build_model_grid(base, 0)) {
    rows.push_back(plan_row(e.id, "zeros", "bias", v));
    rows.push_back(plan_row(e.id, "zeros", "weight", v + 0.5));
    v += 0.01;
  }
  const auto radial = emit_plot_data(rows, PlotKind::Radial);
  std::map<std::string, std::set<std::string>> categories;
  for (const auto& r : radial.rows) categories[r[1] + "/" + r[2]].insert(r[3]);
  REQUIRE(categories.size() == 2);
  for (const auto& [_, models] : categories) CHECK(models.size() == 18);
  CHECK(radial.rows.front()[4] == "D3U32");
  CHECK(radial.rows.front()[5] == "4");

  ResultRow single = plan_row("C4D3U32", "bitflip", "all", 0.25);
  single.seed_index = 0;
  single.exp_index = 0;
  single.bit = "30";
  const auto parallel = emit_plot_data({single}, PlotKind::ParallelCoords);
  REQUIRE(parallel.rows.size() == 1);
  const std::set<std::string> header(parallel.header.begin(), parallel.header.end());
  CHECK(header == std::set<std::string>{"type", "mode", "variable", "amount", "bit", "direction",
                                        "sign", "activation", "method", "sdc_rate"});
  CHECK(parallel.rows[0].back() == "0.25");
  CHECK(format_csv(parallel) ==
        "type,mode,variable,amount,bit,direction,sign,activation,method,sdc_rate\n"
        "bitflip,100,all,10,30,,,,,0.25\n");
  CHECK(parse_plot_kind("radial") == PlotKind::Radial);
  CHECK_THROWS_AS(parse_plot_kind("pie"), ConfigError);
  CHECK_THROWS_AS(emit_plot_data({}, PlotKind::Radial), ConfigError);
}

TEST_CASE("shipped configs parse and expand") {
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(NVPFI_CONFIG_DIR)) {
    if (e.path().extension() != ".json") continue;
    CAPTURE(e.path().string());
    const auto cfg = load_campaign_config(e.path());
    CHECK(!expand_grid(cfg, expand_plans(cfg)).empty());
    for (const auto& m : cfg.models) CHECK(std::filesystem::exists(m.path));
    CHECK(std::filesystem::exists(cfg.dataset));
    ++n;
  }
  CHECK(n >= 4);
}
