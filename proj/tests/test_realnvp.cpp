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
#include <cmath>
#include <limits>
#include <numbers>

#include "doctest.h"
#include "nvpfi/errors.hpp"
#include "nvpfi/realnvp.hpp"
#include "oracles.hpp"

using namespace nvpfi;

namespace {

ModelDefinition def(std::size_t d, std::size_t c, std::size_t depth, std::size_t units) {
  ModelDefinition m;
  m.input_dim = d;
  m.n_coupling = c;
  m.fc_depth = depth;
  m.units = units;
  return m;
}

std::vector<float> gaussian_vector(RandomStream& s, std::size_t n, float std = 1.0f) {
  std::vector<float> v(n);
  for (float& x : v) x = s.gaussian(0.0f, std);
  return v;
}

}  // namespace

TEST_CASE("identity coupling layer leaves the input unchanged") {
  const auto model = make_identity_model(def(6, 2, 3, 8));
  RandomStream s(1);
  const auto x = gaussian_vector(s, 6);
  const auto r = coupling_forward(model.layers[0], x);
  CHECK(r.y == x);
  CHECK(r.log_det == 0.0f);
  CHECK(coupling_inverse(model.layers[0], x) == x);
}

TEST_CASE("coupling forward copies the pass-through half and applies the affine map") {
  auto model = make_identity_model(def(4, 2, 1, 4));
  // Single FC per net: s = tanh(W_s x_m + b_s), t = W_t x_m + b_t.
  auto& layer = model.layers[0];
  layer.scale_net[0].bias = {0.5f, -0.25f};
  layer.translation_net[0].weights = Matrix(2, 2, {1, 0, 0, 2});
  const std::vector<float> x{1.0f, 2.0f, 3.0f, 4.0f};
  const auto r = coupling_forward(layer, x);
  CHECK(r.y[0] == 1.0f);
  CHECK(r.y[1] == 2.0f);
  CHECK(r.y[2] == 3.0f * std::exp(std::tanh(0.5f)) + 1.0f);
  CHECK(r.y[3] == 4.0f * std::exp(std::tanh(-0.25f)) + 4.0f);
  CHECK(r.log_det == std::tanh(0.5f) + std::tanh(-0.25f));
}

TEST_CASE("coupling log_det matches the finite-difference Jacobian determinant") {
  RandomStream s(2024);
  const auto model = make_random_model(def(6, 1, 3, 16), s, 0.5f);
  for (int p = 0; p < 10; ++p) {
    const auto x = gaussian_vector(s, 6);
    const auto r = coupling_forward(model.layers[0], x);
    const double det = oracle::abs_det(oracle::fd_jacobian(model.layers[0], x, 1e-3f));
    const double expected = std::exp(static_cast<double>(r.log_det));
    CHECK(std::fabs(det - expected) / expected < 1e-3);
  }
}

TEST_CASE("coupling inverse round-trips within 1e-4") {
  RandomStream s(7);
  const auto model = make_random_model(def(8, 2, 3, 16), s, 0.3f);
  for (int i = 0; i < 1000; ++i) {
    const auto x = gaussian_vector(s, 8);
    for (const auto& layer : model.layers) {
      const auto back = coupling_inverse(layer, coupling_forward(layer, x).y);
      for (std::size_t k = 0; k < x.size(); ++k) CHECK(std::fabs(back[k] - x[k]) < 1e-4f);
    }
  }
}

TEST_CASE("coupling ops reject dimension mismatches") {
  const auto model = make_identity_model(def(4, 2, 2, 4));
  CHECK_THROWS_AS(coupling_forward(model.layers[0], std::vector<float>(3)), ConfigError);
  CHECK_THROWS_AS(coupling_inverse(model.layers[0], std::vector<float>(5)), ConfigError);
}

TEST_CASE("log_prob of the identity model is the standard normal density") {
  const auto model = make_identity_model(def(4, 4, 3, 32));
  const float c = static_cast<float>(2.0 * std::log(2.0 * std::numbers::pi));
  CHECK(log_prob(model, std::vector<float>{0, 0, 0, 0}) == doctest::Approx(-3.67575).epsilon(1e-5));
  CHECK(log_prob(model, std::vector<float>{0, 0, 0, 0}) == -c);
  CHECK(log_prob(model, std::vector<float>{1, 1, 0, 0}) == -c - 1.0f);
}

TEST_CASE("log_prob equals the composition of coupling_forward calls bit-for-bit") {
  RandomStream s(31);
  const auto model = make_random_model(def(4, 4, 3, 16), s, 0.4f);
  for (int i = 0; i < 200; ++i) {
    const auto x = gaussian_vector(s, 4);
    std::vector<float> z = x;
    float total = 0.0f;
    for (const auto& layer : model.layers) {
      auto r = coupling_forward(layer, z);
      z = std::move(r.y);
      total += r.log_det;
    }
    // Independent base density: constant in double, squared norm in binary32.
    float sq = 0.0f;
    for (float v : z) sq += v * v;
    const float base = -static_cast<float>(0.5 * 4.0 * std::log(2.0 * std::numbers::pi)) - 0.5f * sq;
    CHECK(float_bits(log_prob(model, x)) == float_bits(base + total));
  }
}

TEST_CASE("flow inverse reconstructs the input") {
  RandomStream s(8);
  const auto model = make_random_model(def(16, 4, 3, 32), s, 0.3f);
  for (int i = 0; i < 200; ++i) {
    const auto x = gaussian_vector(s, 16);
    const auto back = flow_inverse(model, flow_forward(model, x).z);
    for (std::size_t k = 0; k < x.size(); ++k) CHECK(std::fabs(back[k] - x[k]) < 1e-4f);
  }
}

TEST_CASE("masks alternate and every dimension is transformed") {
  CHECK(alternating_mask(4, 0) == std::vector<std::uint8_t>{1, 1, 0, 0});
  CHECK(alternating_mask(4, 1) == std::vector<std::uint8_t>{0, 0, 1, 1});
  CHECK(alternating_mask(5, 0) == std::vector<std::uint8_t>{1, 1, 0, 0, 0});
  const auto model = make_identity_model(def(6, 4, 3, 8));
  std::vector<int> touched(6, 0);
  for (const auto& layer : model.layers) {
    for (std::size_t i = 0; i < 6; ++i) touched[i] |= layer.mask[i] == 0;
  }
  CHECK(std::all_of(touched.begin(), touched.end(), [](int t) { return t == 1; }));
  for (std::size_t c = 1; c < model.layers.size(); ++c) {
    for (std::size_t i = 0; i < 6; ++i) CHECK(model.layers[c].mask[i] != model.layers[c - 1].mask[i]);
  }
}

TEST_CASE("structure validation") {
  auto model = make_identity_model(def(4, 2, 3, 8));
  CHECK_NOTHROW(validate_structure(model));
  auto bad = model;
  bad.layers[0].scale_net.back().activation = Activation::Linear;
  CHECK_THROWS_AS(validate_structure(bad), ConfigError);
  bad = model;
  bad.layers[1].mask = alternating_mask(4, 0);
  CHECK_THROWS_AS(validate_structure(bad), ConfigError);
  bad = model;
  bad.layers.pop_back();
  CHECK_THROWS_AS(validate_structure(bad), ConfigError);
  CHECK_THROWS_AS(def(4, 5, 3, 32).validate(true), ConfigError);
  CHECK_NOTHROW(def(4, 6, 5, 64).validate(true));
  CHECK(def(16, 4, 3, 32).id() == "C4D3U32");
  CHECK(def(16, 4, 3, 32).total_fc_layers() == 24);
}

TEST_CASE("a NaN weight on the active path makes log_prob NaN") {
  RandomStream s(12);
  auto model = make_random_model(def(8, 4, 3, 16), s, 0.3f);
  model.layers[2].translation_net[1].weights(0, 0) = std::numeric_limits<float>::quiet_NaN();
  for (int i = 0; i < 20; ++i) CHECK(std::isnan(log_prob(model, gaussian_vector(s, 8))));
  model = make_random_model(def(8, 4, 3, 16), s, 0.3f);
  model.layers[0].scale_net[0].bias[3] = std::numeric_limits<float>::quiet_NaN();
  CHECK(std::isnan(log_prob(model, gaussian_vector(s, 8))));
}

TEST_CASE("classification boundaries") {
  CHECK(classify_score(-5.0f, -5.0f) == Prediction::Nominal);
  CHECK(classify_score(-5.0001f, -5.0f) == Prediction::Anomalous);
  CHECK(classify_score(std::numeric_limits<float>::quiet_NaN(), -5.0f) == Prediction::Due);
  CHECK(classify_score(std::numeric_limits<float>::infinity(), -5.0f) == Prediction::Due);
  CHECK(classify_score(-std::numeric_limits<float>::infinity(), -5.0f) == Prediction::Due);
  auto model = make_identity_model(def(4, 4, 3, 32));
  CHECK_THROWS_AS(classify(model, std::vector<float>(4, 0.0f)), ConfigError);
  model.threshold = -10.0f;
  CHECK(classify(model, std::vector<float>(4, 0.0f)) == Prediction::Nominal);
  CHECK(classify(model, std::vector<float>(4, 3.0f)) == Prediction::Anomalous);
}

TEST_CASE("nearest-rank percentile threshold") {
  std::vector<float> scores;
  for (int i = 1; i <= 100; ++i) scores.push_back(static_cast<float>(i));
  CHECK(percentile_threshold(scores, 5.0) == 5.0f);
  CHECK(percentile_threshold(scores, 100.0) == 100.0f);
  CHECK(percentile_threshold(scores, 0.0) == 1.0f);
  CHECK(percentile_threshold(scores, 7.0) == 7.0f);
  CHECK(percentile_threshold({3.0f, 1.0f, 2.0f}, 50.0) == 2.0f);
  CHECK_THROWS_AS(percentile_threshold({}, 5.0), ConfigError);
  CHECK_THROWS_AS(percentile_threshold({1.0f, std::numeric_limits<float>::quiet_NaN()}, 5.0),
                  ConfigError);
}
