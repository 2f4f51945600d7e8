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

#include <cmath>
#include <limits>
#include <set>
#include <tuple>

#include "doctest.h"
#include "nvpfi/errors.hpp"
#include "nvpfi/numeric.hpp"

using namespace nvpfi;

namespace {

// Reference splitmix64 written from the published constants.
std::uint64_t ref_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

}  // namespace

TEST_CASE("fc_forward: identity weights with ReLU clamp") {
  const auto out = fc_forward(Matrix::identity(2), std::vector<float>{0, 0},
                              std::vector<float>{3, -2}, Activation::ReLU);
  CHECK(out == std::vector<float>{3, 0});
}

TEST_CASE("fc_forward: zero weights under tanh give zeros") {
  const auto out = fc_forward(Matrix(2, 2), std::vector<float>{0, 0},
                              std::vector<float>{7.5f, -1.25f}, Activation::Tanh);
  CHECK(out == std::vector<float>{0, 0});
}

TEST_CASE("fc_forward: linear row sum plus bias") {
  const auto out = fc_forward(Matrix(1, 2, {1, 1}), std::vector<float>{0.5f},
                              std::vector<float>{1, 2}, Activation::Linear);
  CHECK(out == std::vector<float>{3.5f});
}

TEST_CASE("fc_forward: dimension mismatches are configuration errors") {
  CHECK_THROWS_AS(fc_forward(Matrix(2, 3), std::vector<float>{0, 0}, std::vector<float>{1, 2},
                             Activation::Linear),
                  ConfigError);
  CHECK_THROWS_AS(fc_forward(Matrix(2, 2), std::vector<float>{0}, std::vector<float>{1, 2},
                             Activation::Linear),
                  ConfigError);
  CHECK_THROWS_AS(Matrix(2, 2, {1, 2, 3}), ConfigError);
}

TEST_CASE("fc_forward: binary32 accumulation in ascending column order") {
  // 1e8 + 1 - 1e8 loses the 1 in binary32 when summed left to right.
  const auto out = fc_forward(Matrix(1, 3, {1, 1, 1}), std::vector<float>{0},
                              std::vector<float>{1e8f, 1.0f, -1e8f}, Activation::Linear);
  CHECK(float_bits(out[0]) == float_bits(0.0f));
}

TEST_CASE("fc_forward: NaN and Inf propagate") {
  const float nan = std::numeric_limits<float>::quiet_NaN();
  const float inf = std::numeric_limits<float>::infinity();
  const auto a = fc_forward(Matrix(1, 2, {nan, 1}), std::vector<float>{0},
                            std::vector<float>{1, 1}, Activation::ReLU);
  CHECK(std::isnan(a[0]));
  const auto b = fc_forward(Matrix(1, 1, {inf}), std::vector<float>{0}, std::vector<float>{1},
                            Activation::Linear);
  CHECK(std::isinf(b[0]));
}

TEST_CASE("fc_forward is bit-deterministic across repeated calls") {
  RandomStream s(11);
  Matrix w(5, 7);
  for (float& v : w.data()) v = s.gaussian(0, 1);
  std::vector<float> b(5), x(7);
  for (float& v : b) v = s.gaussian(0, 1);
  for (float& v : x) v = s.gaussian(0, 1);
  const auto first = fc_forward(w, b, x, Activation::Tanh);
  for (int i = 0; i < 10; ++i) {
    const auto again = fc_forward(w, b, x, Activation::Tanh);
    for (std::size_t k = 0; k < first.size(); ++k) CHECK(float_bits(again[k]) == float_bits(first[k]));
  }
}

TEST_CASE("activation ranges") {
  RandomStream s(3);
  for (int i = 0; i < 10000; ++i) {
    const float v = s.gaussian(0, 50);
    CHECK(activate(Activation::ReLU, v) >= 0.0f);
    CHECK(std::fabs(activate(Activation::Tanh, v)) <= 1.0f);
    CHECK(float_bits(activate(Activation::Linear, v)) == float_bits(v));
  }
  CHECK(std::isnan(activate(Activation::ReLU, std::numeric_limits<float>::quiet_NaN())));
  CHECK(parse_activation("tanh") == Activation::Tanh);
  CHECK_THROWS_AS(parse_activation("sigmoid"), ConfigError);
}

TEST_CASE("mix64 matches the reference splitmix64 sequence") {
  // First outputs of splitmix64 seeded with 0.
  CHECK(mix64(kGamma) == 0xE220A8397B1DCDAFULL);
  CHECK(mix64(2 * kGamma) == 0x6E789E6AA1B965F4ULL);
  CHECK(mix64(3 * kGamma) == 0x06C45D188009454FULL);
}

TEST_CASE("fnv1a64 reference values") {
  CHECK(fnv1a64("") == 0xCBF29CE484222325ULL);
  CHECK(fnv1a64("a") == 0xAF63DC4C8601EC8CULL);
}

TEST_CASE("derive_stream: empty fold is mix(base)") {
  const auto s = derive_stream(42, {});
  CHECK(s.state() == mix64(42));
  CHECK(s.origin().empty());
}

TEST_CASE("derive_stream: folding is sequential") {
  auto a = derive_stream(42, {7, 9});
  auto b = derive_stream(42, {7}).child(9);
  CHECK(a.state() == b.state());
  CHECK(a.origin() == std::vector<std::uint64_t>{7, 9});
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("derive_stream: first draws agree with an independent recomputation") {
  for (std::uint64_t exp : {3ULL, 4ULL}) {
    std::uint64_t state = ref_mix(1234);
    state = ref_mix(state ^ ref_mix(exp + kGamma));
    auto s = derive_stream(1234, {exp});
    for (int i = 0; i < 4; ++i) {
      state += kGamma;
      CHECK(s.next_u64() == ref_mix(state));
    }
  }
  auto s3 = derive_stream(1234, {3});
  auto s4 = derive_stream(1234, {4});
  CHECK(s3.next_u64() != s4.next_u64());
}

TEST_CASE("derive_stream: no collisions over 10^4 random (seed, label) pairs") {
  RandomStream meta(99);
  std::set<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t, std::uint64_t>> seen;
  std::set<std::pair<std::uint64_t, std::uint64_t>> pairs;
  for (int i = 0; i < 10000; ++i) {
    const std::uint64_t seed = meta.next_u64();
    const std::uint64_t label = meta.next_u64();
    if (!pairs.insert({seed, label}).second) continue;
    auto s = derive_stream(seed, {label});
    const auto draws = std::make_tuple(s.next_u64(), s.next_u64(), s.next_u64(), s.next_u64());
    CHECK(seen.insert(draws).second);
  }
  // Small structured labels, as used by the campaign runner.
  seen.clear();
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    for (std::uint64_t label = 0; label < 100; ++label) {
      auto s = derive_stream(seed, {label});
      const auto draws = std::make_tuple(s.next_u64(), s.next_u64(), s.next_u64(), s.next_u64());
      CHECK(seen.insert(draws).second);
    }
  }
}

TEST_CASE("uniform, below and gaussian stay in range and are reproducible") {
  RandomStream a(5), b(5);
  double sum = 0.0, sq = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = a.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(b.uniform() == u);
    const auto k = a.below(32);
    CHECK(k < 32);
    CHECK(b.below(32) == k);
    const float g = a.gaussian(0.0f, 1.0f);
    CHECK(float_bits(b.gaussian(0.0f, 1.0f)) == float_bits(g));
    CHECK(std::isfinite(g));
    sum += g;
    sq += static_cast<double>(g) * g;
  }
  CHECK(std::fabs(sum / n) < 0.01);
  CHECK(std::fabs(sq / n - 1.0) < 0.02);
}
