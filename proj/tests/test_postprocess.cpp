// Copyright 2026 The mospred Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "mospred/error.hpp"
#include "mospred/postprocess.hpp"

using namespace mospred;

namespace {

bool on_grid(double x, double res) {
  const double k = (x - 1.0) / res;
  return std::abs(k - std::round(k)) < 1e-9 && x >= 1.0 && x <= 5.0;
}

std::vector<double> one_hot(int cls) {
  std::vector<double> p(33, 0.0);
  p[static_cast<std::size_t>(cls - 1)] = 1.0;
  return p;
}

std::vector<double> random_probs(std::mt19937_64& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(33);
  double s = 0.0;
  for (auto& x : p) s += (x = e(rng));
  for (auto& x : p) x /= s;
  return p;
}

}  // namespace

TEST_CASE("quantize") {
  CHECK(quantize(3.0, 0.125) == 3.0);
  CHECK(quantize(0.2, 0.125) == 1.0);
  CHECK(quantize(5.7, 0.125) == 5.0);
  CHECK(quantize(3.07, 0.125) == 3.125);
  CHECK(quantize(3.0625, 0.125) == 3.125);  // midpoint rounds up
  CHECK(quantize(2.3, 0.1) == doctest::Approx(2.3));
  CHECK(quantize(4.99, 0.3) <= 5.0);
  CHECK_THROWS_AS(quantize(3.0, 0.0), InvalidInput);
  CHECK_THROWS_AS(quantize(std::nan(""), 0.125), NumericError);
}

TEST_CASE("quantize is idempotent and lands on the grid") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 7.0);
  for (int i = 0; i < 100000; ++i) {
    const double x = u(rng);
    const double q = quantize(x, 0.125);
    CHECK(on_grid(q, 0.125));
    CHECK(quantize(q, 0.125) == q);
    if (x >= 1.0 && x <= 5.0) CHECK(std::abs(q - x) <= 0.0625 + 1e-12);
  }
}

TEST_CASE("decode_classification") {
  CHECK(decode_classification(one_hot(17)) == 3.0);
  CHECK(decode_classification(one_hot(1)) == 1.0);
  CHECK(decode_classification(one_hot(33)) == 5.0);
  const std::vector<double> uniform(33, 1.0 / 33.0);
  CHECK(decode_classification(uniform, DecodeMode::kArgmax) == 1.0);
  CHECK(decode_classification(uniform, DecodeMode::kExpectation) ==
        doctest::Approx(3.0).epsilon(1e-14));
  CHECK_THROWS_AS(decode_classification(std::vector<double>(32, 1.0 / 32)), InvalidInput);
  CHECK_THROWS_AS(decode_classification(std::vector<double>(33, 0.5)), InvalidInput);
}

TEST_CASE("ensemble") {
  CHECK(ensemble(3.0, 3.0) == 3.0);
  CHECK(ensemble(2.0, 4.0) == 3.0);
  CHECK(ensemble(1.7, 4.1) == ensemble(4.1, 1.7));
}

TEST_CASE("correct") {
  const PostConfig cfg;
  CHECK(correct(1.2, cfg) == doctest::Approx(1.15).epsilon(1e-15));
  CHECK(correct(4.5, cfg) == doctest::Approx(4.75).epsilon(1e-15));
  CHECK(correct(3.0, cfg) == 3.0);
  CHECK(correct(1.3, cfg) == 1.3);
  CHECK(correct(4.2, cfg) == 4.2);
  CHECK(correct(1.02, cfg) == 1.0);
  CHECK(correct(4.9, cfg) == 5.0);
}

TEST_CASE("pipeline") {
  PostConfig cfg;
  const auto hot17 = one_hot(17);
  CHECK(pipeline(3.0, hot17, cfg) == 3.0);
  // 1.1 and 1.0 average to 1.05, the correction takes it below 1 and the
  // clamp restores 1.0.
  CHECK(pipeline(1.1, one_hot(1), cfg) == 1.0);
  CHECK(pipeline(std::nullopt, one_hot(33), cfg) == 5.0);
  CHECK(pipeline(3.3, {}, cfg) == 3.25);
  CHECK_THROWS_AS(pipeline(std::nullopt, {}, cfg), InvalidInput);

  cfg.ensemble = false;
  CHECK(pipeline(3.3, hot17, cfg) == 3.25);

  cfg = PostConfig{};
  cfg.quantize = false;
  CHECK(pipeline(3.3, {}, cfg) == 3.3);

  // Quantizing first then correcting moves the value off the grid.
  cfg = PostConfig{};
  cfg.order = PostOrder::kQuantizeThenCorrect;
  CHECK(pipeline(1.2, {}, cfg) == doctest::Approx(1.2));
}

TEST_CASE("pipeline output is always on the grid") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.5, 6.5);
  const PostConfig cfg;
  for (int i = 0; i < 20000; ++i) {
    const auto probs = random_probs(rng);
    const double a = pipeline(u(rng), probs, cfg);
    CHECK(on_grid(a, 0.125));
    PostConfig exp = cfg;
    exp.decode = DecodeMode::kExpectation;
    CHECK(on_grid(pipeline(u(rng), probs, exp), 0.125));
    CHECK(on_grid(pipeline(std::nullopt, probs, cfg), 0.125));
  }
}
