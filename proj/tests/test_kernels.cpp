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

#include <random>
#include <vector>

#include "mospred/kernels.hpp"

using namespace mospred;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

struct Shape {
  std::size_t rows, in, out;
};

}  // namespace

TEST_CASE("linear_forward against a naive triple loop") {
  std::mt19937_64 rng(1);
  const std::size_t rows = 5, in = 7, out = 3;
  const auto x = random_vec(rows * in, rng);
  const auto w = random_vec(out * in, rng);
  const auto b = random_vec(out, rng);
  std::vector<double> y(rows * out);
  kernels::linear_forward(x, w, b, y, rows, in, out);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < in; ++i) s += x[r * in + i] * w[o * in + i];
      CHECK(y[r * out + o] == doctest::Approx(s).epsilon(1e-14));
    }
  }
  std::vector<double> acc(rows * out, 1.0);
  kernels::linear_forward(x, w, b, acc, rows, in, out, true);
  for (std::size_t k = 0; k < acc.size(); ++k)
    CHECK(acc[k] == doctest::Approx(y[k] + 1.0).epsilon(1e-14));
}

TEST_CASE("backward kernels against naive loops") {
  std::mt19937_64 rng(2);
  const std::size_t rows = 6, in = 4, out = 5;
  const auto x = random_vec(rows * in, rng);
  const auto w = random_vec(out * in, rng);
  const auto dy = random_vec(rows * out, rng);

  std::vector<double> dx(rows * in);
  kernels::linear_backward_input(dy, w, dx, rows, in, out);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < in; ++i) {
      double s = 0.0;
      for (std::size_t o = 0; o < out; ++o) s += dy[r * out + o] * w[o * in + i];
      CHECK(dx[r * in + i] == doctest::Approx(s).epsilon(1e-14));
    }
  }

  std::vector<double> dw(out * in, 0.5), db(out, 0.25);
  kernels::linear_backward_weight(dy, x, dw, db, rows, in, out);
  for (std::size_t o = 0; o < out; ++o) {
    double sb = 0.25;
    for (std::size_t r = 0; r < rows; ++r) sb += dy[r * out + o];
    CHECK(db[o] == doctest::Approx(sb).epsilon(1e-14));
    for (std::size_t i = 0; i < in; ++i) {
      double s = 0.5;
      for (std::size_t r = 0; r < rows; ++r) s += dy[r * out + o] * x[r * in + i];
      CHECK(dw[o * in + i] == doctest::Approx(s).epsilon(1e-14));
    }
  }
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  std::mt19937_64 rng(3);
  // Includes shapes above the parallel threshold.
  for (const Shape s : {Shape{3, 5, 2}, Shape{64, 96, 80}, Shape{300, 128, 512}}) {
    const auto x = random_vec(s.rows * s.in, rng);
    const auto w = random_vec(s.out * s.in, rng);
    const auto b = random_vec(s.out, rng);
    const auto dy = random_vec(s.rows * s.out, rng);

    std::vector<double> y1(s.rows * s.out), y2(s.rows * s.out);
    kernels::linear_forward(x, w, b, y1, s.rows, s.in, s.out);
    kernels::serial::linear_forward(x, w, b, y2, s.rows, s.in, s.out);
    CHECK(y1 == y2);

    std::vector<double> dx1(s.rows * s.in), dx2(s.rows * s.in);
    kernels::linear_backward_input(dy, w, dx1, s.rows, s.in, s.out);
    kernels::serial::linear_backward_input(dy, w, dx2, s.rows, s.in, s.out);
    CHECK(dx1 == dx2);

    std::vector<double> dw1(s.out * s.in), dw2(s.out * s.in), db1(s.out), db2(s.out);
    kernels::linear_backward_weight(dy, x, dw1, db1, s.rows, s.in, s.out);
    kernels::serial::linear_backward_weight(dy, x, dw2, db2, s.rows, s.in, s.out);
    CHECK(dw1 == dw2);
    CHECK(db1 == db2);
  }
}

TEST_CASE("thread count is adjustable") {
  const int before = kernels::max_threads();
  CHECK(before >= 1);
  kernels::set_threads(1);
  CHECK(kernels::max_threads() == 1);
  kernels::set_threads(before);
}
