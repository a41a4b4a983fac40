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

// Times the OpenMP kernels against the serial reference and checks that both
// produce identical bits. Usage: bench_kernels [threads]
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <random>
#include <vector>

#include "mospred/batching.hpp"
#include "mospred/kernels.hpp"
#include "mospred/model.hpp"

namespace k = mospred::kernels;
using Clock = std::chrono::steady_clock;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

template <typename F>
double time_ms(F&& f, int reps) {
  f();
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) f();
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count() / reps;
}

void report(const char* name, double serial, double parallel, bool same) {
  std::printf("%-28s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx   %s\n", name, serial,
              parallel, serial / parallel, same ? "bit-identical" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) k::set_threads(std::atoi(argv[1]));
  std::printf("threads: %d\n", k::max_threads());
  std::mt19937_64 rng(7);

  // Projection-sized product: 8 utterances x 250 frames of 1024-dim features.
  const std::size_t rows = 8 * 250, in = 1024, out = 1024;
  const auto x = random_vec(rows * in, rng);
  const auto w = random_vec(out * in, rng);
  const auto b = random_vec(out, rng);
  std::vector<double> y1(rows * out), y2(rows * out);
  const double ts = time_ms([&] { k::serial::linear_forward(x, w, b, y1, rows, in, out); }, 2);
  const double tp = time_ms([&] { k::linear_forward(x, w, b, y2, rows, in, out); }, 2);
  report("linear_forward 2000x1024x1024", ts, tp, y1 == y2);

  std::vector<double> dx1(rows * in), dx2(rows * in);
  const double bs = time_ms([&] { k::serial::linear_backward_input(y1, w, dx1, rows, in, out); }, 2);
  const double bp = time_ms([&] { k::linear_backward_input(y1, w, dx2, rows, in, out); }, 2);
  report("linear_backward_input", bs, bp, dx1 == dx2);

  std::vector<double> dw1(out * in, 0.0), dw2(out * in, 0.0), db1(out, 0.0), db2(out, 0.0);
  const double ws = time_ms([&] { k::serial::linear_backward_weight(y1, x, dw1, db1, rows, in, out); }, 1);
  const double wp = time_ms([&] { k::linear_backward_weight(y1, x, dw2, db2, rows, in, out); }, 1);
  report("linear_backward_weight", ws, wp, dw1 == dw2 && db1 == db2);

  // Full model step at the default architecture on a smaller input.
  mospred::ModelConfig cfg = mospred::ModelConfig::regression(256);
  const auto params = mospred::init_params(cfg, 1);
  std::vector<mospred::FeatureSequence> seqs(8);
  std::uniform_int_distribution<std::size_t> len(100, 200);
  for (auto& s : seqs) {
    s.frames = len(rng);
    s.dim = cfg.input_dim;
    s.values.resize(s.frames * s.dim);
    for (auto& v : s.values) v = static_cast<float>(std::uniform_real_distribution<double>(-1, 1)(rng));
  }
  const auto batch = mospred::pad_and_mask(seqs);
  const double tf = time_ms([&] { mospred::forward(params, batch, mospred::Mode::kEval); }, 3);
  const auto trace = mospred::forward(params, batch, mospred::Mode::kEval);
  std::vector<double> g(trace.output.size(), 1.0);
  const double tb = time_ms([&] { mospred::backward(params, trace, g); }, 3);
  std::printf("model D=256 B=8 T<=200: forward %.2f ms, backward %.2f ms\n", tf, tb);
  return 0;
}
