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

#include "mospred/kernels.hpp"

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mospred::kernels {
namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1u << 15;

inline void forward_row(const double* xr, const double* w, const double* bias, double* yr,
                        std::size_t in, std::size_t out, bool accumulate) {
  for (std::size_t o = 0; o < out; ++o) {
    const double* wr = w + o * in;
    double acc = 0.0;
    for (std::size_t k = 0; k < in; ++k) acc += xr[k] * wr[k];
    if (bias != nullptr) acc += bias[o];
    yr[o] = accumulate ? yr[o] + acc : acc;
  }
}

inline void backward_input_row(const double* dyr, const double* w, double* dxr, std::size_t in,
                               std::size_t out, bool accumulate) {
  if (!accumulate)
    for (std::size_t k = 0; k < in; ++k) dxr[k] = 0.0;
  for (std::size_t o = 0; o < out; ++o) {
    const double g = dyr[o];
    if (g == 0.0) continue;
    const double* wr = w + o * in;
    for (std::size_t k = 0; k < in; ++k) dxr[k] += g * wr[k];
  }
}

inline void backward_weight_row(const double* dy, const double* x, double* dwr, double* dbo,
                                std::size_t o, std::size_t rows, std::size_t in,
                                std::size_t out) {
  double bsum = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double g = dy[r * out + o];
    bsum += g;
    if (g == 0.0) continue;
    const double* xr = x + r * in;
    for (std::size_t k = 0; k < in; ++k) dwr[k] += g * xr[k];
  }
  if (dbo != nullptr) *dbo += bsum;
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

void linear_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y, std::size_t rows,
                    std::size_t in, std::size_t out, bool accumulate) {
  const double* b = bias.empty() ? nullptr : bias.data();
  const bool par = rows * in * out >= kParallelWork && rows > 1;
  const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t r = 0; r < n; ++r)
    forward_row(x.data() + r * in, w.data(), b, y.data() + r * out, in, out, accumulate);
}

void linear_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, std::size_t rows, std::size_t in,
                           std::size_t out, bool accumulate) {
  const bool par = rows * in * out >= kParallelWork && rows > 1;
  const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t r = 0; r < n; ++r)
    backward_input_row(dy.data() + r * out, w.data(), dx.data() + r * in, in, out, accumulate);
}

void linear_backward_weight(std::span<const double> dy, std::span<const double> x,
                            std::span<double> dw, std::span<double> dbias, std::size_t rows,
                            std::size_t in, std::size_t out) {
  double* db = dbias.empty() ? nullptr : dbias.data();
  const bool par = rows * in * out >= kParallelWork && out > 1;
  const auto n = static_cast<std::int64_t>(out);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t o = 0; o < n; ++o)
    backward_weight_row(dy.data(), x.data(), dw.data() + o * in, db ? db + o : nullptr,
                        static_cast<std::size_t>(o), rows, in, out);
}

namespace serial {

void linear_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y, std::size_t rows,
                    std::size_t in, std::size_t out, bool accumulate) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = 0.0;
      for (std::size_t k = 0; k < in; ++k) acc += x[r * in + k] * w[o * in + k];
      if (!bias.empty()) acc += bias[o];
      y[r * out + o] = accumulate ? y[r * out + o] + acc : acc;
    }
  }
}

void linear_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, std::size_t rows, std::size_t in,
                           std::size_t out, bool accumulate) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < in; ++k) {
      if (!accumulate) dx[r * in + k] = 0.0;
    }
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dy[r * out + o];
      if (g == 0.0) continue;
      for (std::size_t k = 0; k < in; ++k) dx[r * in + k] += g * w[o * in + k];
    }
  }
}

void linear_backward_weight(std::span<const double> dy, std::span<const double> x,
                            std::span<double> dw, std::span<double> dbias, std::size_t rows,
                            std::size_t in, std::size_t out) {
  for (std::size_t o = 0; o < out; ++o) {
    double bsum = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double g = dy[r * out + o];
      bsum += g;
      if (g == 0.0) continue;
      for (std::size_t k = 0; k < in; ++k) dw[o * in + k] += g * x[r * in + k];
    }
    if (!dbias.empty()) dbias[o] += bsum;
  }
}

}  // namespace serial
}  // namespace mospred::kernels
