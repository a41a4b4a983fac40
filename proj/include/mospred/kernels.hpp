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

#pragma once

#include <cstddef>
#include <span>

// Dense kernels used by the model. Every output element is reduced in
// ascending index order, so the OpenMP versions are bit-identical to the
// serial reference for any thread count.
//
// Shapes are row-major:  X is rows x in,  W is out x in,  Y is rows x out.

namespace mospred::kernels {

// Y (+)= X * W^T + bias.  bias may be empty.
void linear_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y,
                    std::size_t rows, std::size_t in, std::size_t out,
                    bool accumulate = false);

// dX (+)= dY * W
void linear_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, std::size_t rows, std::size_t in,
                           std::size_t out, bool accumulate = false);

// dW += dY^T * X,  dbias += column sums of dY (dbias may be empty).
void linear_backward_weight(std::span<const double> dy, std::span<const double> x,
                            std::span<double> dw, std::span<double> dbias,
                            std::size_t rows, std::size_t in, std::size_t out);

// Number of threads the parallel kernels will use.
int max_threads();
void set_threads(int n);

namespace serial {

void linear_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y,
                    std::size_t rows, std::size_t in, std::size_t out,
                    bool accumulate = false);

void linear_backward_input(std::span<const double> dy, std::span<const double> w,
                           std::span<double> dx, std::size_t rows, std::size_t in,
                           std::size_t out, bool accumulate = false);

void linear_backward_weight(std::span<const double> dy, std::span<const double> x,
                            std::span<double> dw, std::span<double> dbias,
                            std::size_t rows, std::size_t in, std::size_t out);

}  // namespace serial
}  // namespace mospred::kernels
