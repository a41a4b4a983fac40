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
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mospred/batching.hpp"

namespace mospred {

enum class Head : std::uint8_t { kRegression = 0, kClassification = 1 };

struct ModelConfig {
  std::size_t input_dim = 1024;
  std::size_t projection_dim = 1024;
  std::size_t lstm_hidden = 128;
  std::size_t lstm_layers = 2;
  std::size_t dense_hidden = 128;
  Head head = Head::kRegression;
  std::size_t num_classes = 33;
  double dropout_in = 0.375;
  double dropout_mid = 0.75;
  double dropout_out = 0.75;
  bool dropout_enabled = true;

  // Defaults for each head. Dropout is used by the regression head only.
  static ModelConfig regression(std::size_t input_dim);
  static ModelConfig classification(std::size_t input_dim);

  std::size_t output_dim() const { return head == Head::kRegression ? 1 : num_classes; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct ParamTensor {
  std::string name;   // e.g. "lstm0.w_hh"
  std::string layer;  // freeze unit: projection, lstm<i>, dense, output
  std::vector<std::size_t> shape;
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
};

// All learnable tensors, in declaration order:
//   projection.weight (P x D), projection.bias (P)
//   lstm<l>.w_ih (4H x in), lstm<l>.w_hh (4H x H), lstm<l>.bias (4H)   gate order i,f,g,o
//   dense.weight (Hd x H), dense.bias (Hd)
//   output.weight (O x Hd), output.bias (O)
// Gradients use the same type.
struct ModelParams {
  ModelConfig config;
  std::vector<ParamTensor> tensors;

  ParamTensor& projection_weight() { return tensors[0]; }
  const ParamTensor& projection_weight() const { return tensors[0]; }
  const ParamTensor& projection_bias() const { return tensors[1]; }
  const ParamTensor& lstm_w_ih(std::size_t l) const { return tensors[2 + 3 * l]; }
  const ParamTensor& lstm_w_hh(std::size_t l) const { return tensors[3 + 3 * l]; }
  const ParamTensor& lstm_bias(std::size_t l) const { return tensors[4 + 3 * l]; }
  const ParamTensor& dense_weight() const { return tensors[2 + 3 * config.lstm_layers]; }
  const ParamTensor& dense_bias() const { return tensors[3 + 3 * config.lstm_layers]; }
  const ParamTensor& output_weight() const { return tensors[4 + 3 * config.lstm_layers]; }
  const ParamTensor& output_bias() const { return tensors[5 + 3 * config.lstm_layers]; }
  ParamTensor& tensor(std::size_t i) { return tensors[i]; }

  std::size_t num_values() const;
  std::vector<std::string> layer_names() const;
  bool all_finite() const;
};

// Zero-filled tensors with the shapes implied by cfg.
ModelParams zeros(const ModelConfig& cfg);
ModelParams zeros_like(const ModelParams& p);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, forget-gate
// bias 1. When P == D the projection starts near identity.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

// Copies every layer of a regression model except the output layer, which is
// freshly initialised for cls_cfg.
ModelParams transfer_from_regression(const ModelParams& reg, const ModelConfig& cls_cfg,
                                     std::uint64_t seed);

enum class Mode { kTrain, kEval };

using Rng = std::mt19937_64;

// Activations cached by forward() for backward(). Sequence tensors are
// time-major: row t*B + b.
struct ForwardTrace {
  Mode mode = Mode::kEval;
  bool dropout_active = false;
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::vector<std::size_t> lengths;

  std::vector<double> input;      // TB x D
  std::vector<double> proj_pre;   // TB x P
  std::vector<double> lstm_in;    // TB x P, after SiLU and dropout
  std::vector<double> in_mask;    // TB x P scale factors (empty when inactive)
  struct Layer {
    std::vector<double> gates;    // TB x 4H, post-activation i,f,g,o
    std::vector<double> cell;     // TB x H
    std::vector<double> hidden;   // TB x H
  };
  std::vector<Layer> layers;
  std::vector<double> last;       // B x H, top hidden state at the last valid step
  std::vector<double> mid_mask;   // B x H
  std::vector<double> dense_in;   // B x H
  std::vector<double> dense_pre;  // B x Hd
  std::vector<double> out_mask;   // B x Hd
  std::vector<double> output_in;  // B x Hd, after SiLU and dropout
  std::vector<double> logits;     // B x O
  std::vector<double> output;     // B x O: regression value or class probabilities
};

// rng is only consulted when dropout is active (train mode with dropout enabled).
ForwardTrace forward(const ModelParams& params, const PaddedBatch& batch, Mode mode,
                     Rng* rng = nullptr);

// Gradients of a scalar loss given d(loss)/d(output) (B x O, same layout as
// trace.output).
ModelParams backward(const ModelParams& params, const ForwardTrace& trace,
                     std::span<const double> output_grad);

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;  // d(loss)/d(output)
  std::size_t clamped = 0;   // target probabilities raised to the floor
};

enum class RegressionLoss { kL1, kMse };

LossResult loss_regression(std::span<const double> pred, std::span<const double> target,
                           RegressionLoss kind = RegressionLoss::kL1);

inline constexpr double kProbabilityFloor = 1e-12;

// Weighted categorical cross entropy. targets hold classes 1..num_classes.
LossResult loss_classification(std::span<const double> probs, std::span<const int> targets,
                               std::span<const double> weights);

// Eval-mode predictions for many sequences, evaluated in parallel batches.
// Returns N x O values in input order.
std::vector<double> predict(const ModelParams& params,
                            std::span<const FeatureSequence* const> sequences,
                            std::size_t batch_size = 32);

}  // namespace mospred
