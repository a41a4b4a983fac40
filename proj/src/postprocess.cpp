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

#include "mospred/postprocess.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mospred/dataset.hpp"
#include "mospred/error.hpp"

namespace mospred {

void PostConfig::validate() const {
  if (!(resolution > 0.0)) throw InvalidInput("postprocess: resolution must be positive");
  if (!(1.0 < low_threshold && low_threshold < high_threshold && high_threshold < 5.0))
    throw InvalidInput("postprocess: thresholds must satisfy 1 < low < high < 5");
}

double quantize(double pred, double resolution) {
  if (!std::isfinite(pred)) throw NumericError("quantize", "non-finite prediction");
  if (!(resolution > 0.0)) throw InvalidInput("quantize: resolution must be positive");
  const double x = std::clamp(pred, 1.0, 5.0);
  const double top = std::floor(4.0 / resolution + 1e-9);
  const double k = std::min(std::floor((x - 1.0) / resolution + 0.5), top);
  return 1.0 + k * resolution;
}

double decode_classification(std::span<const double> probs, DecodeMode mode) {
  if (probs.size() != static_cast<std::size_t>(kNumClasses))
    throw InvalidInput("decode_classification: expected 33 probabilities, got " +
                       std::to_string(probs.size()));
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("decode_classification: probability outside [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw InvalidInput("decode_classification: probabilities do not sum to 1");
  if (mode == DecodeMode::kArgmax) {
    const auto it = std::max_element(probs.begin(), probs.end());
    return class_to_mos(static_cast<int>(it - probs.begin()) + 1);
  }
  double e = 0.0;
  for (int k = 1; k <= kNumClasses; ++k) e += probs[k - 1] * class_to_mos(k);
  return e;
}

double ensemble(double reg_pred, double cls_pred) { return 0.5 * (reg_pred + cls_pred); }

double correct(double pred, const PostConfig& cfg) {
  double out = pred;
  if (pred < cfg.low_threshold) {
    out = pred + cfg.low_delta;
  } else if (pred > cfg.high_threshold) {
    out = pred + cfg.high_delta;
  }
  return std::clamp(out, 1.0, 5.0);
}

double pipeline(std::optional<double> reg, std::span<const double> cls_probs,
                const PostConfig& cfg) {
  std::optional<double> cls;
  if (!cls_probs.empty()) cls = decode_classification(cls_probs, cfg.decode);
  if (!reg && !cls) throw InvalidInput("pipeline: no model output");
  if (reg && !std::isfinite(*reg)) throw NumericError("pipeline", "non-finite regression output");
  double x;
  if (reg && cls) {
    x = cfg.ensemble ? ensemble(*reg, *cls) : *reg;
  } else {
    x = reg ? *reg : *cls;
  }
  if (cfg.order == PostOrder::kCorrectThenQuantize) {
    x = correct(x, cfg);
    if (cfg.quantize) x = quantize(x, cfg.resolution);
  } else {
    if (cfg.quantize) x = quantize(x, cfg.resolution);
    x = correct(x, cfg);
  }
  return std::clamp(x, 1.0, 5.0);
}

}  // namespace mospred
