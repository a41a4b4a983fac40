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

#include <optional>
#include <span>

namespace mospred {

enum class DecodeMode { kArgmax, kExpectation };
enum class PostOrder { kCorrectThenQuantize, kQuantizeThenCorrect };

struct PostConfig {
  double resolution = 0.125;
  double low_threshold = 1.3;
  double high_threshold = 4.2;
  double low_delta = -0.05;
  double high_delta = 0.25;
  bool ensemble = true;
  bool quantize = true;
  DecodeMode decode = DecodeMode::kArgmax;
  PostOrder order = PostOrder::kCorrectThenQuantize;

  void validate() const;
};

// Clamp to [1,5] and snap to the nearest 1 + k*resolution; midpoints round up.
double quantize(double pred, double resolution);

// Argmax (first maximum on ties) or probability-weighted class score.
double decode_classification(std::span<const double> probs,
                             DecodeMode mode = DecodeMode::kArgmax);

double ensemble(double reg_pred, double cls_pred);

// Offsets predictions outside [low_threshold, high_threshold], then clamps to [1,5].
double correct(double pred, const PostConfig& cfg);

// decode -> ensemble -> correct -> quantize. Either input may be absent (not both).
double pipeline(std::optional<double> reg, std::span<const double> cls_probs,
                const PostConfig& cfg);

}  // namespace mospred
