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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mospred/dataset.hpp"

namespace mospred {

struct LengthEntry {
  std::string id;
  std::size_t length = 0;
};

struct BatchPlan {
  std::vector<std::vector<std::string>> batches;
  std::map<std::string, std::size_t> lengths;

  std::size_t max_length(std::size_t batch) const;
  std::size_t padding(std::size_t batch) const;
};

// Length-sorted compilation: ids sorted by (length, id) and cut into
// consecutive runs of batch_size. When the count does not divide evenly, the
// one short run is placed where it minimises padding (earliest on ties). The
// order of the batches is then shuffled with epoch_seed; membership does not
// depend on the seed.
BatchPlan plan_sorted(std::span<const LengthEntry> lengths, std::size_t batch_size,
                      std::uint64_t epoch_seed);

// Uniform random permutation chunked into batches.
BatchPlan plan_random(std::span<const LengthEntry> lengths, std::size_t batch_size,
                      std::uint64_t seed);

// Sum over batches of (batch max length - member length).
std::size_t padding_cost(const BatchPlan& plan);

// Throws InvalidInput unless every id appears exactly once, no batch exceeds
// batch_size and at most one batch is short.
void validate_plan(const BatchPlan& plan, std::size_t batch_size);

// B x Tmax x D zero-padded batch in double precision, batch-major.
struct PaddedBatch {
  std::size_t batch = 0;
  std::size_t max_len = 0;
  std::size_t dim = 0;
  std::vector<double> values;
  std::vector<std::size_t> lengths;

  double at(std::size_t b, std::size_t t, std::size_t d) const {
    return values[(b * max_len + t) * dim + d];
  }
};

PaddedBatch pad_and_mask(std::span<const FeatureSequence* const> sequences);
PaddedBatch pad_and_mask(std::span<const FeatureSequence> sequences);

// Inverse of pad_and_mask using the valid lengths.
std::vector<FeatureSequence> unpad(const PaddedBatch& batch);

}  // namespace mospred
