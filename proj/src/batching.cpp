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

#include "mospred/batching.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "mospred/error.hpp"

namespace mospred {
namespace {

// Cuts order into consecutive batches of batch_size, except that the single
// short batch (if any) starts at position short_start.
BatchPlan chunk(std::vector<LengthEntry> order, std::size_t batch_size,
                std::size_t short_start) {
  if (batch_size == 0) throw InvalidInput("batch size must be positive");
  const std::size_t rem = order.size() % batch_size;
  BatchPlan plan;
  for (std::size_t i = 0; i < order.size();) {
    const std::size_t len = (rem != 0 && i == short_start) ? rem : batch_size;
    std::vector<std::string> batch;
    for (std::size_t j = i; j < i + len; ++j) batch.push_back(order[j].id);
    plan.batches.push_back(std::move(batch));
    i += len;
  }
  for (auto& e : order) {
    const std::string id = e.id;
    if (!plan.lengths.emplace(std::move(e.id), e.length).second)
      throw InvalidInput("duplicate id '" + id + "'");
  }
  return plan;
}

BatchPlan chunk(std::vector<LengthEntry> order, std::size_t batch_size) {
  const std::size_t n = order.size();
  return chunk(std::move(order), batch_size, batch_size == 0 ? 0 : n - n % batch_size);
}

// Start of the short batch that minimises padding over sorted lengths. Among
// partitions with these batch sizes the optimum is contiguous in sorted order,
// so only the short batch position is free.
std::size_t best_short_start(const std::vector<LengthEntry>& sorted, std::size_t batch_size) {
  const std::size_t n = sorted.size();
  const std::size_t rem = n % batch_size;
  if (rem == 0) return 0;
  std::vector<std::size_t> prefix(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + sorted[i].length;
  auto seg = [&](std::size_t b, std::size_t e) {
    return (e - b) * sorted[e - 1].length - (prefix[e] - prefix[b]);
  };
  const std::size_t full = n / batch_size;
  // head[j]: full batches before a short batch at j; tail[j]: full batches after it.
  std::vector<std::size_t> head(full + 1, 0), tail(full + 1, 0);
  for (std::size_t j = 0; j < full; ++j)
    head[j + 1] = head[j] + seg(j * batch_size, (j + 1) * batch_size);
  for (std::size_t j = full; j-- > 0;) {
    const std::size_t b = j * batch_size + rem;
    tail[j] = tail[j + 1] + seg(b, b + batch_size);
  }
  std::size_t best = 0, best_cost = 0;
  for (std::size_t j = 0; j <= full; ++j) {
    const std::size_t s = j * batch_size;
    const std::size_t cost = head[j] + seg(s, s + rem) + tail[j];
    if (j == 0 || cost < best_cost) {
      best = s;
      best_cost = cost;
    }
  }
  return best;
}

}  // namespace

std::size_t BatchPlan::max_length(std::size_t batch) const {
  std::size_t m = 0;
  for (const auto& id : batches.at(batch)) m = std::max(m, lengths.at(id));
  return m;
}

std::size_t BatchPlan::padding(std::size_t batch) const {
  const std::size_t m = max_length(batch);
  std::size_t pad = 0;
  for (const auto& id : batches.at(batch)) pad += m - lengths.at(id);
  return pad;
}

BatchPlan plan_sorted(std::span<const LengthEntry> lengths, std::size_t batch_size,
                      std::uint64_t epoch_seed) {
  std::vector<LengthEntry> order(lengths.begin(), lengths.end());
  std::sort(order.begin(), order.end(), [](const LengthEntry& a, const LengthEntry& b) {
    return a.length != b.length ? a.length < b.length : a.id < b.id;
  });
  if (batch_size == 0) throw InvalidInput("batch size must be positive");
  const std::size_t short_start = best_short_start(order, batch_size);
  BatchPlan plan = chunk(std::move(order), batch_size, short_start);
  std::mt19937_64 rng(epoch_seed);
  std::shuffle(plan.batches.begin(), plan.batches.end(), rng);
  return plan;
}

BatchPlan plan_random(std::span<const LengthEntry> lengths, std::size_t batch_size,
                      std::uint64_t seed) {
  std::vector<LengthEntry> order(lengths.begin(), lengths.end());
  // Canonical starting order so the plan depends only on the (id, length) set.
  std::sort(order.begin(), order.end(),
            [](const LengthEntry& a, const LengthEntry& b) { return a.id < b.id; });
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return chunk(std::move(order), batch_size);
}

std::size_t padding_cost(const BatchPlan& plan) {
  std::size_t total = 0;
  for (std::size_t b = 0; b < plan.batches.size(); ++b) total += plan.padding(b);
  return total;
}

void validate_plan(const BatchPlan& plan, std::size_t batch_size) {
  std::set<std::string> seen;
  for (std::size_t b = 0; b < plan.batches.size(); ++b) {
    const auto& batch = plan.batches[b];
    if (batch.empty()) throw InvalidInput("batch " + std::to_string(b) + " is empty");
    if (batch.size() > batch_size) throw InvalidInput("batch " + std::to_string(b) + " is oversized");
    for (const auto& id : batch) {
      if (!plan.lengths.contains(id)) throw InvalidInput("id '" + id + "' has no length");
      if (!seen.insert(id).second) throw InvalidInput("id '" + id + "' appears twice");
    }
  }
  if (seen.size() != plan.lengths.size()) throw InvalidInput("plan does not cover every id");
  // Only one batch may be short; sorted plans shuffle it away from the end.
  std::size_t short_batches = 0;
  for (const auto& batch : plan.batches) short_batches += batch.size() < batch_size ? 1 : 0;
  if (short_batches > 1) throw InvalidInput("more than one partial batch");
}

PaddedBatch pad_and_mask(std::span<const FeatureSequence* const> sequences) {
  PaddedBatch out;
  out.batch = sequences.size();
  if (sequences.empty()) return out;
  out.dim = sequences.front()->dim;
  for (const auto* s : sequences) {
    if (s->dim != out.dim)
      throw InvalidInput("pad_and_mask: mixed feature dimensions " + std::to_string(out.dim) +
                         " and " + std::to_string(s->dim));
    if (s->frames == 0) throw InvalidInput("pad_and_mask: empty sequence");
    out.max_len = std::max(out.max_len, s->frames);
    out.lengths.push_back(s->frames);
  }
  out.values.assign(out.batch * out.max_len * out.dim, 0.0);
  for (std::size_t b = 0; b < out.batch; ++b) {
    const auto& src = sequences[b]->values;
    double* dst = out.values.data() + b * out.max_len * out.dim;
    std::copy(src.begin(), src.end(), dst);
  }
  return out;
}

PaddedBatch pad_and_mask(std::span<const FeatureSequence> sequences) {
  std::vector<const FeatureSequence*> ptrs;
  ptrs.reserve(sequences.size());
  for (const auto& s : sequences) ptrs.push_back(&s);
  return pad_and_mask(std::span<const FeatureSequence* const>(ptrs));
}

std::vector<FeatureSequence> unpad(const PaddedBatch& batch) {
  std::vector<FeatureSequence> out(batch.batch);
  for (std::size_t b = 0; b < batch.batch; ++b) {
    auto& s = out[b];
    s.frames = batch.lengths[b];
    s.dim = batch.dim;
    const double* src = batch.values.data() + b * batch.max_len * batch.dim;
    s.values.assign(src, src + s.frames * s.dim);
  }
  return out;
}

}  // namespace mospred
