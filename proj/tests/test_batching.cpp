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

#include <algorithm>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "mospred/batching.hpp"
#include "mospred/error.hpp"

using namespace mospred;

namespace {

std::vector<LengthEntry> example_lengths() {
  return {{"u1", 10}, {"u2", 3}, {"u3", 7}, {"u4", 5}};
}

std::vector<LengthEntry> random_lengths(std::size_t n, std::size_t lo, std::size_t hi,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(lo, hi);
  std::vector<LengthEntry> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({"id" + std::to_string(i), len(rng)});
  return out;
}

std::size_t cost_of(const std::vector<std::vector<std::size_t>>& batches) {
  std::size_t c = 0;
  for (const auto& b : batches) {
    const std::size_t m = *std::max_element(b.begin(), b.end());
    for (std::size_t x : b) c += m - x;
  }
  return c;
}

std::set<std::vector<std::string>> as_set(const BatchPlan& p) {
  std::set<std::vector<std::string>> s;
  for (auto b : p.batches) {
    std::sort(b.begin(), b.end());
    s.insert(b);
  }
  return s;
}

}  // namespace

TEST_CASE("sorted plan on the four-utterance example") {
  const auto lengths = example_lengths();
  const BatchPlan p = plan_sorted(lengths, 2, 0);
  const std::set<std::vector<std::string>> expected{{"u2", "u4"}, {"u1", "u3"}};
  CHECK(as_set(p) == expected);
  CHECK(padding_cost(p) == 5);

  // All three pairings of four items, costed independently.
  const std::vector<std::size_t> v{10, 3, 7, 5};
  std::vector<std::size_t> costs{cost_of({{v[0], v[1]}, {v[2], v[3]}}),
                                 cost_of({{v[0], v[2]}, {v[1], v[3]}}),
                                 cost_of({{v[0], v[3]}, {v[1], v[2]}})};
  std::sort(costs.begin(), costs.end());
  CHECK(costs == std::vector<std::size_t>{5, 9, 9});
  CHECK(padding_cost(p) == costs.front());
}

TEST_CASE("sorted plan edge cases") {
  std::vector<LengthEntry> equal{{"a", 4}, {"b", 4}, {"c", 4}};
  CHECK(padding_cost(plan_sorted(equal, 2, 9)) == 0);

  const auto all = plan_sorted(example_lengths(), 10, 3);
  REQUIRE(all.batches.size() == 1);
  CHECK(all.batches[0].size() == 4);

  std::vector<LengthEntry> one{{"x", 7}};
  const auto single = plan_sorted(one, 3, 0);
  REQUIRE(single.batches.size() == 1);
  CHECK(single.batches[0] == std::vector<std::string>{"x"});

  CHECK_THROWS_AS(plan_sorted(example_lengths(), 0, 0), InvalidInput);
  std::vector<LengthEntry> dup{{"a", 1}, {"a", 2}};
  CHECK_THROWS_AS(plan_sorted(dup, 1, 0), InvalidInput);
}

TEST_CASE("sorted plan membership is seed independent and order invariant") {
  auto lengths = random_lengths(103, 5, 60, 4);
  const auto base = as_set(plan_sorted(lengths, 8, 1));
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::shuffle(lengths.begin(), lengths.end(), std::mt19937_64(seed + 100));
    const auto p = plan_sorted(lengths, 8, seed);
    CHECK(as_set(p) == base);
    validate_plan(p, 8);
  }
  std::shuffle(lengths.begin(), lengths.end(), std::mt19937_64(55));
  const auto a = plan_sorted(lengths, 8, 77);
  std::sort(lengths.begin(), lengths.end(),
            [](const LengthEntry& x, const LengthEntry& y) { return x.id < y.id; });
  CHECK(plan_sorted(lengths, 8, 77).batches == a.batches);
}

TEST_CASE("no single swap between batches lowers the sorted plan's padding") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto lengths = random_lengths(37 + seed % 5, 1, 30, seed);
    const std::size_t bs = 2 + seed % 5;
    const BatchPlan p = plan_sorted(lengths, bs, seed);
    std::vector<std::vector<std::size_t>> batches;
    for (const auto& b : p.batches) {
      std::vector<std::size_t> l;
      for (const auto& id : b) l.push_back(p.lengths.at(id));
      batches.push_back(l);
    }
    const std::size_t base = cost_of(batches);
    CHECK(base == padding_cost(p));
    for (std::size_t a = 0; a < batches.size(); ++a) {
      for (std::size_t b = a + 1; b < batches.size(); ++b) {
        for (std::size_t i = 0; i < batches[a].size(); ++i) {
          for (std::size_t j = 0; j < batches[b].size(); ++j) {
            auto swapped = batches;
            std::swap(swapped[a][i], swapped[b][j]);
            CHECK(base <= cost_of(swapped));
          }
        }
      }
    }
  }
}

TEST_CASE("sorted plan matches an exhaustive search on small inputs") {
  // Every assignment of ids to batches with the same size profile.
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const std::size_t n = 4 + seed % 4, bs = 2 + seed % 2;
    const auto lengths = random_lengths(n, 1, 12, seed + 500);
    const BatchPlan p = plan_sorted(lengths, bs, seed);
    std::vector<std::size_t> sizes;
    for (const auto& b : p.batches) sizes.push_back(b.size());
    std::vector<std::size_t> slot;
    for (std::size_t b = 0; b < sizes.size(); ++b) slot.insert(slot.end(), sizes[b], b);
    std::sort(slot.begin(), slot.end());
    std::size_t best = SIZE_MAX;
    do {
      std::vector<std::vector<std::size_t>> batches(sizes.size());
      for (std::size_t i = 0; i < n; ++i) batches[slot[i]].push_back(lengths[i].length);
      best = std::min(best, cost_of(batches));
    } while (std::next_permutation(slot.begin(), slot.end()));
    CHECK(padding_cost(p) == best);
  }
}

TEST_CASE("sorted plan pads less than random plans") {
  const auto lengths = random_lengths(300, 20, 200, 8);
  const double sorted = static_cast<double>(padding_cost(plan_sorted(lengths, 8, 0)));
  double random = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) random += padding_cost(plan_random(lengths, 8, s));
  CHECK(sorted <= random / 10.0);
}

TEST_CASE("random plan") {
  const auto lengths = random_lengths(50, 1, 20, 3);
  const auto a = plan_random(lengths, 6, 42);
  const auto b = plan_random(lengths, 6, 42);
  CHECK(a.batches == b.batches);
  validate_plan(a, 6);
  CHECK(a.batches.size() == 9);
  CHECK(plan_random(lengths, 6, 43).batches != a.batches);

  std::vector<LengthEntry> one{{"x", 7}};
  const auto single = plan_random(one, 4, 1);
  REQUIRE(single.batches.size() == 1);
  CHECK(padding_cost(single) == 0);
}

TEST_CASE("padding_cost") {
  BatchPlan p;
  p.lengths = {{"u1", 10}, {"u2", 3}, {"u3", 7}, {"u4", 5}};
  p.batches = {{"u2", "u4"}, {"u3", "u1"}};
  CHECK(padding_cost(p) == 5);
  CHECK(p.max_length(1) == 10);
  CHECK(p.padding(0) == 2);
  p.batches = {{"u1"}, {"u2"}, {"u3"}, {"u4"}};
  CHECK(padding_cost(p) == 0);
}

TEST_CASE("validate_plan") {
  BatchPlan p;
  p.lengths = {{"a", 1}, {"b", 2}, {"c", 3}};
  p.batches = {{"a", "b"}, {"c"}};
  validate_plan(p, 2);
  p.batches = {{"a"}, {"b", "c"}};
  validate_plan(p, 2);
  p.batches = {{"a"}, {"b"}, {"c"}};
  CHECK_THROWS_AS(validate_plan(p, 2), InvalidInput);
  p.batches = {{"a", "b", "c"}};
  CHECK_THROWS_AS(validate_plan(p, 2), InvalidInput);
  p.batches = {{"a", "b"}, {"b"}};
  CHECK_THROWS_AS(validate_plan(p, 2), InvalidInput);
  p.batches = {{"a", "b"}};
  CHECK_THROWS_AS(validate_plan(p, 2), InvalidInput);
}

TEST_CASE("pad_and_mask and unpad") {
  std::mt19937_64 rng(5);
  std::vector<FeatureSequence> seqs{mospred::testing::random_sequence(rng, 3, 2),
                                    mospred::testing::random_sequence(rng, 5, 2)};
  const PaddedBatch b = pad_and_mask(seqs);
  CHECK(b.batch == 2);
  CHECK(b.max_len == 5);
  CHECK(b.dim == 2);
  CHECK(b.values.size() == 20);
  CHECK(b.lengths == std::vector<std::size_t>{3, 5});
  for (std::size_t t = 3; t < 5; ++t) {
    CHECK(b.at(0, t, 0) == 0.0);
    CHECK(b.at(0, t, 1) == 0.0);
  }
  for (std::size_t t = 0; t < 3; ++t) CHECK(b.at(0, t, 1) == seqs[0].values[t * 2 + 1]);

  const auto back = unpad(b);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].frames == seqs[i].frames);
    CHECK(back[i].values == seqs[i].values);
  }

  const PaddedBatch solo = pad_and_mask(std::span<const FeatureSequence>(seqs.data() + 1, 1));
  CHECK(solo.max_len == 5);
  CHECK(solo.values.size() == 10);

  std::vector<FeatureSequence> mixed{mospred::testing::random_sequence(rng, 3, 2),
                                     mospred::testing::random_sequence(rng, 3, 4)};
  CHECK_THROWS_AS(pad_and_mask(mixed), InvalidInput);
  CHECK(pad_and_mask(std::span<const FeatureSequence>{}).batch == 0);
}
