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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mospred {

inline constexpr int kMinScore = 1;
inline constexpr int kMaxScore = 5;
inline constexpr int kNumClasses = 33;
inline constexpr double kClassStep = 0.125;

// Per-utterance listener votes, each in {1..5}.
using RatingSet = std::vector<int>;

struct MosLabel {
  double mean = 0.0;
  // Population standard deviation of the votes; absent when only a
  // precomputed mean was supplied.
  std::optional<double> std_dev;
};

struct Utterance {
  std::string id;
  std::string system_id;
  std::optional<RatingSet> ratings;
  std::optional<MosLabel> label;
  std::string feature_path;  // resolved against the manifest directory
  std::size_t num_frames = 0;
  std::size_t feature_dim = 0;
};

enum class Split { kTrain, kValidation, kTest };

struct Dataset {
  std::vector<Utterance> utterances;
  Split split = Split::kTrain;
  // Grid step of the averaged scores: 1/n for a common vote count n, 0 when
  // counts vary across utterances or no votes are present.
  double resolution = 0.0;

  bool labeled() const;
  std::size_t feature_dim() const;
};

// T x D frame features, stored at file precision.
struct FeatureSequence {
  std::size_t frames = 0;
  std::size_t dim = 0;
  std::vector<float> values;  // row-major, frames * dim

  std::span<const float> frame(std::size_t t) const {
    return {values.data() + t * dim, dim};
  }
};

MosLabel aggregate_ratings(std::span<const int> ratings);
double resolution_for(std::size_t n_ratings);
int mos_to_class(double mos);
double class_to_mos(int k);

struct HistogramBin {
  double center = 0.0;
  std::size_t count = 0;
};

// Bins are centred on 1 + k*bin_width; each label falls in its nearest bin.
std::vector<HistogramBin> mos_histogram(const Dataset& d, double bin_width);

// Fraction of labels inside the interval; endpoints open or closed as requested.
double range_fraction(const Dataset& d, double lo, double hi, bool lo_closed = true,
                      bool hi_closed = true);

struct ScatterPoint {
  double mean = 0.0;
  double std_dev = 0.0;
  std::size_t count = 0;
};

// One entry per distinct (mean, std) pair, sorted by mean then std.
std::vector<ScatterPoint> mean_std_scatter(const Dataset& d);

// Reciprocal-frequency weights over the 33 score classes, normalised to mean 1
// over observed classes. Index 0 holds class 1.
std::array<double, kNumClasses> class_weights(const Dataset& d);
std::array<double, kNumClasses> class_weights(std::span<const double> label_means);

// Manifest CSV: utterance_id,system_id,ratings,mean_mos,feature_path
Dataset load_manifest(const std::filesystem::path& path, Split split = Split::kTrain);
void write_manifest(const std::filesystem::path& path, const Dataset& d);

// MOSF binary feature files.
struct FeatureHeader {
  std::uint32_t frames = 0;
  std::uint32_t dim = 0;
};
FeatureHeader read_feature_header(const std::filesystem::path& path);
FeatureSequence read_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const FeatureSequence& seq);

FeatureSequence load_features(const Utterance& u);
// Loads every utterance's features (in parallel); result order matches d.utterances.
std::vector<FeatureSequence> load_all_features(const Dataset& d);

// Label mean of an utterance, throwing if it has none.
double label_mean(const Utterance& u);

}  // namespace mospred
