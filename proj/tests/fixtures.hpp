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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mospred/dataset.hpp"
#include "mospred/model.hpp"
#include "mospred/training.hpp"

namespace mospred::testing {

// Directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::uint64_t counter = 0;
    std::random_device rd;
    const auto base = std::filesystem::temp_directory_path();
    for (;;) {
      path_ = base / ("mospred-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
      if (std::filesystem::create_directory(path_)) break;
    }
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline FeatureSequence random_sequence(std::mt19937_64& rng, std::size_t frames, std::size_t dim,
                                       double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  FeatureSequence s;
  s.frames = frames;
  s.dim = dim;
  s.values.resize(frames * dim);
  for (auto& v : s.values) v = static_cast<float>(n(rng));
  return s;
}

// Utterances whose frames scatter around a per-utterance latent vector; the
// target is an affine function of the mean-pooled frames, clamped to [1,5].
struct SyntheticSet {
  std::vector<std::string> ids;
  std::vector<std::string> systems;
  std::vector<FeatureSequence> features;
  std::vector<double> targets;

  TrainSplit split() const {
    TrainSplit s;
    s.ids = ids;
    s.systems = systems;
    s.features = features;
    s.targets = targets;
    return s;
  }
};

inline SyntheticSet make_synthetic(std::size_t n, std::size_t dim, std::size_t min_len,
                                   std::size_t max_len, std::uint64_t seed,
                                   double noise = 0.3) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  std::vector<double> w(dim);
  for (auto& x : w) x = gauss(rng);
  double norm = 0.0;
  for (double x : w) norm += x * x;
  norm = std::sqrt(norm);
  for (auto& x : w) x *= 1.2 / norm;

  SyntheticSet s;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> z(dim);
    for (auto& x : z) x = gauss(rng);
    FeatureSequence f;
    f.frames = len(rng);
    f.dim = dim;
    f.values.resize(f.frames * dim);
    std::vector<double> pooled(dim, 0.0);
    for (std::size_t t = 0; t < f.frames; ++t) {
      for (std::size_t d = 0; d < dim; ++d) {
        const float v = static_cast<float>(z[d] + noise * gauss(rng));
        f.values[t * dim + d] = v;
        pooled[d] += v;
      }
    }
    double y = 3.0;
    for (std::size_t d = 0; d < dim; ++d) y += w[d] * pooled[d] / static_cast<double>(f.frames);
    s.ids.push_back("utt" + std::to_string(1000 + i));
    s.systems.push_back("sys" + std::to_string(i % 8));
    s.features.push_back(std::move(f));
    s.targets.push_back(std::clamp(y, 1.0, 5.0));
  }
  return s;
}

// Writes MOSF files and a manifest with mean_mos labels; returns the manifest path.
inline std::filesystem::path write_fixture(const std::filesystem::path& dir,
                                           const SyntheticSet& s, const std::string& name) {
  std::filesystem::create_directories(dir / (name + "_feats"));
  Dataset d;
  for (std::size_t i = 0; i < s.ids.size(); ++i) {
    const std::string rel = name + "_feats/" + s.ids[i] + ".mosf";
    write_features(dir / rel, s.features[i]);
    Utterance u;
    u.id = s.ids[i];
    u.system_id = s.systems[i];
    u.label = MosLabel{s.targets[i], std::nullopt};
    u.feature_path = rel;
    d.utterances.push_back(std::move(u));
  }
  const auto path = dir / (name + ".csv");
  write_manifest(path, d);
  return path;
}

inline ModelConfig small_config(std::size_t dim, Head head, std::size_t hidden) {
  ModelConfig c = head == Head::kRegression ? ModelConfig::regression(dim)
                                            : ModelConfig::classification(dim);
  c.projection_dim = dim;
  c.lstm_hidden = hidden;
  c.dense_hidden = hidden;
  return c;
}

}  // namespace mospred::testing
