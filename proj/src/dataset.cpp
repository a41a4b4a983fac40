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

#include "mospred/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <exception>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "csv.hpp"
#include "mospred/error.hpp"

namespace mospred {
namespace fs = std::filesystem;

namespace {

constexpr char kFeatureMagic[4] = {'M', 'O', 'S', 'F'};
constexpr std::uint8_t kFeatureVersion = 0x01;
constexpr std::size_t kFeatureHeaderBytes = 4 + 1 + 4 + 4;

static_assert(std::endian::native == std::endian::little,
              "feature files are little-endian; big-endian hosts need byte swapping");

std::uint32_t read_u32(const unsigned char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

std::vector<int> parse_votes(const std::string& field, const std::string& where) {
  std::vector<int> votes;
  if (field.empty()) return votes;
  std::stringstream ss(field);
  std::string tok;
  while (std::getline(ss, tok, ';')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(tok, &used);
    } catch (const std::exception&) {
      throw FormatError(where, "bad rating '" + tok + "'");
    }
    if (used != tok.size()) throw FormatError(where, "bad rating '" + tok + "'");
    if (v < kMinScore || v > kMaxScore)
      throw FormatError(where, "rating " + tok + " outside 1..5");
    votes.push_back(v);
  }
  return votes;
}

}  // namespace

bool Dataset::labeled() const {
  return std::all_of(utterances.begin(), utterances.end(),
                     [](const Utterance& u) { return u.label.has_value(); });
}

std::size_t Dataset::feature_dim() const {
  return utterances.empty() ? 0 : utterances.front().feature_dim;
}

MosLabel aggregate_ratings(std::span<const int> ratings) {
  if (ratings.empty()) throw InvalidInput("aggregate_ratings: empty rating set");
  // Integer moments keep the result exact and independent of vote order.
  long long sum = 0;
  long long sq = 0;
  for (int r : ratings) {
    if (r < kMinScore || r > kMaxScore)
      throw InvalidInput("aggregate_ratings: rating " + std::to_string(r) + " outside 1..5");
    sum += r;
    sq += static_cast<long long>(r) * r;
  }
  const auto n = static_cast<long long>(ratings.size());
  const double var = static_cast<double>(n * sq - sum * sum) / static_cast<double>(n * n);
  return MosLabel{static_cast<double>(sum) / static_cast<double>(n), std::sqrt(var)};
}

double resolution_for(std::size_t n_ratings) {
  if (n_ratings == 0) throw InvalidInput("resolution_for: zero ratings");
  return 1.0 / static_cast<double>(n_ratings);
}

int mos_to_class(double mos) {
  if (!(mos >= kMinScore && mos <= kMaxScore))
    throw InvalidInput("mos_to_class: " + std::to_string(mos) + " outside [1,5]");
  return static_cast<int>(std::lround((mos - 1.0) / kClassStep)) + 1;
}

double class_to_mos(int k) {
  if (k < 1 || k > kNumClasses)
    throw InvalidInput("class_to_mos: class " + std::to_string(k) + " outside [1,33]");
  return 1.0 + static_cast<double>(k - 1) * kClassStep;
}

double label_mean(const Utterance& u) {
  if (!u.label) throw InvalidInput("utterance '" + u.id + "' has no label");
  return u.label->mean;
}

std::vector<HistogramBin> mos_histogram(const Dataset& d, double bin_width) {
  if (!(bin_width > 0.0)) throw InvalidInput("mos_histogram: bin width must be positive");
  const auto nbins = static_cast<std::size_t>(std::floor(4.0 / bin_width + 1e-9)) + 1;
  std::vector<HistogramBin> bins(nbins);
  for (std::size_t k = 0; k < nbins; ++k) bins[k].center = 1.0 + static_cast<double>(k) * bin_width;
  for (const auto& u : d.utterances) {
    if (!u.label) throw InvalidInput("mos_histogram: utterance '" + u.id + "' is unlabeled");
    const double pos = std::floor((u.label->mean - 1.0) / bin_width + 0.5);
    const auto k = static_cast<std::size_t>(std::clamp(pos, 0.0, static_cast<double>(nbins - 1)));
    ++bins[k].count;
  }
  return bins;
}

double range_fraction(const Dataset& d, double lo, double hi, bool lo_closed, bool hi_closed) {
  if (d.utterances.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& u : d.utterances) {
    const double m = label_mean(u);
    const bool above = lo_closed ? m >= lo : m > lo;
    const bool below = hi_closed ? m <= hi : m < hi;
    if (above && below) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(d.utterances.size());
}

std::vector<ScatterPoint> mean_std_scatter(const Dataset& d) {
  std::map<std::pair<double, double>, std::size_t> groups;
  for (const auto& u : d.utterances) {
    if (!u.ratings || u.ratings->empty())
      throw InvalidInput("mean_std_scatter: utterance '" + u.id + "' has no ratings");
    const MosLabel l = aggregate_ratings(*u.ratings);
    ++groups[{l.mean, *l.std_dev}];
  }
  std::vector<ScatterPoint> out;
  out.reserve(groups.size());
  for (const auto& [key, count] : groups) out.push_back({key.first, key.second, count});
  return out;
}

std::array<double, kNumClasses> class_weights(const Dataset& d) {
  std::vector<double> means;
  means.reserve(d.utterances.size());
  for (const auto& u : d.utterances) means.push_back(label_mean(u));
  return class_weights(means);
}

std::array<double, kNumClasses> class_weights(std::span<const double> label_means) {
  std::array<std::size_t, kNumClasses> counts{};
  for (double m : label_means) ++counts[mos_to_class(m) - 1];
  std::array<double, kNumClasses> w{};
  double total = 0.0;
  std::size_t observed = 0;
  for (int k = 0; k < kNumClasses; ++k) {
    if (counts[k] == 0) continue;
    w[k] = 1.0 / static_cast<double>(counts[k]);
    total += w[k];
    ++observed;
  }
  if (observed == 0) return w;
  const double scale = static_cast<double>(observed) / total;
  for (auto& x : w) x *= scale;
  return w;
}

Dataset load_manifest(const fs::path& path, Split split) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), "cannot open manifest");
  const auto rows = csv::read(in);
  if (rows.empty()) throw FormatError(path.string(), "empty manifest");
  const std::vector<std::string> expected{"utterance_id", "system_id", "ratings", "mean_mos",
                                          "feature_path"};
  if (rows.front() != expected)
    throw FormatError(path.string(),
                      "header must be utterance_id,system_id,ratings,mean_mos,feature_path");

  Dataset d;
  d.split = split;
  const fs::path base = path.parent_path();
  std::set<std::string> seen;
  std::set<std::size_t> vote_counts;
  bool any_without_votes = false;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& row = rows[i];
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != expected.size())
      throw FormatError(where, "expected 5 fields, got " + std::to_string(row.size()));
    Utterance u;
    u.id = row[0];
    u.system_id = row[1];
    if (u.id.empty()) throw FormatError(where, "empty utterance_id");
    if (!seen.insert(u.id).second) throw FormatError(where, "duplicate utterance_id '" + u.id + "'");

    auto votes = parse_votes(row[2], where);
    if (!votes.empty()) {
      u.label = aggregate_ratings(votes);
      vote_counts.insert(votes.size());
      u.ratings = std::move(votes);
    } else {
      any_without_votes = true;
      if (!row[3].empty()) {
        double m = 0.0;
        try {
          m = std::stod(row[3]);
        } catch (const std::exception&) {
          throw FormatError(where, "bad mean_mos '" + row[3] + "'");
        }
        if (!(m >= kMinScore && m <= kMaxScore))
          throw FormatError(where, "mean_mos " + row[3] + " outside [1,5]");
        u.label = MosLabel{m, std::nullopt};
      }
    }

    fs::path fp = row[4];
    if (fp.is_relative()) fp = base / fp;
    u.feature_path = fp.string();
    if (!fs::exists(fp))
      throw FormatError(where, "utterance '" + u.id + "' references missing feature file " +
                                   u.feature_path);
    const auto h = read_feature_header(fp);
    u.num_frames = h.frames;
    u.feature_dim = h.dim;
    if (!d.utterances.empty() && u.feature_dim != d.utterances.front().feature_dim)
      throw FormatError(where, "feature dimension " + std::to_string(u.feature_dim) +
                                   " differs from " +
                                   std::to_string(d.utterances.front().feature_dim));
    d.utterances.push_back(std::move(u));
  }
  if (vote_counts.size() == 1 && !any_without_votes)
    d.resolution = resolution_for(*vote_counts.begin());
  return d;
}

void write_manifest(const fs::path& path, const Dataset& d) {
  std::ofstream out(path);
  if (!out) throw FormatError(path.string(), "cannot write manifest");
  out << "utterance_id,system_id,ratings,mean_mos,feature_path\n";
  for (const auto& u : d.utterances) {
    std::string votes;
    if (u.ratings) {
      for (std::size_t i = 0; i < u.ratings->size(); ++i) {
        if (i) votes += ';';
        votes += std::to_string((*u.ratings)[i]);
      }
    }
    std::string mean;
    if (u.label && !u.ratings) {
      std::ostringstream ss;
      ss.precision(17);
      ss << u.label->mean;
      mean = ss.str();
    }
    out << csv::quote(u.id) << ',' << csv::quote(u.system_id) << ',' << votes << ',' << mean
        << ',' << csv::quote(u.feature_path) << '\n';
  }
}

FeatureHeader read_feature_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string(), "cannot open feature file");
  unsigned char buf[kFeatureHeaderBytes];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof buf))
    throw FormatError(path.string(), "truncated header");
  if (std::memcmp(buf, kFeatureMagic, 4) != 0) throw FormatError(path.string(), "bad magic");
  if (buf[4] != kFeatureVersion)
    throw FormatError(path.string(), "unsupported version " + std::to_string(buf[4]));
  FeatureHeader h{read_u32(buf + 5), read_u32(buf + 9)};
  if (h.frames == 0 || h.dim == 0) throw FormatError(path.string(), "zero-sized shape");
  return h;
}

FeatureSequence read_features(const fs::path& path) {
  const FeatureHeader h = read_feature_header(path);
  std::ifstream in(path, std::ios::binary);
  in.seekg(static_cast<std::streamoff>(kFeatureHeaderBytes));
  FeatureSequence seq;
  seq.frames = h.frames;
  seq.dim = h.dim;
  seq.values.resize(static_cast<std::size_t>(h.frames) * h.dim);
  const auto bytes = static_cast<std::streamsize>(seq.values.size() * sizeof(float));
  if (!in.read(reinterpret_cast<char*>(seq.values.data()), bytes))
    throw FormatError(path.string(), "truncated payload: expected " +
                                         std::to_string(seq.values.size()) + " floats");
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError(path.string(), "trailing bytes after payload");
  for (std::size_t i = 0; i < seq.values.size(); ++i) {
    if (!std::isfinite(seq.values[i]))
      throw FormatError(path.string(), "non-finite value at frame " + std::to_string(i / h.dim));
  }
  return seq;
}

void write_features(const fs::path& path, const FeatureSequence& seq) {
  if (seq.values.size() != seq.frames * seq.dim)
    throw InvalidInput("write_features: payload size does not match shape");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path.string(), "cannot write feature file");
  out.write(kFeatureMagic, 4);
  out.put(static_cast<char>(kFeatureVersion));
  const auto t = static_cast<std::uint32_t>(seq.frames);
  const auto dim = static_cast<std::uint32_t>(seq.dim);
  out.write(reinterpret_cast<const char*>(&t), 4);
  out.write(reinterpret_cast<const char*>(&dim), 4);
  out.write(reinterpret_cast<const char*>(seq.values.data()),
            static_cast<std::streamsize>(seq.values.size() * sizeof(float)));
  if (!out) throw FormatError(path.string(), "write failed");
}

FeatureSequence load_features(const Utterance& u) {
  FeatureSequence seq = read_features(u.feature_path);
  if (u.num_frames != 0 && seq.frames != u.num_frames)
    throw FormatError(u.feature_path, "frame count changed since manifest load");
  return seq;
}

std::vector<FeatureSequence> load_all_features(const Dataset& d) {
  const auto n = static_cast<std::int64_t>(d.utterances.size());
  std::vector<FeatureSequence> out(d.utterances.size());
  std::vector<std::exception_ptr> errors(d.utterances.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      out[i] = load_features(d.utterances[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  // First failure in manifest order, independent of scheduling.
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace mospred
