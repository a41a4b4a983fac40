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

#include "mospred/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "mospred/error.hpp"

namespace mospred {
namespace {

void check_pair(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size())
    throw InvalidInput(std::string(what) + ": length mismatch (" + std::to_string(a.size()) +
                       " vs " + std::to_string(b.size()) + ")");
}

// Sum over groups of equal values of t*(t-1)/2, for sorted input.
std::int64_t tied_pairs(std::span<const double> sorted) {
  std::int64_t total = 0;
  std::size_t i = 0;
  while (i < sorted.size()) {
    std::size_t j = i + 1;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const auto t = static_cast<std::int64_t>(j - i);
    total += t * (t - 1) / 2;
    i = j;
  }
  return total;
}

// Stable merge sort of v counting strict inversions.
std::int64_t sort_count_swaps(std::vector<double>& v, std::vector<double>& tmp, std::size_t lo,
                              std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t swaps = sort_count_swaps(v, tmp, lo, mid) + sort_count_swaps(v, tmp, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[i] <= v[j]) {
      tmp[k++] = v[i++];
    } else {
      swaps += static_cast<std::int64_t>(mid - i);
      tmp[k++] = v[j++];
    }
  }
  while (i < mid) tmp[k++] = v[i++];
  while (j < hi) tmp[k++] = v[j++];
  std::copy(tmp.begin() + static_cast<std::ptrdiff_t>(lo), tmp.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return swaps;
}

}  // namespace

MetricValue MetricValue::undefined() {
  return MetricValue{std::numeric_limits<double>::quiet_NaN(), false};
}

double mse(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, "mse");
  if (pred.empty()) throw InvalidInput("mse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

MetricValue lcc(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, "lcc");
  const std::size_t n = pred.size();
  if (n < 2) return MetricValue::undefined();
  double mp = 0.0, mt = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mp += pred[i];
    mt += truth[i];
  }
  mp /= static_cast<double>(n);
  mt /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = pred[i] - mp;
    const double dy = truth[i] - mt;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return MetricValue::undefined();
  return MetricValue{std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), true};
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i + 1;
    while (j < idx.size() && v[idx[j]] == v[idx[i]]) ++j;
    // Positions i..j-1 (0-based) share rank ((i+1) + j) / 2.
    const double r = static_cast<double>(i + 1 + j) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = r;
    i = j;
  }
  return ranks;
}

MetricValue srcc(std::span<const double> pred, std::span<const double> truth) {
  check_pair(pred, truth, "srcc");
  return lcc(average_ranks(pred), average_ranks(truth));
}

MetricValue ktau(std::span<const double> pred, std::span<const double> truth,
                 KendallVariant variant) {
  check_pair(pred, truth, "ktau");
  const std::size_t n = pred.size();
  if (n < 2) return MetricValue::undefined();
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(pred[i]) || std::isnan(truth[i])) throw InvalidInput("ktau: NaN input");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return pred[a] != pred[b] ? pred[a] < pred[b] : truth[a] < truth[b];
  });
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = pred[idx[i]];
    y[i] = truth[idx[i]];
  }
  const auto n0 = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  const std::int64_t n1 = tied_pairs(x);
  std::int64_t n3 = 0;  // pairs tied in both
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && x[j] == x[i] && y[j] == y[i]) ++j;
    const auto t = static_cast<std::int64_t>(j - i);
    n3 += t * (t - 1) / 2;
    i = j;
  }
  std::vector<double> tmp(n);
  const std::int64_t swaps = sort_count_swaps(y, tmp, 0, n);
  const std::int64_t n2 = tied_pairs(y);
  const std::int64_t c_minus_d = n0 - n1 - n2 + n3 - 2 * swaps;
  if (variant == KendallVariant::kTauA)
    return MetricValue{static_cast<double>(c_minus_d) / static_cast<double>(n0), true};
  if (n0 == n1 || n0 == n2) return MetricValue::undefined();
  return MetricValue{static_cast<double>(c_minus_d) /
                         std::sqrt(static_cast<double>(n0 - n1) * static_cast<double>(n0 - n2)),
                     true};
}

SystemAggregate system_level(std::span<const double> pred, std::span<const double> truth,
                             std::span<const std::string> system_ids) {
  check_pair(pred, truth, "system_level");
  if (system_ids.size() != pred.size()) throw InvalidInput("system_level: missing system ids");
  struct Acc {
    double pred = 0.0;
    double truth = 0.0;
    std::size_t n = 0;
  };
  std::map<std::string, Acc> groups;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    auto& g = groups[system_ids[i]];
    g.pred += pred[i];
    g.truth += truth[i];
    ++g.n;
  }
  SystemAggregate out;
  for (const auto& [sys, g] : groups) {
    out.systems.push_back(sys);
    out.pred.push_back(g.pred / static_cast<double>(g.n));
    out.truth.push_back(g.truth / static_cast<double>(g.n));
  }
  return out;
}

LevelReport evaluate_level(std::span<const double> pred, std::span<const double> truth,
                           KendallVariant variant) {
  LevelReport r;
  r.count = pred.size();
  r.mse = mse(pred, truth);
  r.lcc = lcc(pred, truth);
  r.srcc = srcc(pred, truth);
  r.ktau = ktau(pred, truth, variant);
  return r;
}

EvalReport evaluate(const std::map<std::string, double>& predictions, const Dataset& d,
                    KendallVariant variant) {
  std::vector<double> pred, truth;
  std::vector<std::string> systems;
  std::vector<std::string> missing;
  for (const auto& u : d.utterances) {
    auto it = predictions.find(u.id);
    if (it == predictions.end()) {
      missing.push_back(u.id);
      continue;
    }
    pred.push_back(it->second);
    truth.push_back(label_mean(u));
    systems.push_back(u.system_id);
  }
  if (!missing.empty()) {
    std::string list;
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? " " : "") + missing[i];
    if (missing.size() > 20) list += " ...";
    throw InvalidInput("evaluate: " + std::to_string(missing.size()) +
                       " utterances without predictions: " + list);
  }
  EvalReport r;
  r.utterance = evaluate_level(pred, truth, variant);
  const auto sys = system_level(pred, truth, systems);
  r.system = evaluate_level(sys.pred, sys.truth, variant);
  return r;
}

namespace {

std::string fmt_value(const MetricValue& m) {
  if (!m.defined) return "undefined";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", m.value);
  return buf;
}

std::string fmt_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

std::string format_report(const EvalReport& r) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof line, "%-10s %6s %10s %10s %10s %10s\n", "level", "n", "MSE", "LCC",
                "SRCC", "KTAU");
  out << line;
  for (const auto& [name, lvl] : {std::pair<const char*, const LevelReport&>{"utterance", r.utterance},
                                  std::pair<const char*, const LevelReport&>{"system", r.system}}) {
    std::snprintf(line, sizeof line, "%-10s %6zu %10s %10s %10s %10s\n", name, lvl.count,
                  fmt_value(lvl.mse).c_str(), fmt_value(lvl.lcc).c_str(),
                  fmt_value(lvl.srcc).c_str(), fmt_value(lvl.ktau).c_str());
    out << line;
  }
  return out.str();
}

std::string report_csv(const EvalReport& r) {
  std::ostringstream out;
  out << "level,metric,value\n";
  auto row = [&](const char* level, const char* metric, const std::string& v) {
    out << level << ',' << metric << ',' << v << '\n';
  };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return std::string(buf);
  };
  auto corr = [&](const MetricValue& m) { return m.defined ? num(m.value) : std::string("nan"); };
  for (const auto& [level, lvl] : {std::pair<const char*, const LevelReport&>{"utterance", r.utterance},
                                   std::pair<const char*, const LevelReport&>{"system", r.system}}) {
    row(level, "mse", num(lvl.mse));
    row(level, "lcc", corr(lvl.lcc));
    row(level, "srcc", corr(lvl.srcc));
    row(level, "ktau", corr(lvl.ktau));
  }
  return out.str();
}

}  // namespace mospred
