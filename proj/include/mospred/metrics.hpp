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

#include <map>
#include <span>
#include <string>
#include <vector>

#include "mospred/dataset.hpp"

namespace mospred {

// A correlation that may be undefined (constant input). value is NaN then.
struct MetricValue {
  double value = 0.0;
  bool defined = true;

  static MetricValue undefined();
};

double mse(std::span<const double> pred, std::span<const double> truth);

// Pearson linear correlation.
MetricValue lcc(std::span<const double> pred, std::span<const double> truth);

// 1-based ranks; tied values share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> v);

// Spearman: Pearson correlation of the average ranks.
MetricValue srcc(std::span<const double> pred, std::span<const double> truth);

enum class KendallVariant { kTauB, kTauA };

// Kendall tau in O(n log n). tau-b corrects for ties in either argument.
MetricValue ktau(std::span<const double> pred, std::span<const double> truth,
                 KendallVariant variant = KendallVariant::kTauB);

struct SystemAggregate {
  std::vector<std::string> systems;  // sorted
  std::vector<double> pred;
  std::vector<double> truth;
};

// Per-system means of predictions and ground truth.
SystemAggregate system_level(std::span<const double> pred, std::span<const double> truth,
                             std::span<const std::string> system_ids);

struct LevelReport {
  std::size_t count = 0;
  double mse = 0.0;
  MetricValue lcc;
  MetricValue srcc;
  MetricValue ktau;
};

struct EvalReport {
  LevelReport utterance;
  LevelReport system;
};

LevelReport evaluate_level(std::span<const double> pred, std::span<const double> truth,
                           KendallVariant variant = KendallVariant::kTauB);

// Predictions keyed by utterance id; every utterance of d must be covered.
EvalReport evaluate(const std::map<std::string, double>& predictions, const Dataset& d,
                    KendallVariant variant = KendallVariant::kTauB);

std::string format_report(const EvalReport& r);
// CSV with header level,metric,value.
std::string report_csv(const EvalReport& r);

}  // namespace mospred
