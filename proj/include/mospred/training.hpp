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
#include <functional>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mospred/dataset.hpp"
#include "mospred/model.hpp"

namespace mospred {

// Triangular cyclical learning rate: base at the start of every cycle, max at
// the half-way point.
struct CyclicalLr {
  double base_lr = 0.0005;
  double max_lr = 0.005;
  std::size_t cycle_len = 200;

  double operator()(std::size_t iteration) const;
  void validate() const;
};

struct OptimizerState {
  double momentum = 0.9;
  ModelParams velocity;

  static OptimizerState for_params(const ModelParams& params, double momentum);
};

// v <- mu*v + g;  p <- p - lr*v, skipping every tensor whose layer is frozen.
// clip_norm > 0 rescales the (unfrozen) gradient to at most that global L2 norm.
void sgd_momentum_step(ModelParams& params, const ModelParams& grads, OptimizerState& state,
                       double lr, const std::set<std::string>& frozen, double clip_norm = 0.0);

// Collects per-micro-batch mean gradients and yields their sample-weighted mean,
// which equals the mean-loss gradient of the concatenated batch.
class GradientAccumulator {
 public:
  explicit GradientAccumulator(std::size_t steps);

  void add(const ModelParams& mean_grad, std::size_t samples);
  bool ready() const { return count_ >= steps_; }
  std::size_t pending() const { return count_; }
  std::size_t samples() const { return samples_; }
  // Effective gradient of the current window; resets the window.
  ModelParams take();

 private:
  std::size_t steps_;
  std::size_t count_ = 0;
  std::size_t samples_ = 0;
  std::optional<ModelParams> sum_;
};

struct Objective {
  enum class Kind { kL1, kMse, kCrossEntropy };
  Kind kind = Kind::kL1;
  std::vector<double> class_weights;  // cross entropy only, 33 entries

  static Objective regression(RegressionLoss loss);
  static Objective classification(std::span<const double> weights);
};

struct BatchGradient {
  double loss = 0.0;
  std::size_t samples = 0;
  std::size_t clamped = 0;
  ModelParams grad;
};

// Mean loss and its gradient over one batch. targets are MOS values.
BatchGradient batch_gradient(const ModelParams& params,
                             std::span<const FeatureSequence* const> sequences,
                             std::span<const double> targets, const Objective& objective,
                             Mode mode, Rng* rng);

// Objective value of eval-mode predictions (N x O, as returned by predict()).
double objective_loss(std::span<const double> outputs, std::span<const double> targets,
                      const Objective& objective, std::size_t output_dim);

// In-memory features and targets of a labeled split.
struct TrainSplit {
  std::vector<std::string> ids;
  std::vector<std::string> systems;
  std::vector<FeatureSequence> features;
  std::vector<double> targets;

  static TrainSplit from_dataset(const Dataset& d);
  static TrainSplit from_dataset(const Dataset& d, std::vector<FeatureSequence> features);
  std::size_t size() const { return ids.size(); }
  std::vector<const FeatureSequence*> pointers() const;
};

struct HistoryRow {
  std::size_t iteration = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_loss;  // set on the last update of each epoch
  int phase = 1;
  std::size_t batch_size = 0;  // samples per optimizer update
  std::string frozen;          // ';'-joined layer names, or "none"
  std::string projection_checksum;
};

// Header: iteration,lr,train_loss,val_loss,phase,batch_size,frozen,projection_checksum
void write_history_csv(std::ostream& out, std::span<const HistoryRow> rows);

// FNV-1a over the projection layer's parameter bytes, as 16 hex digits.
std::string projection_checksum(const ModelParams& params);

struct TrainRunConfig {
  std::size_t micro_batch = 8;
  std::size_t accumulation_steps = 10;
  std::uint64_t seed = 0;
  std::size_t max_restarts = 3;
  std::size_t patience = 5;
  std::size_t max_epochs = 100;
  std::size_t max_updates = 0;  // 0 = no cap
  double momentum = 0.9;
  bool cyclical = true;
  CyclicalLr schedule;
  double fixed_lr = 0.0005;  // when cyclical is false
  RegressionLoss loss = RegressionLoss::kL1;
  double clip_norm = 0.0;
  double coverage_low = 1.5;
  double coverage_high = 4.5;
  std::size_t eval_batch = 32;
  double target_loss = 0.0;  // stop once validation loss is at or below; 0 = off
};

struct ClassificationConfig {
  std::size_t phase1_batch = 100;
  double phase1_lr = 0.0005;
  double phase2_batch_scale = 1.5;
  double phase2_lr_scale = 0.2;
  std::size_t phase3_batch = 8;
  double phase3_lr = 0.0;  // 0 keeps the phase-2 rate
  std::set<std::string> frozen_layers{"projection"};
  double momentum = 0.9;
  std::size_t patience = 5;
  std::size_t max_epochs = 100;  // per phase
  std::size_t max_updates = 0;   // per phase, 0 = no cap
  double clip_norm = 0.0;
  std::uint64_t seed = 0;
  std::size_t eval_batch = 32;

  std::size_t phase2_batch() const;
  double phase2_lr() const;
  double phase3_effective_lr() const;
};

struct FinetuneConfig {
  double lr = 0.0001;
  std::size_t batch = 10;
  std::size_t patience = 5;
  std::size_t max_epochs = 100;
  std::size_t max_updates = 0;
  double momentum = 0.9;
  RegressionLoss loss = RegressionLoss::kL1;
  double clip_norm = 0.0;
  std::uint64_t seed = 0;
  std::size_t eval_batch = 32;
};

struct TrainResult {
  ModelParams best;
  double best_val_loss = 0.0;
  std::vector<HistoryRow> history;
  std::size_t updates = 0;
  std::size_t restarts = 0;
  bool diverged = false;
  std::string divergence;  // reason when diverged
};

// Sorted-batch epochs with cyclical LR and gradient accumulation, early
// stopping on validation loss, then the prediction-range check: while the
// best model's validation predictions miss either end of the scale, training
// resumes unchanged (up to max_restarts).
TrainResult train_regression(const ModelConfig& model, const TrainSplit& train,
                             const TrainSplit& val, const TrainRunConfig& cfg);
TrainResult train_regression(ModelParams init, const TrainSplit& train, const TrainSplit& val,
                             const TrainRunConfig& cfg);

// Transfer from a regression model, then three phases: frozen projection at
// phase1 batch/lr, frozen projection at 1.5x batch and 0.2x lr, and finally all
// layers at batch 8. Class-weighted cross entropy throughout.
TrainResult train_classification(const ModelParams& regression, const TrainSplit& train,
                                 const TrainSplit& val, const ClassificationConfig& cfg);

// Continued regression training at a fixed small learning rate.
TrainResult finetune(const ModelParams& checkpoint, const TrainSplit& train, const TrainSplit& val,
                     const FinetuneConfig& cfg);

}  // namespace mospred
