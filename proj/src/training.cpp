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

#include "mospred/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <unordered_map>

#include "mospred/batching.hpp"
#include "mospred/error.hpp"

namespace mospred {

double CyclicalLr::operator()(std::size_t iteration) const {
  const double half = static_cast<double>(cycle_len) / 2.0;
  const double pos = static_cast<double>(iteration % cycle_len);
  return base_lr + (max_lr - base_lr) * (1.0 - std::abs(pos - half) / half);
}

void CyclicalLr::validate() const {
  if (!(base_lr > 0.0 && base_lr <= max_lr))
    throw InvalidInput("cyclical lr: need 0 < base_lr <= max_lr");
  if (cycle_len < 2 || cycle_len % 2 != 0)
    throw InvalidInput("cyclical lr: cycle length must be even and positive");
}

OptimizerState OptimizerState::for_params(const ModelParams& params, double momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidInput("momentum must be in [0,1)");
  return OptimizerState{momentum, zeros_like(params)};
}

void sgd_momentum_step(ModelParams& params, const ModelParams& grads, OptimizerState& state,
                       double lr, const std::set<std::string>& frozen, double clip_norm) {
  if (grads.tensors.size() != params.tensors.size() ||
      state.velocity.tensors.size() != params.tensors.size())
    throw InternalError("sgd_momentum_step: parameter/gradient shape mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    const auto& g = grads.tensors[i];
    if (g.size() != params.tensors[i].size())
      throw InternalError("sgd_momentum_step: size mismatch in " + g.name);
    if (frozen.contains(g.layer)) continue;
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!std::isfinite(g.values[k]))
        throw NumericError("optimizer", "non-finite gradient in " + g.name + "[" +
                                            std::to_string(k) + "]");
      sq += g.values[k] * g.values[k];
    }
  }
  double scale = 1.0;
  if (clip_norm > 0.0) {
    const double norm = std::sqrt(sq);
    if (norm > clip_norm) scale = clip_norm / norm;
  }
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& p = params.tensors[i];
    if (frozen.contains(p.layer)) continue;
    const auto& g = grads.tensors[i].values;
    auto& v = state.velocity.tensors[i].values;
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = state.momentum * v[k] + scale * g[k];
      p.values[k] -= lr * v[k];
    }
  }
}

GradientAccumulator::GradientAccumulator(std::size_t steps) : steps_(steps) {
  if (steps == 0) throw InvalidInput("accumulation steps must be positive");
}

void GradientAccumulator::add(const ModelParams& mean_grad, std::size_t samples) {
  if (!sum_) sum_ = zeros_like(mean_grad);
  const double w = static_cast<double>(samples);
  for (std::size_t i = 0; i < mean_grad.tensors.size(); ++i) {
    auto& dst = sum_->tensors[i].values;
    const auto& src = mean_grad.tensors[i].values;
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += w * src[k];
  }
  ++count_;
  samples_ += samples;
}

ModelParams GradientAccumulator::take() {
  if (!sum_ || samples_ == 0) throw InternalError("GradientAccumulator: empty window");
  ModelParams out = std::move(*sum_);
  const double inv = 1.0 / static_cast<double>(samples_);
  for (auto& t : out.tensors) {
    for (auto& v : t.values) v *= inv;
  }
  sum_.reset();
  count_ = 0;
  samples_ = 0;
  return out;
}

Objective Objective::regression(RegressionLoss loss) {
  return Objective{loss == RegressionLoss::kL1 ? Kind::kL1 : Kind::kMse, {}};
}

Objective Objective::classification(std::span<const double> weights) {
  if (weights.size() != static_cast<std::size_t>(kNumClasses))
    throw InvalidInput("classification objective needs 33 class weights");
  return Objective{Kind::kCrossEntropy, std::vector<double>(weights.begin(), weights.end())};
}

namespace {

std::vector<int> to_classes(std::span<const double> targets) {
  std::vector<int> out(targets.size());
  std::transform(targets.begin(), targets.end(), out.begin(), mos_to_class);
  return out;
}

LossResult apply_objective(std::span<const double> outputs, std::span<const double> targets,
                           const Objective& objective) {
  switch (objective.kind) {
    case Objective::Kind::kL1:
      return loss_regression(outputs, targets, RegressionLoss::kL1);
    case Objective::Kind::kMse:
      return loss_regression(outputs, targets, RegressionLoss::kMse);
    case Objective::Kind::kCrossEntropy:
      return loss_classification(outputs, to_classes(targets), objective.class_weights);
  }
  throw InternalError("unknown objective");
}

}  // namespace

BatchGradient batch_gradient(const ModelParams& params,
                             std::span<const FeatureSequence* const> sequences,
                             std::span<const double> targets, const Objective& objective,
                             Mode mode, Rng* rng) {
  if (sequences.size() != targets.size() || sequences.empty())
    throw InvalidInput("batch_gradient: sequence/target count mismatch");
  const ForwardTrace tr = forward(params, pad_and_mask(sequences), mode, rng);
  const LossResult lr = apply_objective(tr.output, targets, objective);
  BatchGradient out;
  out.loss = lr.loss;
  out.samples = sequences.size();
  out.clamped = lr.clamped;
  out.grad = backward(params, tr, lr.grad);
  return out;
}

double objective_loss(std::span<const double> outputs, std::span<const double> targets,
                      const Objective& objective, std::size_t output_dim) {
  if (outputs.size() != targets.size() * output_dim)
    throw InvalidInput("objective_loss: output/target shape mismatch");
  return apply_objective(outputs, targets, objective).loss;
}

TrainSplit TrainSplit::from_dataset(const Dataset& d) {
  return from_dataset(d, load_all_features(d));
}

TrainSplit TrainSplit::from_dataset(const Dataset& d, std::vector<FeatureSequence> features) {
  if (features.size() != d.utterances.size())
    throw InvalidInput("TrainSplit: feature count does not match dataset");
  TrainSplit s;
  for (const auto& u : d.utterances) {
    s.ids.push_back(u.id);
    s.systems.push_back(u.system_id);
    s.targets.push_back(label_mean(u));
  }
  s.features = std::move(features);
  return s;
}

std::vector<const FeatureSequence*> TrainSplit::pointers() const {
  std::vector<const FeatureSequence*> out;
  out.reserve(features.size());
  for (const auto& f : features) out.push_back(&f);
  return out;
}

void write_history_csv(std::ostream& out, std::span<const HistoryRow> rows) {
  out << "iteration,lr,train_loss,val_loss,phase,batch_size,frozen,projection_checksum\n";
  char buf[96];
  for (const auto& r : rows) {
    out << r.iteration << ',';
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,", r.lr, r.train_loss);
    out << buf;
    if (r.val_loss) {
      std::snprintf(buf, sizeof buf, "%.17g", *r.val_loss);
      out << buf;
    }
    out << ',' << r.phase << ',' << r.batch_size << ',' << r.frozen << ','
        << r.projection_checksum << '\n';
  }
}

std::string projection_checksum(const ModelParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : params.tensors) {
    if (t.layer != "projection") continue;
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.values.data());
    for (std::size_t i = 0; i < t.values.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string join_frozen(const std::set<std::string>& frozen) {
  if (frozen.empty()) return "none";
  std::string s;
  for (const auto& f : frozen) s += (s.empty() ? "" : ";") + f;
  return s;
}

struct PhaseSpec {
  int phase = 1;
  std::set<std::string> frozen;
  std::size_t micro_batch = 8;
  std::size_t accumulation_steps = 1;
  std::function<double(std::size_t)> lr;
  std::size_t patience = 5;
  std::size_t max_epochs = 100;
  std::size_t max_updates = 0;
  double clip_norm = 0.0;
  std::size_t eval_batch = 32;
  double target_loss = 0.0;
  Objective objective;
};

// Shared state of one training run, carried across phases and restarts.
struct RunState {
  ModelParams params;
  OptimizerState optimizer;
  Rng rng;
  std::uint64_t seed = 0;
  std::size_t iteration = 0;  // optimizer updates so far
  std::size_t epochs = 0;     // epochs so far, salts the batch order
  ModelParams best;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<double> best_val_outputs;
  std::vector<HistoryRow> history;
  bool diverged = false;
  std::string divergence;
};

enum class PhaseEnd { kEarlyStop, kEpochCap, kUpdateCap, kTarget, kDiverged };

struct ValResult {
  double loss;
  std::vector<double> outputs;
};

ValResult validate(const ModelParams& params, const TrainSplit& val, const PhaseSpec& spec) {
  const auto ptrs = val.pointers();
  ValResult r;
  r.outputs = predict(params, ptrs, spec.eval_batch);
  r.loss = objective_loss(r.outputs, val.targets, spec.objective, params.config.output_dim());
  return r;
}

// Evaluates the starting point, then trains until early stopping or a cap.
// Improvements are recorded in state.best.
PhaseEnd run_phase(RunState& st, const TrainSplit& train, const TrainSplit& val,
                   const PhaseSpec& spec, std::size_t& updates_left) {
  if (train.size() == 0 || val.size() == 0) throw InvalidInput("training needs nonempty splits");
  const std::string frozen = join_frozen(spec.frozen);
  for (const auto& f : spec.frozen) {
    const auto names = st.params.layer_names();
    if (std::find(names.begin(), names.end(), f) == names.end())
      throw InvalidInput("unknown layer to freeze: " + f);
  }

  std::vector<LengthEntry> lengths;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < train.size(); ++i) {
    lengths.push_back({train.ids[i], train.features[i].frames});
    index.emplace(train.ids[i], i);
  }

  auto consider = [&](ValResult v) -> bool {
    if (std::isnan(v.loss)) {
      st.diverged = true;
      st.divergence = "validation loss is NaN";
      return false;
    }
    if (v.loss < st.best_val) {
      st.best_val = v.loss;
      st.best = st.params;
      st.best_val_outputs = std::move(v.outputs);
      return true;
    }
    return false;
  };

  auto checked_validate = [&]() -> std::optional<ValResult> {
    try {
      return validate(st.params, val, spec);
    } catch (const NumericError& e) {
      st.diverged = true;
      st.divergence = e.what();
      return std::nullopt;
    }
  };

  double phase_best = std::numeric_limits<double>::infinity();
  {
    auto checked = checked_validate();
    if (!checked) return PhaseEnd::kDiverged;
    ValResult v = std::move(*checked);
    phase_best = v.loss;
    consider(std::move(v));
    if (st.diverged) return PhaseEnd::kDiverged;
  }

  std::size_t bad_epochs = 0;
  for (std::size_t epoch = 0; epoch < spec.max_epochs; ++epoch) {
    const BatchPlan plan = plan_sorted(lengths, spec.micro_batch, mix_seed(st.seed, st.epochs++));
    GradientAccumulator acc(spec.accumulation_steps);
    double window_loss = 0.0;
    bool capped = false;
    try {
      for (std::size_t b = 0; b < plan.batches.size(); ++b) {
        std::vector<const FeatureSequence*> seqs;
        std::vector<double> targets;
        for (const auto& id : plan.batches[b]) {
          const std::size_t i = index.at(id);
          seqs.push_back(&train.features[i]);
          targets.push_back(train.targets[i]);
        }
        const BatchGradient bg =
            batch_gradient(st.params, seqs, targets, spec.objective, Mode::kTrain, &st.rng);
        window_loss += bg.loss * static_cast<double>(bg.samples);
        acc.add(bg.grad, bg.samples);
        // A partial window at the end of the epoch is flushed as a smaller update.
        if (!acc.ready() && b + 1 < plan.batches.size()) continue;

        HistoryRow row;
        row.iteration = st.iteration;
        row.lr = spec.lr(st.iteration);
        row.train_loss = window_loss / static_cast<double>(acc.samples());
        row.batch_size = acc.samples();
        row.phase = spec.phase;
        row.frozen = frozen;
        sgd_momentum_step(st.params, acc.take(), st.optimizer, row.lr, spec.frozen, spec.clip_norm);
        row.projection_checksum = projection_checksum(st.params);
        st.history.push_back(std::move(row));
        window_loss = 0.0;
        ++st.iteration;
        if (updates_left != std::numeric_limits<std::size_t>::max() && --updates_left == 0) {
          capped = true;
          break;
        }
      }
    } catch (const NumericError& e) {
      st.diverged = true;
      st.divergence = e.what();
      return PhaseEnd::kDiverged;
    }

    auto checked = checked_validate();
    if (!checked) return PhaseEnd::kDiverged;
    ValResult v = std::move(*checked);
    if (!st.history.empty()) st.history.back().val_loss = v.loss;
    const double loss = v.loss;
    consider(std::move(v));
    if (st.diverged) return PhaseEnd::kDiverged;
    if (spec.target_loss > 0.0 && loss <= spec.target_loss) return PhaseEnd::kTarget;
    if (capped) return PhaseEnd::kUpdateCap;
    if (loss < phase_best) {
      phase_best = loss;
      bad_epochs = 0;
    } else if (++bad_epochs > spec.patience) {
      return PhaseEnd::kEarlyStop;
    }
  }
  return PhaseEnd::kEpochCap;
}

std::size_t update_budget(std::size_t max_updates) {
  return max_updates == 0 ? std::numeric_limits<std::size_t>::max() : max_updates;
}

RunState start_run(ModelParams params, double momentum, std::uint64_t seed) {
  if (!params.all_finite()) throw InvalidInput("initial parameters are not finite");
  RunState st;
  st.params = std::move(params);
  st.rng = Rng(mix_seed(seed, 0xd40u));
  st.seed = seed;
  st.optimizer = OptimizerState::for_params(st.params, momentum);
  st.best = st.params;
  return st;
}

TrainResult finish(RunState& st) {
  TrainResult r;
  r.best = std::move(st.best);
  r.best_val_loss = st.best_val;
  r.history = std::move(st.history);
  r.updates = st.iteration;
  r.diverged = st.diverged;
  r.divergence = st.divergence;
  return r;
}

}  // namespace

TrainResult train_regression(const ModelConfig& model, const TrainSplit& train,
                             const TrainSplit& val, const TrainRunConfig& cfg) {
  if (model.head != Head::kRegression) throw InvalidInput("train_regression needs a regression head");
  return train_regression(init_params(model, cfg.seed), train, val, cfg);
}

TrainResult train_regression(ModelParams init, const TrainSplit& train, const TrainSplit& val,
                             const TrainRunConfig& cfg) {
  if (init.config.head != Head::kRegression)
    throw InvalidInput("train_regression needs a regression head");
  if (cfg.cyclical) cfg.schedule.validate();
  if (cfg.micro_batch == 0) throw InvalidInput("micro batch must be positive");
  RunState st = start_run(std::move(init), cfg.momentum, cfg.seed);

  PhaseSpec spec;
  spec.phase = 1;
  spec.micro_batch = cfg.micro_batch;
  spec.accumulation_steps = cfg.accumulation_steps;
  if (cfg.cyclical) {
    spec.lr = cfg.schedule;
  } else {
    spec.lr = [lr = cfg.fixed_lr](std::size_t) { return lr; };
  }
  spec.patience = cfg.patience;
  spec.max_epochs = cfg.max_epochs;
  spec.clip_norm = cfg.clip_norm;
  spec.eval_batch = cfg.eval_batch;
  spec.target_loss = cfg.target_loss;
  spec.objective = Objective::regression(cfg.loss);

  std::size_t budget = update_budget(cfg.max_updates);
  std::size_t restarts = 0;
  for (;;) {
    const PhaseEnd end = run_phase(st, train, val, spec, budget);
    if (end != PhaseEnd::kEarlyStop) break;
    // Range check on the best model's validation predictions.
    const auto& out = st.best_val_outputs;
    if (out.empty()) break;
    const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
    const bool covered = *lo <= cfg.coverage_low && *hi >= cfg.coverage_high;
    if (covered || restarts >= cfg.max_restarts) break;
    ++restarts;
  }
  TrainResult r = finish(st);
  r.restarts = restarts;
  return r;
}

std::size_t ClassificationConfig::phase2_batch() const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(phase1_batch) * phase2_batch_scale));
}

double ClassificationConfig::phase2_lr() const { return phase1_lr * phase2_lr_scale; }

double ClassificationConfig::phase3_effective_lr() const {
  return phase3_lr > 0.0 ? phase3_lr : phase2_lr();
}

TrainResult train_classification(const ModelParams& regression, const TrainSplit& train,
                                 const TrainSplit& val, const ClassificationConfig& cfg) {
  if (regression.config.head != Head::kRegression)
    throw InvalidInput("train_classification needs a regression checkpoint");
  ModelConfig cls_cfg = regression.config;
  cls_cfg.head = Head::kClassification;
  cls_cfg.num_classes = kNumClasses;
  cls_cfg.dropout_enabled = false;
  const auto weights = class_weights(train.targets);

  RunState st = start_run(transfer_from_regression(regression, cls_cfg, mix_seed(cfg.seed, 0xc1a5u)),
                          cfg.momentum, cfg.seed);

  const struct {
    std::size_t batch;
    double lr;
    bool frozen;
  } phases[3] = {{cfg.phase1_batch, cfg.phase1_lr, true},
                 {cfg.phase2_batch(), cfg.phase2_lr(), true},
                 {cfg.phase3_batch, cfg.phase3_effective_lr(), false}};

  for (int p = 0; p < 3; ++p) {
    if (phases[p].batch == 0) throw InvalidInput("classification phase batch must be positive");
    PhaseSpec spec;
    spec.phase = p + 1;
    if (phases[p].frozen) spec.frozen = cfg.frozen_layers;
    spec.micro_batch = phases[p].batch;
    spec.accumulation_steps = 1;
    spec.lr = [lr = phases[p].lr](std::size_t) { return lr; };
    spec.patience = cfg.patience;
    spec.max_epochs = cfg.max_epochs;
    spec.clip_norm = cfg.clip_norm;
    spec.eval_batch = cfg.eval_batch;
    spec.objective = Objective::classification(weights);
    if (p > 0) {
      // Each phase resumes from the best model so far with fresh momentum.
      st.params = st.best;
      st.optimizer = OptimizerState::for_params(st.params, cfg.momentum);
    }
    std::size_t budget = update_budget(cfg.max_updates);
    if (run_phase(st, train, val, spec, budget) == PhaseEnd::kDiverged) break;
  }
  return finish(st);
}

TrainResult finetune(const ModelParams& checkpoint, const TrainSplit& train, const TrainSplit& val,
                     const FinetuneConfig& cfg) {
  if (checkpoint.config.head != Head::kRegression)
    throw InvalidInput("finetune needs a regression checkpoint");
  if (cfg.batch == 0) throw InvalidInput("finetune batch must be positive");
  RunState st = start_run(checkpoint, cfg.momentum, cfg.seed);
  PhaseSpec spec;
  spec.phase = 1;
  spec.micro_batch = cfg.batch;
  spec.accumulation_steps = 1;
  spec.lr = [lr = cfg.lr](std::size_t) { return lr; };
  spec.patience = cfg.patience;
  spec.max_epochs = cfg.max_epochs;
  spec.clip_norm = cfg.clip_norm;
  spec.eval_batch = cfg.eval_batch;
  spec.objective = Objective::regression(cfg.loss);
  std::size_t budget = update_budget(cfg.max_updates);
  run_phase(st, train, val, spec, budget);
  return finish(st);
}

}  // namespace mospred
