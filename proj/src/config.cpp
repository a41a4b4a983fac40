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

#include "mospred/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <type_traits>
#include <utility>

#include "mospred/error.hpp"

namespace mospred {
namespace {

struct Entry {
  std::string key;
  std::string description;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string format(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& s) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InvalidInput("config: bad value '" + s + "' for " + key);
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw InvalidInput("config: bad boolean '" + s + "' for " + key);
}

template <typename T>
Entry entry(std::string key, T RunConfig::*member, std::string description) {
  Entry e;
  e.key = key;
  e.description = std::move(description);
  e.get = [member](const RunConfig& c) -> std::string {
    if constexpr (std::is_same_v<T, std::string>) {
      return c.*member;
    } else if constexpr (std::is_same_v<T, bool>) {
      return c.*member ? "true" : "false";
    } else if constexpr (std::is_floating_point_v<T>) {
      return format(c.*member);
    } else {
      return std::to_string(c.*member);
    }
  };
  e.set = [member, key](RunConfig& c, const std::string& v) {
    if constexpr (std::is_same_v<T, std::string>) {
      c.*member = v;
    } else if constexpr (std::is_same_v<T, bool>) {
      c.*member = parse_bool(key, v);
    } else {
      c.*member = parse_number<T>(key, v);
    }
  };
  return e;
}

const std::vector<Entry>& table() {
  using C = RunConfig;
  static const std::vector<Entry> entries = {
      entry("manifest", &C::manifest, "manifest CSV for stats, plan-batches, predict and evaluate"),
      entry("train_manifest", &C::train_manifest, "training split manifest"),
      entry("val_manifest", &C::val_manifest, "validation split manifest"),
      entry("checkpoint", &C::checkpoint, "checkpoint to fine-tune"),
      entry("reg_checkpoint", &C::reg_checkpoint, "regression checkpoint"),
      entry("cls_checkpoint", &C::cls_checkpoint, "classification checkpoint"),
      entry("predictions", &C::predictions, "predictions CSV for evaluate"),
      entry("out", &C::out, "output directory"),
      entry("seed", &C::seed, "random seed"),
      entry("threads", &C::threads, "OpenMP threads, 0 = default"),
      entry("head", &C::head, "regression | classification"),
      entry("projection_dim", &C::projection_dim, "front projection width, 0 = input dim"),
      entry("lstm_hidden", &C::lstm_hidden, "LSTM units per layer"),
      entry("lstm_layers", &C::lstm_layers, "stacked LSTM layers"),
      entry("dense_hidden", &C::dense_hidden, "dense layer width"),
      entry("dropout_in", &C::dropout_in, "dropout before the LSTM stack"),
      entry("dropout_mid", &C::dropout_mid, "dropout after the LSTM stack"),
      entry("dropout_out", &C::dropout_out, "dropout before the output layer"),
      entry("dropout", &C::dropout, "enable dropout for the regression head"),
      entry("optimizer", &C::optimizer, "sgd_momentum (the only supported optimizer)"),
      entry("micro_batch", &C::micro_batch, "utterances per forward pass"),
      entry("accumulation_steps", &C::accumulation_steps, "micro-batches per optimizer update"),
      entry("momentum", &C::momentum, "SGD momentum"),
      entry("lr_schedule", &C::lr_schedule, "cyclical | fixed"),
      entry("base_lr", &C::base_lr, "cyclical schedule lower bound"),
      entry("max_lr", &C::max_lr, "cyclical schedule peak"),
      entry("cycle_len", &C::cycle_len, "updates per full triangle"),
      entry("fixed_lr", &C::fixed_lr, "learning rate when lr_schedule=fixed"),
      entry("patience", &C::patience, "non-improving validations before stopping"),
      entry("max_epochs", &C::max_epochs, "epoch cap per training phase"),
      entry("max_updates", &C::max_updates, "optimizer update cap, 0 = none"),
      entry("max_restarts", &C::max_restarts, "range-check restarts of regression training"),
      entry("coverage_low", &C::coverage_low, "predictions must reach at most this value"),
      entry("coverage_high", &C::coverage_high, "predictions must reach at least this value"),
      entry("loss", &C::loss, "regression loss: l1 | mse"),
      entry("clip_norm", &C::clip_norm, "global gradient norm clip, 0 = off"),
      entry("eval_batch", &C::eval_batch, "utterances per evaluation batch"),
      entry("target_loss", &C::target_loss, "stop once validation loss reaches this, 0 = off"),
      entry("cls_batch", &C::cls_batch, "classification phase-1 batch size"),
      entry("cls_lr", &C::cls_lr, "classification phase-1 learning rate"),
      entry("phase2_batch_scale", &C::phase2_batch_scale, "phase-2 batch multiplier"),
      entry("phase2_lr_scale", &C::phase2_lr_scale, "phase-2 learning-rate multiplier"),
      entry("phase3_batch", &C::phase3_batch, "phase-3 batch size"),
      entry("phase3_lr", &C::phase3_lr, "phase-3 learning rate, 0 = phase-2 rate"),
      entry("cls_frozen", &C::cls_frozen, "';'-separated layers frozen in phases 1-2"),
      entry("finetune_lr", &C::finetune_lr, "fine-tuning learning rate"),
      entry("finetune_batch", &C::finetune_batch, "fine-tuning batch size"),
      entry("finetune_epochs", &C::finetune_epochs, "fine-tuning epoch cap"),
      entry("resolution", &C::resolution, "quantization grid step"),
      entry("low_threshold", &C::low_threshold, "lower correction threshold"),
      entry("high_threshold", &C::high_threshold, "upper correction threshold"),
      entry("low_delta", &C::low_delta, "offset below the lower threshold"),
      entry("high_delta", &C::high_delta, "offset above the upper threshold"),
      entry("ensemble", &C::ensemble, "average regression and classification outputs"),
      entry("quantize", &C::quantize, "snap final predictions to the grid"),
      entry("decode", &C::decode, "classification decoding: argmax | expectation"),
      entry("post_order", &C::post_order, "correct_then_quantize | quantize_then_correct"),
      entry("kendall", &C::kendall, "tau_b | tau_a"),
      entry("eval_column", &C::eval_column, "predictions column scored by evaluate"),
      entry("bin_width", &C::bin_width, "histogram bin width"),
      entry("batching", &C::batching, "plan-batches policy: sorted | random"),
      entry("batch_size", &C::batch_size, "plan-batches batch size"),
  };
  return entries;
}

const Entry& find(const std::string& key) {
  for (const auto& e : table()) {
    if (e.key == key) return e;
  }
  throw InvalidInput("config: unknown key '" + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& e : table()) out.push_back(e.key);
    return out;
  }();
  return k;
}

std::string RunConfig::description(const std::string& key) { return find(key).description; }

void RunConfig::set(const std::string& key, const std::string& value) { find(key).set(*this, value); }

std::string RunConfig::get(const std::string& key) const { return find(key).get(*this); }

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string(), "cannot open config");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError(path.string() + ":" + std::to_string(n), "expected key=value");
    try {
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const InvalidInput& e) {
      throw FormatError(path.string() + ":" + std::to_string(n), e.what());
    }
  }
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  for (const auto& e : table()) out << e.key << '=' << e.get(*this) << '\n';
  return out.str();
}

void RunConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError(path.string(), "cannot write config");
  out << to_text();
}

void RunConfig::validate() const {
  head_kind();
  if (optimizer != "sgd_momentum")
    throw InvalidInput("config: optimizer '" + optimizer +
                       "' is not supported; only sgd_momentum is implemented");
  if (lr_schedule != "cyclical" && lr_schedule != "fixed")
    throw InvalidInput("config: lr_schedule must be cyclical or fixed");
  if (loss != "l1" && loss != "mse") throw InvalidInput("config: loss must be l1 or mse");
  if (decode != "argmax" && decode != "expectation")
    throw InvalidInput("config: decode must be argmax or expectation");
  if (post_order != "correct_then_quantize" && post_order != "quantize_then_correct")
    throw InvalidInput("config: post_order must be correct_then_quantize or quantize_then_correct");
  if (kendall != "tau_b" && kendall != "tau_a") throw InvalidInput("config: kendall must be tau_b or tau_a");
  if (batching != "sorted" && batching != "random")
    throw InvalidInput("config: batching must be sorted or random");
  if (micro_batch == 0 || accumulation_steps == 0 || batch_size == 0 || eval_batch == 0 ||
      cls_batch == 0 || phase3_batch == 0 || finetune_batch == 0)
    throw InvalidInput("config: batch sizes and accumulation steps must be positive");
  if (!(target_loss >= 0.0)) throw InvalidInput("config: target_loss must be non-negative");
  if (lr_schedule == "cyclical") train_config().schedule.validate();
  post_config().validate();
}

Head RunConfig::head_kind() const {
  if (head == "regression") return Head::kRegression;
  if (head == "classification") return Head::kClassification;
  throw InvalidInput("config: head must be regression or classification");
}

ModelConfig RunConfig::model_config(std::size_t input_dim, Head head_kind) const {
  ModelConfig c = head_kind == Head::kRegression ? ModelConfig::regression(input_dim)
                                                 : ModelConfig::classification(input_dim);
  c.projection_dim = projection_dim == 0 ? input_dim : projection_dim;
  c.lstm_hidden = lstm_hidden;
  c.lstm_layers = lstm_layers;
  c.dense_hidden = dense_hidden;
  c.dropout_in = dropout_in;
  c.dropout_mid = dropout_mid;
  c.dropout_out = dropout_out;
  c.dropout_enabled = head_kind == Head::kRegression && dropout;
  c.validate();
  return c;
}

TrainRunConfig RunConfig::train_config() const {
  TrainRunConfig t;
  t.micro_batch = micro_batch;
  t.accumulation_steps = accumulation_steps;
  t.seed = seed;
  t.max_restarts = max_restarts;
  t.patience = patience;
  t.max_epochs = max_epochs;
  t.max_updates = max_updates;
  t.momentum = momentum;
  t.cyclical = lr_schedule == "cyclical";
  t.schedule = CyclicalLr{base_lr, max_lr, cycle_len};
  t.fixed_lr = fixed_lr;
  t.loss = loss == "mse" ? RegressionLoss::kMse : RegressionLoss::kL1;
  t.clip_norm = clip_norm;
  t.coverage_low = coverage_low;
  t.coverage_high = coverage_high;
  t.eval_batch = eval_batch;
  t.target_loss = target_loss;
  return t;
}

ClassificationConfig RunConfig::classification_config() const {
  ClassificationConfig c;
  c.phase1_batch = cls_batch;
  c.phase1_lr = cls_lr;
  c.phase2_batch_scale = phase2_batch_scale;
  c.phase2_lr_scale = phase2_lr_scale;
  c.phase3_batch = phase3_batch;
  c.phase3_lr = phase3_lr;
  c.frozen_layers.clear();
  std::stringstream ss(cls_frozen);
  std::string layer;
  while (std::getline(ss, layer, ';')) {
    layer = trim(layer);
    if (!layer.empty()) c.frozen_layers.insert(layer);
  }
  c.momentum = momentum;
  c.patience = patience;
  c.max_epochs = max_epochs;
  c.max_updates = max_updates;
  c.clip_norm = clip_norm;
  c.seed = seed;
  c.eval_batch = eval_batch;
  return c;
}

FinetuneConfig RunConfig::finetune_config() const {
  FinetuneConfig f;
  f.lr = finetune_lr;
  f.batch = finetune_batch;
  f.patience = patience;
  f.max_epochs = finetune_epochs;
  f.max_updates = max_updates;
  f.momentum = momentum;
  f.loss = loss == "mse" ? RegressionLoss::kMse : RegressionLoss::kL1;
  f.clip_norm = clip_norm;
  f.seed = seed;
  f.eval_batch = eval_batch;
  return f;
}

PostConfig RunConfig::post_config() const {
  PostConfig p;
  p.resolution = resolution;
  p.low_threshold = low_threshold;
  p.high_threshold = high_threshold;
  p.low_delta = low_delta;
  p.high_delta = high_delta;
  p.ensemble = ensemble;
  p.quantize = quantize;
  p.decode = decode == "expectation" ? DecodeMode::kExpectation : DecodeMode::kArgmax;
  p.order = post_order == "quantize_then_correct" ? PostOrder::kQuantizeThenCorrect
                                                  : PostOrder::kCorrectThenQuantize;
  return p;
}

KendallVariant RunConfig::kendall_variant() const {
  return kendall == "tau_a" ? KendallVariant::kTauA : KendallVariant::kTauB;
}

}  // namespace mospred
