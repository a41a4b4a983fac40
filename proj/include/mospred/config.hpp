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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mospred/metrics.hpp"
#include "mospred/model.hpp"
#include "mospred/postprocess.hpp"
#include "mospred/training.hpp"

namespace mospred {

// Every tunable of the toolkit, addressable by a flat key. The text form is
// one `key=value` per line; '#' starts a comment.
struct RunConfig {
  // paths
  std::string manifest;
  std::string train_manifest;
  std::string val_manifest;
  std::string checkpoint;
  std::string reg_checkpoint;
  std::string cls_checkpoint;
  std::string predictions;
  std::string out = "out";

  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 = OpenMP default

  // model
  std::string head = "regression";
  std::size_t projection_dim = 0;  // 0 = input dimension
  std::size_t lstm_hidden = 128;
  std::size_t lstm_layers = 2;
  std::size_t dense_hidden = 128;
  double dropout_in = 0.375;
  double dropout_mid = 0.75;
  double dropout_out = 0.75;
  bool dropout = true;  // regression head only

  // regression training
  std::string optimizer = "sgd_momentum";
  std::size_t micro_batch = 8;
  std::size_t accumulation_steps = 10;
  double momentum = 0.9;
  std::string lr_schedule = "cyclical";
  double base_lr = 0.0005;
  double max_lr = 0.005;
  std::size_t cycle_len = 200;
  double fixed_lr = 0.0005;
  std::size_t patience = 5;
  std::size_t max_epochs = 100;
  std::size_t max_updates = 0;
  std::size_t max_restarts = 3;
  double coverage_low = 1.5;
  double coverage_high = 4.5;
  std::string loss = "l1";
  double clip_norm = 0.0;
  std::size_t eval_batch = 32;
  double target_loss = 0.0;  // 0 = train until early stopping

  // classification phases
  std::size_t cls_batch = 100;
  double cls_lr = 0.0005;
  double phase2_batch_scale = 1.5;
  double phase2_lr_scale = 0.2;
  std::size_t phase3_batch = 8;
  double phase3_lr = 0.0;
  std::string cls_frozen = "projection";

  // fine-tuning
  double finetune_lr = 0.0001;
  std::size_t finetune_batch = 10;
  std::size_t finetune_epochs = 100;

  // post-processing
  double resolution = 0.125;
  double low_threshold = 1.3;
  double high_threshold = 4.2;
  double low_delta = -0.05;
  double high_delta = 0.25;
  bool ensemble = true;
  bool quantize = true;
  std::string decode = "argmax";
  std::string post_order = "correct_then_quantize";

  // evaluation and statistics
  std::string kendall = "tau_b";
  std::string eval_column = "final";
  double bin_width = 0.125;

  // batch planning
  std::string batching = "sorted";
  std::size_t batch_size = 8;

  static const std::vector<std::string>& keys();
  static std::string description(const std::string& key);

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  // Applies a key=value file on top of the current values.
  void load_file(const std::filesystem::path& path);
  std::string to_text() const;
  void save(const std::filesystem::path& path) const;

  void validate() const;

  ModelConfig model_config(std::size_t input_dim, Head head_kind) const;
  Head head_kind() const;
  TrainRunConfig train_config() const;
  ClassificationConfig classification_config() const;
  FinetuneConfig finetune_config() const;
  PostConfig post_config() const;
  KendallVariant kendall_variant() const;
};

}  // namespace mospred
