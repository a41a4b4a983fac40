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

#include <filesystem>

#include "mospred/model.hpp"

namespace mospred {

// MOSM checkpoint, little-endian:
//   "MOSM", u8 version (1),
//   config: u32 input_dim, projection_dim, lstm_hidden, lstm_layers, dense_hidden,
//           u8 head, u32 num_classes, f32 dropout_in, dropout_mid, dropout_out,
//           u8 dropout_enabled,
//   u32 tensor count, then per tensor in declaration order:
//           u32 rank, u32 dims[rank], f32 payload.
// Parameters are stored at 32-bit precision.
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

// Round-trips every parameter through 32-bit storage.
ModelParams round_to_checkpoint_precision(ModelParams params);

}  // namespace mospred
