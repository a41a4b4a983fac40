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

#include "mospred/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "mospred/error.hpp"

namespace mospred {
namespace {

constexpr char kMagic[4] = {'M', 'O', 'S', 'M'};
constexpr std::uint8_t kVersion = 1;

static_assert(std::endian::native == std::endian::little);

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
  void u32(std::size_t v) {
    const auto x = static_cast<std::uint32_t>(v);
    out_.write(reinterpret_cast<const char*>(&x), 4);
  }
  void f32(double v) {
    const auto x = static_cast<float>(v);
    out_.write(reinterpret_cast<const char*>(&x), 4);
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
  std::uint8_t u8() {
    char c;
    need(in_.get(c));
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32() {
    std::uint32_t x;
    need(in_.read(reinterpret_cast<char*>(&x), 4));
    return x;
  }
  float f32() {
    float x;
    need(in_.read(reinterpret_cast<char*>(&x), 4));
    return x;
  }
  [[noreturn]] void fail(const std::string& what) const { throw FormatError(path_, what); }

 private:
  void need(const std::istream& s) const {
    if (!s) fail("truncated checkpoint");
  }
  std::istream& in_;
  std::string path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  for (const auto& t : params.tensors) {
    for (double v : t.values) {
      if (!std::isfinite(static_cast<float>(v)))
        throw NumericError("checkpoint", t.name + " is not finite at 32-bit precision");
    }
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path.string(), "cannot write checkpoint");
  Writer w(out);
  out.write(kMagic, 4);
  w.u8(kVersion);
  const ModelConfig& c = params.config;
  w.u32(c.input_dim);
  w.u32(c.projection_dim);
  w.u32(c.lstm_hidden);
  w.u32(c.lstm_layers);
  w.u32(c.dense_hidden);
  w.u8(static_cast<std::uint8_t>(c.head));
  w.u32(c.num_classes);
  w.f32(c.dropout_in);
  w.f32(c.dropout_mid);
  w.f32(c.dropout_out);
  w.u8(c.dropout_enabled ? 1 : 0);
  w.u32(params.tensors.size());
  for (const auto& t : params.tensors) {
    w.u32(t.shape.size());
    for (auto d : t.shape) w.u32(d);
    for (double v : t.values) w.f32(v);
  }
  if (!out) throw FormatError(path.string(), "write failed");
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string(), "cannot open checkpoint");
  Reader r(in, path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) r.fail("bad magic");
  const auto version = r.u8();
  if (version != kVersion) r.fail("unsupported checkpoint version " + std::to_string(version));
  ModelConfig c;
  c.input_dim = r.u32();
  c.projection_dim = r.u32();
  c.lstm_hidden = r.u32();
  c.lstm_layers = r.u32();
  c.dense_hidden = r.u32();
  const auto head = r.u8();
  if (head > 1) r.fail("unknown head " + std::to_string(head));
  c.head = static_cast<Head>(head);
  c.num_classes = r.u32();
  // Dropout rates are dyadic in practice; the float round trip is exact for them.
  c.dropout_in = r.f32();
  c.dropout_mid = r.f32();
  c.dropout_out = r.f32();
  c.dropout_enabled = r.u8() != 0;
  ModelParams p;
  try {
    p = zeros(c);
  } catch (const Error& e) {
    r.fail(std::string("invalid model config: ") + e.what());
  }
  if (r.u32() != p.tensors.size()) r.fail("tensor count does not match config");
  for (auto& t : p.tensors) {
    const auto rank = r.u32();
    if (rank != t.shape.size()) r.fail("rank mismatch in " + t.name);
    for (auto d : t.shape) {
      if (r.u32() != d) r.fail("shape mismatch in " + t.name);
    }
    for (auto& v : t.values) {
      v = r.f32();
      if (!std::isfinite(v)) r.fail("non-finite value in " + t.name);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) r.fail("trailing bytes");
  return p;
}

ModelParams round_to_checkpoint_precision(ModelParams params) {
  for (auto& t : params.tensors) {
    for (auto& v : t.values) v = static_cast<float>(v);
  }
  return params;
}

}  // namespace mospred
