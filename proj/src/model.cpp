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

#include "mospred/model.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>

#include "mospred/error.hpp"
#include "mospred/kernels.hpp"

namespace mospred {
namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

ParamTensor make_tensor(std::string name, std::string layer, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return ParamTensor{std::move(name), std::move(layer), std::move(shape), std::vector<double>(n, 0.0)};
}

void check_finite(std::span<const double> v, const char* layer) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(layer, "non-finite activation");
  }
}

// Inverted dropout: keep with probability 1-p, scale kept units by 1/(1-p).
std::vector<double> draw_mask(std::size_t n, double p, Rng& rng) {
  std::vector<double> mask(n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep = 1.0 / (1.0 - p);
  for (auto& m : mask) m = u(rng) < p ? 0.0 : keep;
  return mask;
}

void apply_mask(std::span<double> v, std::span<const double> mask) {
  if (mask.empty()) return;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= mask[i];
}

}  // namespace

ModelConfig ModelConfig::regression(std::size_t input_dim) {
  ModelConfig c;
  c.input_dim = input_dim;
  c.projection_dim = input_dim;
  c.head = Head::kRegression;
  c.dropout_enabled = true;
  return c;
}

ModelConfig ModelConfig::classification(std::size_t input_dim) {
  ModelConfig c = regression(input_dim);
  c.head = Head::kClassification;
  c.dropout_enabled = false;
  return c;
}

void ModelConfig::validate() const {
  if (input_dim == 0 || projection_dim == 0 || lstm_hidden == 0 || lstm_layers == 0 ||
      dense_hidden == 0 || num_classes < 2)
    throw InvalidInput("model config: all dimensions must be positive");
  for (double p : {dropout_in, dropout_mid, dropout_out}) {
    if (!(p >= 0.0 && p < 1.0)) throw InvalidInput("model config: dropout must be in [0,1)");
  }
  if (head == Head::kClassification && dropout_enabled)
    throw InvalidInput("model config: the classification head trains without dropout");
}

std::size_t ModelParams::num_values() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

std::vector<std::string> ModelParams::layer_names() const {
  std::vector<std::string> names;
  for (const auto& t : tensors) {
    if (names.empty() || names.back() != t.layer) names.push_back(t.layer);
  }
  return names;
}

bool ModelParams::all_finite() const {
  for (const auto& t : tensors) {
    for (double v : t.values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

ModelParams zeros(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.config = cfg;
  const std::size_t D = cfg.input_dim, P = cfg.projection_dim, H = cfg.lstm_hidden;
  p.tensors.push_back(make_tensor("projection.weight", "projection", {P, D}));
  p.tensors.push_back(make_tensor("projection.bias", "projection", {P}));
  for (std::size_t l = 0; l < cfg.lstm_layers; ++l) {
    const std::string layer = "lstm" + std::to_string(l);
    const std::size_t in = l == 0 ? P : H;
    p.tensors.push_back(make_tensor(layer + ".w_ih", layer, {4 * H, in}));
    p.tensors.push_back(make_tensor(layer + ".w_hh", layer, {4 * H, H}));
    p.tensors.push_back(make_tensor(layer + ".bias", layer, {4 * H}));
  }
  p.tensors.push_back(make_tensor("dense.weight", "dense", {cfg.dense_hidden, H}));
  p.tensors.push_back(make_tensor("dense.bias", "dense", {cfg.dense_hidden}));
  p.tensors.push_back(make_tensor("output.weight", "output", {cfg.output_dim(), cfg.dense_hidden}));
  p.tensors.push_back(make_tensor("output.bias", "output", {cfg.output_dim()}));
  return p;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams g = p;
  for (auto& t : g.tensors) std::fill(t.values.begin(), t.values.end(), 0.0);
  return g;
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p = zeros(cfg);
  Rng rng(seed);
  for (auto& t : p.tensors) {
    if (t.shape.size() != 2) continue;  // biases start at zero
    const double bound = 1.0 / std::sqrt(static_cast<double>(t.shape[1]));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : t.values) v = u(rng);
  }
  if (cfg.projection_dim == cfg.input_dim) {
    auto& w = p.projection_weight().values;
    for (auto& v : w) v *= 0.1;
    for (std::size_t i = 0; i < cfg.input_dim; ++i) w[i * cfg.input_dim + i] += 1.0;
  }
  const std::size_t H = cfg.lstm_hidden;
  for (std::size_t l = 0; l < cfg.lstm_layers; ++l) {
    auto& b = p.tensors[4 + 3 * l].values;
    std::fill(b.begin() + static_cast<std::ptrdiff_t>(H), b.begin() + static_cast<std::ptrdiff_t>(2 * H), 1.0);
  }
  return p;
}

ModelParams transfer_from_regression(const ModelParams& reg, const ModelConfig& cls_cfg,
                                     std::uint64_t seed) {
  const ModelConfig& r = reg.config;
  if (r.head != Head::kRegression || cls_cfg.head != Head::kClassification)
    throw InvalidInput("transfer_from_regression: needs a regression source and classification target");
  if (r.input_dim != cls_cfg.input_dim || r.projection_dim != cls_cfg.projection_dim ||
      r.lstm_hidden != cls_cfg.lstm_hidden || r.lstm_layers != cls_cfg.lstm_layers ||
      r.dense_hidden != cls_cfg.dense_hidden)
    throw InvalidInput("transfer_from_regression: architectures differ below the output layer");
  ModelParams out = init_params(cls_cfg, seed);
  const std::size_t copied = out.tensors.size() - 2;
  if (reg.tensors.size() != out.tensors.size())
    throw InvalidInput("transfer_from_regression: tensor count mismatch");
  for (std::size_t i = 0; i < copied; ++i) {
    if (reg.tensors[i].shape != out.tensors[i].shape)
      throw InvalidInput("transfer_from_regression: shape mismatch in " + reg.tensors[i].name);
    out.tensors[i].values = reg.tensors[i].values;
  }
  return out;
}

ForwardTrace forward(const ModelParams& params, const PaddedBatch& batch, Mode mode, Rng* rng) {
  const ModelConfig& cfg = params.config;
  if (batch.dim != cfg.input_dim)
    throw InvalidInput("forward: feature dim " + std::to_string(batch.dim) + " != model input " +
                       std::to_string(cfg.input_dim));
  const std::size_t B = batch.batch, T = batch.max_len, D = cfg.input_dim;
  const std::size_t P = cfg.projection_dim, H = cfg.lstm_hidden, Hd = cfg.dense_hidden;
  const std::size_t O = cfg.output_dim(), N = B * T;
  if (B == 0 || T == 0) throw InvalidInput("forward: empty batch");
  for (auto len : batch.lengths) {
    if (len == 0 || len > T) throw InvalidInput("forward: invalid sequence length");
  }

  ForwardTrace tr;
  tr.mode = mode;
  tr.dropout_active = mode == Mode::kTrain && cfg.dropout_enabled;
  if (tr.dropout_active && rng == nullptr) throw InvalidInput("forward: train mode needs an rng");
  tr.batch = B;
  tr.steps = T;
  tr.lengths = batch.lengths;

  tr.input.resize(N * D);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      const double* src = batch.values.data() + (b * T + t) * D;
      std::copy(src, src + D, tr.input.data() + (t * B + b) * D);
    }
  }

  tr.proj_pre.resize(N * P);
  kernels::linear_forward(tr.input, params.projection_weight().values,
                          params.projection_bias().values, tr.proj_pre, N, D, P);
  check_finite(tr.proj_pre, "projection");
  tr.lstm_in.resize(N * P);
  std::transform(tr.proj_pre.begin(), tr.proj_pre.end(), tr.lstm_in.begin(), silu);
  if (tr.dropout_active && cfg.dropout_in > 0.0) {
    tr.in_mask = draw_mask(N * P, cfg.dropout_in, *rng);
    apply_mask(tr.lstm_in, tr.in_mask);
  }

  tr.layers.resize(cfg.lstm_layers);
  for (std::size_t l = 0; l < cfg.lstm_layers; ++l) {
    auto& L = tr.layers[l];
    const std::vector<double>& in = l == 0 ? tr.lstm_in : tr.layers[l - 1].hidden;
    const std::size_t in_dim = l == 0 ? P : H;
    const auto& w_hh = params.lstm_w_hh(l).values;
    L.gates.resize(N * 4 * H);
    L.cell.resize(N * H);
    L.hidden.resize(N * H);
    kernels::linear_forward(in, params.lstm_w_ih(l).values, params.lstm_bias(l).values, L.gates,
                            N, in_dim, 4 * H);
    for (std::size_t t = 0; t < T; ++t) {
      std::span<double> z(L.gates.data() + t * B * 4 * H, B * 4 * H);
      if (t > 0) {
        std::span<const double> h_prev(L.hidden.data() + (t - 1) * B * H, B * H);
        kernels::linear_forward(h_prev, w_hh, {}, z, B, H, 4 * H, /*accumulate=*/true);
      }
      for (std::size_t b = 0; b < B; ++b) {
        double* g = z.data() + b * 4 * H;
        const std::size_t row = t * B + b;
        const double* c_prev = t > 0 ? L.cell.data() + (row - B) * H : nullptr;
        double* c = L.cell.data() + row * H;
        double* h = L.hidden.data() + row * H;
        for (std::size_t j = 0; j < H; ++j) {
          const double i_g = sigmoid(g[j]);
          const double f_g = sigmoid(g[H + j]);
          const double c_g = std::tanh(g[2 * H + j]);
          const double o_g = sigmoid(g[3 * H + j]);
          g[j] = i_g;
          g[H + j] = f_g;
          g[2 * H + j] = c_g;
          g[3 * H + j] = o_g;
          c[j] = (c_prev ? f_g * c_prev[j] : 0.0) + i_g * c_g;
          h[j] = o_g * std::tanh(c[j]);
        }
      }
    }
    const std::string name = "lstm" + std::to_string(l);
    check_finite(L.hidden, name.c_str());
  }

  const auto& top = tr.layers.back().hidden;
  tr.last.resize(B * H);
  for (std::size_t b = 0; b < B; ++b) {
    const double* src = top.data() + ((tr.lengths[b] - 1) * B + b) * H;
    std::copy(src, src + H, tr.last.data() + b * H);
  }
  tr.dense_in = tr.last;
  if (tr.dropout_active && cfg.dropout_mid > 0.0) {
    tr.mid_mask = draw_mask(B * H, cfg.dropout_mid, *rng);
    apply_mask(tr.dense_in, tr.mid_mask);
  }

  tr.dense_pre.resize(B * Hd);
  kernels::linear_forward(tr.dense_in, params.dense_weight().values, params.dense_bias().values,
                          tr.dense_pre, B, H, Hd);
  check_finite(tr.dense_pre, "dense");
  tr.output_in.resize(B * Hd);
  std::transform(tr.dense_pre.begin(), tr.dense_pre.end(), tr.output_in.begin(), silu);
  if (tr.dropout_active && cfg.dropout_out > 0.0) {
    tr.out_mask = draw_mask(B * Hd, cfg.dropout_out, *rng);
    apply_mask(tr.output_in, tr.out_mask);
  }

  tr.logits.resize(B * O);
  kernels::linear_forward(tr.output_in, params.output_weight().values,
                          params.output_bias().values, tr.logits, B, Hd, O);
  check_finite(tr.logits, "output");
  tr.output = tr.logits;
  if (cfg.head == Head::kClassification) {
    for (std::size_t b = 0; b < B; ++b) {
      double* row = tr.output.data() + b * O;
      const double mx = *std::max_element(row, row + O);
      double sum = 0.0;
      for (std::size_t k = 0; k < O; ++k) {
        row[k] = std::exp(row[k] - mx);
        sum += row[k];
      }
      for (std::size_t k = 0; k < O; ++k) row[k] /= sum;
    }
  }
  return tr;
}

ModelParams backward(const ModelParams& params, const ForwardTrace& tr,
                     std::span<const double> output_grad) {
  const ModelConfig& cfg = params.config;
  const std::size_t B = tr.batch, T = tr.steps, D = cfg.input_dim;
  const std::size_t P = cfg.projection_dim, H = cfg.lstm_hidden, Hd = cfg.dense_hidden;
  const std::size_t O = cfg.output_dim(), N = B * T;
  if (output_grad.size() != B * O || tr.output.size() != B * O || tr.layers.size() != cfg.lstm_layers)
    throw InternalError("backward: trace does not match parameters");

  ModelParams g = zeros_like(params);
  const std::size_t L = cfg.lstm_layers;
  auto grad_values = [&](std::size_t index) -> std::span<double> {
    return g.tensors[index].values;
  };

  std::vector<double> d_logits(output_grad.begin(), output_grad.end());
  if (cfg.head == Head::kClassification) {
    for (std::size_t b = 0; b < B; ++b) {
      const double* p = tr.output.data() + b * O;
      const double* go = output_grad.data() + b * O;
      double dot = 0.0;
      for (std::size_t k = 0; k < O; ++k) dot += p[k] * go[k];
      for (std::size_t k = 0; k < O; ++k) d_logits[b * O + k] = p[k] * (go[k] - dot);
    }
  }

  kernels::linear_backward_weight(d_logits, tr.output_in, grad_values(4 + 3 * L),
                                  grad_values(5 + 3 * L), B, Hd, O);
  std::vector<double> d_dense(B * Hd);
  kernels::linear_backward_input(d_logits, params.output_weight().values, d_dense, B, Hd, O);
  apply_mask(d_dense, tr.out_mask);
  for (std::size_t i = 0; i < d_dense.size(); ++i) d_dense[i] *= silu_grad(tr.dense_pre[i]);

  kernels::linear_backward_weight(d_dense, tr.dense_in, grad_values(2 + 3 * L),
                                  grad_values(3 + 3 * L), B, H, Hd);
  std::vector<double> d_last(B * H);
  kernels::linear_backward_input(d_dense, params.dense_weight().values, d_last, B, H, Hd);
  apply_mask(d_last, tr.mid_mask);

  // Gradient w.r.t. every hidden state of the current layer.
  std::vector<double> d_hidden(N * H, 0.0);
  for (std::size_t b = 0; b < B; ++b) {
    std::copy(d_last.begin() + static_cast<std::ptrdiff_t>(b * H),
              d_last.begin() + static_cast<std::ptrdiff_t>((b + 1) * H),
              d_hidden.begin() + static_cast<std::ptrdiff_t>(((tr.lengths[b] - 1) * B + b) * H));
  }

  std::vector<double> d_z(N * 4 * H);
  std::vector<double> dh_rec(B * H);
  std::vector<double> dc_next(B * H);
  for (std::size_t li = L; li-- > 0;) {
    const auto& layer = tr.layers[li];
    const std::vector<double>& in = li == 0 ? tr.lstm_in : tr.layers[li - 1].hidden;
    const std::size_t in_dim = li == 0 ? P : H;
    std::fill(dh_rec.begin(), dh_rec.end(), 0.0);
    std::fill(dc_next.begin(), dc_next.end(), 0.0);
    for (std::size_t t = T; t-- > 0;) {
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t row = t * B + b;
        const double* gt = layer.gates.data() + row * 4 * H;
        const double* c = layer.cell.data() + row * H;
        const double* c_prev = t > 0 ? layer.cell.data() + (row - B) * H : nullptr;
        const double* dh_in = d_hidden.data() + row * H;
        double* dz = d_z.data() + row * 4 * H;
        for (std::size_t j = 0; j < H; ++j) {
          const double i_g = gt[j], f_g = gt[H + j], c_g = gt[2 * H + j], o_g = gt[3 * H + j];
          const double dh = dh_in[j] + dh_rec[b * H + j];
          const double tc = std::tanh(c[j]);
          const double d_o = dh * tc;
          const double dc = dc_next[b * H + j] + dh * o_g * (1.0 - tc * tc);
          const double d_i = dc * c_g;
          const double d_c = dc * i_g;
          const double d_f = c_prev ? dc * c_prev[j] : 0.0;
          dc_next[b * H + j] = dc * f_g;
          dz[j] = d_i * i_g * (1.0 - i_g);
          dz[H + j] = d_f * f_g * (1.0 - f_g);
          dz[2 * H + j] = d_c * (1.0 - c_g * c_g);
          dz[3 * H + j] = d_o * o_g * (1.0 - o_g);
        }
      }
      if (t > 0) {
        std::span<const double> dz_t(d_z.data() + t * B * 4 * H, B * 4 * H);
        kernels::linear_backward_input(dz_t, params.lstm_w_hh(li).values, dh_rec, B, H, 4 * H);
      }
    }
    kernels::linear_backward_weight(d_z, in, grad_values(2 + 3 * li), grad_values(4 + 3 * li), N,
                                    in_dim, 4 * H);
    if (T > 1) {
      std::span<const double> dz_tail(d_z.data() + B * 4 * H, (N - B) * 4 * H);
      std::span<const double> h_head(layer.hidden.data(), (N - B) * H);
      kernels::linear_backward_weight(dz_tail, h_head, grad_values(3 + 3 * li), {}, N - B, H,
                                      4 * H);
    }
    std::vector<double> d_in(N * in_dim);
    kernels::linear_backward_input(d_z, params.lstm_w_ih(li).values, d_in, N, in_dim, 4 * H);
    if (li > 0) {
      d_hidden = std::move(d_in);
    } else {
      apply_mask(d_in, tr.in_mask);
      for (std::size_t i = 0; i < d_in.size(); ++i) d_in[i] *= silu_grad(tr.proj_pre[i]);
      kernels::linear_backward_weight(d_in, tr.input, grad_values(0), grad_values(1), N, D, P);
    }
  }
  return g;
}

LossResult loss_regression(std::span<const double> pred, std::span<const double> target,
                           RegressionLoss kind) {
  if (pred.size() != target.size() || pred.empty())
    throw InvalidInput("loss_regression: prediction/target length mismatch");
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  LossResult r;
  r.grad.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double diff = pred[i] - target[i];
    if (kind == RegressionLoss::kL1) {
      r.loss += std::abs(diff);
      r.grad[i] = diff > 0.0 ? inv_n : diff < 0.0 ? -inv_n : 0.0;
    } else {
      r.loss += diff * diff;
      r.grad[i] = 2.0 * diff * inv_n;
    }
  }
  r.loss *= inv_n;
  return r;
}

LossResult loss_classification(std::span<const double> probs, std::span<const int> targets,
                               std::span<const double> weights) {
  const std::size_t B = targets.size(), O = weights.size();
  if (B == 0 || probs.size() != B * O)
    throw InvalidInput("loss_classification: probability/target shape mismatch");
  const double inv_n = 1.0 / static_cast<double>(B);
  LossResult r;
  r.grad.assign(B * O, 0.0);
  for (std::size_t i = 0; i < B; ++i) {
    const int y = targets[i];
    if (y < 1 || static_cast<std::size_t>(y) > O)
      throw InvalidInput("loss_classification: target class " + std::to_string(y) + " out of range");
    const std::size_t k = static_cast<std::size_t>(y - 1);
    double p = probs[i * O + k];
    if (p < kProbabilityFloor) {
      p = kProbabilityFloor;
      ++r.clamped;
    }
    const double w = weights[k];
    r.loss -= w * std::log(p) * inv_n;
    r.grad[i * O + k] = -w / p * inv_n;
  }
  return r;
}

std::vector<double> predict(const ModelParams& params,
                            std::span<const FeatureSequence* const> sequences,
                            std::size_t batch_size) {
  if (batch_size == 0) throw InvalidInput("predict: batch size must be positive");
  const std::size_t n = sequences.size(), O = params.config.output_dim();
  std::vector<double> out(n * O);
  // Rows are independent, so grouping by length only changes padding work.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sequences[a]->frames < sequences[b]->frames;
  });
  const auto chunks = static_cast<std::int64_t>((n + batch_size - 1) / batch_size);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chunks));
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t c = 0; c < chunks; ++c) {
    try {
      const std::size_t lo = static_cast<std::size_t>(c) * batch_size;
      const std::size_t hi = std::min(n, lo + batch_size);
      std::vector<const FeatureSequence*> members;
      for (std::size_t i = lo; i < hi; ++i) members.push_back(sequences[order[i]]);
      const ForwardTrace tr = forward(params, pad_and_mask(members), Mode::kEval);
      for (std::size_t i = lo; i < hi; ++i) {
        std::copy_n(tr.output.begin() + static_cast<std::ptrdiff_t>((i - lo) * O), O,
                    out.begin() + static_cast<std::ptrdiff_t>(order[i] * O));
      }
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace mospred
