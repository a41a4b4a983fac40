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

// Acceptance checks. Each criterion prints exactly one PASS or FAIL line.
#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "mospred/batching.hpp"
#include "mospred/checkpoint.hpp"
#include "mospred/dataset.hpp"
#include "mospred/metrics.hpp"
#include "mospred/postprocess.hpp"
#include "mospred/training.hpp"
#include "oracles.hpp"

#ifndef MOSPRED_CLI
#error "MOSPRED_CLI must name the command-line binary"
#endif

using namespace mospred;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

ModelParams jittered(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams p = init_params(cfg, seed);
  std::mt19937_64 rng(seed ^ 0x5eedULL);
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto& t : p.tensors)
    for (auto& v : t.values) v += n(rng);
  return p;
}

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t checked = 0, runs = 0;
  std::string where;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed + 100);
    std::uniform_int_distribution<std::size_t> len(1, 12);
    std::vector<FeatureSequence> seqs;
    for (int b = 0; b < 3; ++b) seqs.push_back(testing::random_sequence(rng, len(rng), 16));
    const PaddedBatch batch = pad_and_mask(seqs);
    for (Head head : {Head::kRegression, Head::kClassification}) {
      ModelConfig cfg = testing::small_config(16, head, 6);
      cfg.projection_dim = 16;
      const ModelParams p = jittered(cfg, seed);
      const auto probe = oracle::make_probe(cfg, 3, rng);
      // Regression also runs in train mode, with dropout masks replayed.
      std::vector<Mode> modes{Mode::kEval};
      if (head == Head::kRegression) modes.push_back(Mode::kTrain);
      for (Mode mode : modes) {
        const auto r = oracle::gradient_check(p, batch, probe, mode, 1000 + seed);
        if (r.checked != p.num_values()) return {false, "not every parameter was checked"};
        checked += r.checked;
        ++runs;
        if (r.max_rel_error > worst) {
          worst = r.max_rel_error;
          where = r.worst;
        }
      }
    }
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-4 && elapsed < 30.0,
          std::to_string(runs) + " runs, " + std::to_string(checked) +
              " gradients, max relative error " + num(worst, 3) + " at " + where + ", " +
              num(elapsed, 3) + " s"};
}

Outcome accumulation() {
  const auto set = testing::make_synthetic(80, 16, 5, 30, 21);
  ModelConfig cfg = testing::small_config(16, Head::kRegression, 12);
  cfg.dropout_enabled = false;
  const ModelParams p = init_params(cfg, 8);
  const auto split = set.split();
  const auto ptrs = split.pointers();
  const auto obj = Objective::regression(RegressionLoss::kL1);

  GradientAccumulator acc(10);
  for (std::size_t m = 0; m < 10; ++m) {
    const std::span<const FeatureSequence* const> s(ptrs.data() + m * 8, 8);
    const std::span<const double> t(split.targets.data() + m * 8, 8);
    acc.add(batch_gradient(p, s, t, obj, Mode::kTrain, nullptr).grad, 8);
  }
  if (!acc.ready()) return {false, "accumulator not ready after 10 micro-batches"};
  const ModelParams a = acc.take();
  const ModelParams b = batch_gradient(p, ptrs, split.targets, obj, Mode::kTrain, nullptr).grad;
  double worst = 0.0;
  for (std::size_t i = 0; i < a.tensors.size(); ++i)
    for (std::size_t k = 0; k < a.tensors[i].size(); ++k) {
      const double x = a.tensors[i].values[k], y = b.tensors[i].values[k];
      worst = std::max(worst, std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-300}));
    }
  return {worst <= 1e-10, "max elementwise relative difference " + num(worst, 3)};
}

Outcome schedule() {
  const CyclicalLr lr;
  const std::pair<std::size_t, double> expect[] = {
      {0, 0.0005}, {50, 0.00275}, {100, 0.005}, {150, 0.00275}, {200, 0.0005}};
  double worst = 0.0;
  std::string values;
  for (const auto& [it, want] : expect) {
    const double got = lr(it);
    worst = std::max(worst, std::abs(got - want) / want);
    values += (values.empty() ? "" : " / ") + num(got, 17);
  }
  return {worst <= 1e-15, values + ", max relative deviation " + num(worst, 3)};
}

Outcome rating_aggregation() {
  struct Case {
    std::vector<int> votes;
    double std_dev;
    double tol;
  };
  const Case cases[] = {{{3, 3, 3, 3, 4, 4, 4, 4}, 0.5, 1e-12},
                        {{3, 3, 3, 3, 3, 3, 3, 3}, 0.0, 1e-12},
                        {{1, 1, 2, 3, 3, 4, 5, 5}, 1.5, 1e-12},
                        {{1, 1, 1, 3, 4, 5, 5, 5}, 1.7536, 1e-4}};
  bool pass = true;
  std::string detail;
  for (const auto& c : cases) {
    const MosLabel l = aggregate_ratings(c.votes);
    const bool ok = std::abs(*l.std_dev - c.std_dev) <= c.tol;
    pass = pass && ok;
    detail += (detail.empty() ? "" : "; ") + std::string("std ") + num(*l.std_dev, 7) +
              (ok ? " == " : " != ") + num(c.std_dev, 7);
  }
  return {pass, detail};
}

Outcome metrics_oracle() {
  std::mt19937_64 rng(7);
  std::size_t pairs = 0, defined = 0;
  double lcc_worst = 0.0;
  for (int rep = 0; rep < 3000; ++rep) {
    const std::size_t n = 2 + static_cast<std::size_t>(rep % 6);
    const auto x = oracle::tied_vector(rng, n, 2 + rep % 4);
    const auto y = oracle::tied_vector(rng, n, 2 + (rep / 4) % 4);
    ++pairs;
    const double s = oracle::spearman(x, y);
    const auto got_s = srcc(x, y);
    if (got_s.defined != std::isfinite(s) || (got_s.defined && got_s.value != s))
      return {false, "srcc differs from the rank oracle at pair " + std::to_string(rep)};
    const double k = oracle::kendall_tau_b(x, y);
    const auto got_k = ktau(x, y);
    if (got_k.defined != std::isfinite(k) || (got_k.defined && got_k.value != k))
      return {false, "ktau differs from pair enumeration at pair " + std::to_string(rep)};
    const double p = oracle::pearson(x, y);
    const auto got_p = lcc(x, y);
    if (got_p.defined != std::isfinite(p))
      return {false, "lcc definedness differs at pair " + std::to_string(rep)};
    if (got_p.defined) {
      ++defined;
      lcc_worst = std::max(lcc_worst, std::abs(got_p.value - p));
    }
  }
  return {pairs >= 1000 && lcc_worst <= 1e-12,
          std::to_string(pairs) + " pairs with n <= 7, " + std::to_string(defined) +
              " with defined correlations; srcc and ktau exact, lcc max difference " +
              num(lcc_worst, 3)};
}

Outcome overfit() {
  const auto set = testing::make_synthetic(64, 16, 20, 60, 2024);
  const auto split = set.split();
  ModelConfig cfg = testing::small_config(16, Head::kRegression, 16);
  cfg.dropout_enabled = false;
  TrainRunConfig c;
  c.micro_batch = 8;
  c.accumulation_steps = 10;
  c.max_updates = 3000;
  c.max_epochs = 100000;
  c.patience = 100000;
  c.max_restarts = 0;
  c.seed = 1;
  c.target_loss = 0.0499;
  const auto t0 = Clock::now();
  const TrainResult r = train_regression(cfg, split, split, c);
  const double elapsed = seconds_since(t0);
  return {!r.diverged && r.best_val_loss < 0.05 && r.updates <= 3000 && elapsed < 120.0,
          "train L1 " + num(r.best_val_loss, 4) + " after " + std::to_string(r.updates) +
              " updates, " + num(elapsed, 3) + " s"};
}

std::vector<std::map<std::string, std::string>> parse_history(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    std::map<std::string, std::string> row;
    std::stringstream ss(line);
    std::string cell;
    for (const auto& h : header) {
      std::getline(ss, cell, ',');
      row[h] = cell;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Outcome transfer_phases() {
  testing::TempDir dir;
  const auto set = testing::make_synthetic(320, 8, 3, 10, 31);
  const auto val = testing::make_synthetic(40, 8, 3, 10, 32);

  ModelConfig rc = testing::small_config(8, Head::kRegression, 6);
  TrainRunConfig tc;
  tc.max_epochs = 2;
  tc.max_restarts = 0;
  const TrainResult reg = train_regression(rc, set.split(), val.split(), tc);
  save_checkpoint(dir / "reg.ckpt", reg.best);
  const ModelParams source = load_checkpoint(dir / "reg.ckpt");
  const std::string source_sum = projection_checksum(source);

  ClassificationConfig cc;
  cc.max_epochs = 2;
  cc.patience = 10;
  cc.seed = 3;
  const TrainResult cls = train_classification(source, set.split(), val.split(), cc);
  std::ostringstream csv;
  write_history_csv(csv, cls.history);
  const auto rows = parse_history(csv.str());

  std::size_t counts[4] = {0, 0, 0, 0};
  std::size_t max_batch2 = 0;
  bool p1_frozen = true, p2_rate = true, p2_batch = true, p3_moves = false;
  for (const auto& r : rows) {
    const int phase = std::stoi(r.at("phase"));
    if (phase < 1 || phase > 3) return {false, "unexpected phase " + r.at("phase")};
    ++counts[phase];
    const std::size_t batch = std::stoul(r.at("batch_size"));
    if (phase == 1) p1_frozen = p1_frozen && r.at("projection_checksum") == source_sum;
    if (phase == 2) {
      p2_rate = p2_rate && std::stod(r.at("lr")) == 0.0001;
      p2_batch = p2_batch && batch <= 150;
      max_batch2 = std::max(max_batch2, batch);
    }
    if (phase == 3) p3_moves = p3_moves || r.at("projection_checksum") != source_sum;
  }
  p2_batch = p2_batch && max_batch2 == 150;
  const bool pass = counts[1] > 0 && counts[2] > 0 && counts[3] > 0 && p1_frozen && p2_rate &&
                    p2_batch && p3_moves;
  return {pass, "updates per phase " + std::to_string(counts[1]) + "/" + std::to_string(counts[2]) +
                    "/" + std::to_string(counts[3]) + "; phase 1 projection " +
                    (p1_frozen ? "unchanged" : "CHANGED") + "; phase 2 lr " +
                    (p2_rate ? "0.0001" : "WRONG") + ", batch " + std::to_string(max_batch2) +
                    "; phase 3 projection " + (p3_moves ? "updated" : "NOT updated")};
}

Outcome batching() {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> len(50, 400);
  std::vector<LengthEntry> lengths;
  for (int i = 0; i < 1000; ++i) lengths.push_back({"u" + std::to_string(i), len(rng)});
  double random_mean = 0.0;
  std::size_t sorted_worst = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    random_mean += static_cast<double>(padding_cost(plan_random(lengths, 8, seed))) / 10.0;
    sorted_worst = std::max(sorted_worst, padding_cost(plan_sorted(lengths, 8, seed)));
  }
  const double ratio = static_cast<double>(sorted_worst) / random_mean;
  return {ratio <= 0.2, "sorted padding " + std::to_string(sorted_worst) + " vs mean random " +
                            num(random_mean, 7) + ", ratio " + num(ratio, 4)};
}

bool on_grid(double x) {
  const double k = (x - 1.0) / 0.125;
  return std::abs(k - std::round(k)) < 1e-9 && x >= 1.0 && x <= 5.0;
}

Outcome postprocess() {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 7.0);
  for (int i = 0; i < 100000; ++i) {
    const double q = quantize(u(rng), 0.125);
    if (!on_grid(q) || quantize(q, 0.125) != q) return {false, "quantize off grid or not idempotent"};
  }
  const PostConfig cfg;
  const double c1 = correct(1.2, cfg), c2 = correct(4.5, cfg), c3 = correct(3.0, cfg);
  if (std::abs(c1 - 1.15) > 1e-12 || std::abs(c2 - 4.75) > 1e-12 || c3 != 3.0)
    return {false, "correct gave " + num(c1) + ", " + num(c2) + ", " + num(c3)};
  std::exponential_distribution<double> e(1.0);
  for (int i = 0; i < 100000; ++i) {
    std::vector<double> probs(kNumClasses);
    double s = 0.0;
    for (auto& p : probs) s += (p = e(rng));
    for (auto& p : probs) p /= s;
    if (!on_grid(pipeline(u(rng), probs, cfg)) || !on_grid(pipeline(u(rng), {}, cfg)))
      return {false, "pipeline output off the 0.125 grid"};
  }
  return {true, "1e5 quantize inputs, 2e5 pipeline outputs on grid; correct 1.15/4.75/3"};
}

std::string shell_quote(const std::string& s) {
  std::string q = "'";
  for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return q + "'";
}

Outcome determinism() {
  testing::TempDir dir;
  const auto train = testing::write_fixture(dir.path(), testing::make_synthetic(40, 6, 5, 20, 41), "train");
  const auto val = testing::write_fixture(dir.path(), testing::make_synthetic(12, 6, 5, 20, 42), "val");
  std::string runs[2];
  for (int i = 0; i < 2; ++i) {
    const auto out = dir / ("run" + std::to_string(i));
    const std::string cmd = shell_quote(MOSPRED_CLI) + " train --train_manifest " +
                            shell_quote(train.string()) + " --val_manifest " +
                            shell_quote(val.string()) +
                            " --lstm_hidden 8 --dense_hidden 8 --accumulation_steps 2 --max_epochs 6 --seed 17 --out " +
                            shell_quote(out.string()) + " >/dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) return {false, "train run " + std::to_string(i) + " failed"};
    runs[i] = testing::slurp(out / "history.csv");
  }
  if (runs[0].empty()) return {false, "empty history"};
  std::size_t lines = 0;
  for (char c : runs[0]) lines += c == '\n';
  return {runs[0] == runs[1], std::to_string(runs[0].size()) + " bytes, " +
                                  std::to_string(lines) + " lines, " +
                                  (runs[0] == runs[1] ? "identical" : "different")};
}

const std::vector<std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Outcome()>>> all = {
      {"gradient_oracle", gradient_oracle},
      {"accumulation", accumulation},
      {"schedule", schedule},
      {"rating_aggregation", rating_aggregation},
      {"metrics_oracle", metrics_oracle},
      {"overfit", overfit},
      {"transfer_phases", transfer_phases},
      {"batching", batching},
      {"postprocess", postprocess},
      {"determinism", determinism},
  };
  return all;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::vector<std::string> selected;
  bool list = false;
  app.add_option("--criterion", selected, "criterion to run (repeatable); default all");
  app.add_flag("--list", list, "print criterion names");
  CLI11_PARSE(app, argc, argv);

  if (list) {
    for (const auto& [name, fn] : criteria()) std::cout << name << '\n';
    return 0;
  }
  if (selected.empty())
    for (const auto& [name, fn] : criteria()) selected.push_back(name);

  bool all_pass = true;
  for (const auto& want : selected) {
    const auto it = std::find_if(criteria().begin(), criteria().end(),
                                 [&](const auto& c) { return c.first == want; });
    if (it == criteria().end()) {
      std::cout << "FAIL " << want << ": unknown criterion\n";
      all_pass = false;
      continue;
    }
    Outcome o;
    try {
      o = it->second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS " : "FAIL ") << want << ": " << o.detail << std::endl;
    all_pass = all_pass && o.pass;
  }
  return all_pass ? 0 : 1;
}
