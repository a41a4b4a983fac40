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

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mospred/batching.hpp"
#include "mospred/checkpoint.hpp"
#include "mospred/config.hpp"
#include "mospred/dataset.hpp"
#include "mospred/error.hpp"
#include "mospred/kernels.hpp"
#include "mospred/metrics.hpp"
#include "mospred/model.hpp"
#include "mospred/postprocess.hpp"
#include "mospred/training.hpp"
#include "csv.hpp"

namespace fs = std::filesystem;
using namespace mospred;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError(path.string(), "cannot open for writing");
  return out;
}

const std::string& require(const std::string& value, const char* key) {
  if (value.empty()) throw InvalidInput(std::string("missing required setting '") + key + "'");
  return value;
}

fs::path prepare_out(const RunConfig& c) {
  const fs::path out = c.out;
  fs::create_directories(out);
  c.save(out / "config.resolved");
  return out;
}

void write_summary(const fs::path& path, const TrainResult& r) {
  auto out = open_out(path);
  out << "best_val_loss=" << fmt(r.best_val_loss) << '\n'
      << "updates=" << r.updates << '\n'
      << "restarts=" << r.restarts << '\n'
      << "diverged=" << (r.diverged ? "true" : "false") << '\n';
  if (r.diverged) out << "divergence=" << r.divergence << '\n';
}

void finish_training(const fs::path& out, const TrainResult& r) {
  {
    auto h = open_out(out / "history.csv");
    write_history_csv(h, r.history);
  }
  save_checkpoint(out / "model.ckpt", r.best);
  write_summary(out / "summary.txt", r);
  std::cout << "best_val_loss " << fmt(r.best_val_loss) << "  updates " << r.updates
            << "  restarts " << r.restarts << '\n';
  if (r.diverged) throw NumericError("training", r.divergence);
}

int cmd_stats(const RunConfig& c) {
  const Dataset d = load_manifest(require(c.manifest, "manifest"));
  if (!d.labeled()) throw InvalidInput("stats needs a labeled manifest");
  const fs::path out = prepare_out(c);

  {
    auto h = open_out(out / "histogram.csv");
    h << "bin_center,count\n";
    for (const auto& b : mos_histogram(d, c.bin_width)) h << fmt(b.center) << ',' << b.count << '\n';
  }
  const bool has_votes =
      std::all_of(d.utterances.begin(), d.utterances.end(),
                  [](const Utterance& u) { return u.ratings && !u.ratings->empty(); });
  {
    auto s = open_out(out / "scatter.csv");
    s << "mean,std,count\n";
    if (has_votes) {
      for (const auto& p : mean_std_scatter(d))
        s << fmt(p.mean) << ',' << fmt(p.std_dev) << ',' << p.count << '\n';
    }
  }
  {
    auto w = open_out(out / "class_weights.csv");
    w << "class,score,weight\n";
    const auto weights = class_weights(d);
    for (int k = 1; k <= kNumClasses; ++k)
      w << k << ',' << fmt(class_to_mos(k)) << ',' << fmt(weights[k - 1]) << '\n';
  }

  std::ostringstream s;
  s << "utterances=" << d.utterances.size() << '\n'
    << "resolution=" << fmt(d.resolution) << '\n'
    << "fraction_below_1.5=" << fmt(range_fraction(d, 1.0, 1.5, true, false)) << '\n'
    << "fraction_above_4.5=" << fmt(range_fraction(d, 4.5, 5.0, false, true)) << '\n'
    << "fraction_2_to_4=" << fmt(range_fraction(d, 2.0, 4.0)) << '\n';
  if (!has_votes) s << "scatter=skipped, manifest has no per-vote ratings\n";
  auto f = open_out(out / "summary.txt");
  f << s.str();
  std::cout << s.str();
  return 0;
}

int cmd_plan_batches(const RunConfig& c) {
  const Dataset d = load_manifest(require(c.manifest, "manifest"));
  std::vector<LengthEntry> lengths;
  lengths.reserve(d.utterances.size());
  for (const auto& u : d.utterances) lengths.push_back({u.id, u.num_frames});

  BatchPlan plan;
  if (c.batching == "sorted") {
    plan = plan_sorted(lengths, c.batch_size, c.seed);
  } else if (c.batching == "random") {
    plan = plan_random(lengths, c.batch_size, c.seed);
  } else {
    throw InvalidInput("batching must be 'sorted' or 'random'");
  }

  const fs::path out = prepare_out(c);
  auto f = open_out(out / "plan.ndjson");
  for (std::size_t b = 0; b < plan.batches.size(); ++b) {
    nlohmann::json line;
    line["batch"] = plan.batches[b];
    line["max_len"] = plan.max_length(b);
    line["padding"] = plan.padding(b);
    f << line.dump() << '\n';
  }
  std::cout << "batches " << plan.batches.size() << "  padding " << padding_cost(plan) << '\n';
  return 0;
}

std::pair<TrainSplit, TrainSplit> load_splits(const RunConfig& c) {
  const Dataset tr = load_manifest(require(c.train_manifest, "train_manifest"), Split::kTrain);
  const Dataset va =
      load_manifest(require(c.val_manifest, "val_manifest"), Split::kValidation);
  if (tr.feature_dim() != va.feature_dim())
    throw InvalidInput("train and validation feature dimensions differ");
  return {TrainSplit::from_dataset(tr), TrainSplit::from_dataset(va)};
}

int cmd_train(const RunConfig& c) {
  auto [train, val] = load_splits(c);
  const fs::path out = prepare_out(c);
  TrainResult r;
  if (c.head_kind() == Head::kRegression) {
    const ModelConfig mc = c.model_config(train.features.front().dim, Head::kRegression);
    r = train_regression(mc, train, val, c.train_config());
  } else {
    const ModelParams reg = load_checkpoint(require(c.reg_checkpoint, "reg_checkpoint"));
    r = train_classification(reg, train, val, c.classification_config());
  }
  finish_training(out, r);
  return 0;
}

int cmd_finetune(const RunConfig& c) {
  auto [train, val] = load_splits(c);
  const ModelParams ckpt = load_checkpoint(require(c.checkpoint, "checkpoint"));
  const fs::path out = prepare_out(c);
  finish_training(out, finetune(ckpt, train, val, c.finetune_config()));
  return 0;
}

int cmd_predict(const RunConfig& c) {
  const Dataset d = load_manifest(require(c.manifest, "manifest"), Split::kTest);
  std::string reg_path = c.reg_checkpoint.empty() ? c.checkpoint : c.reg_checkpoint;
  std::optional<ModelParams> reg, cls;
  auto place = [&](const std::string& path) {
    ModelParams p = load_checkpoint(path);
    auto& slot = p.config.head == Head::kRegression ? reg : cls;
    if (slot) throw InvalidInput("two checkpoints with the same head: " + path);
    slot = std::move(p);
  };
  if (!reg_path.empty()) place(reg_path);
  if (!c.cls_checkpoint.empty()) place(c.cls_checkpoint);
  if (!reg && !cls) throw InvalidInput("predict needs checkpoint, reg_checkpoint or cls_checkpoint");

  const std::vector<FeatureSequence> features = load_all_features(d);
  std::vector<const FeatureSequence*> ptrs;
  for (const auto& f : features) ptrs.push_back(&f);
  for (const auto* m : {&reg, &cls}) {
    if (*m && (*m)->config.input_dim != d.feature_dim())
      throw InvalidInput("checkpoint input dimension does not match the features");
  }

  const PostConfig post = c.post_config();
  std::vector<double> reg_out, cls_out;
  if (reg) reg_out = predict(*reg, ptrs, c.eval_batch);
  if (cls) cls_out = predict(*cls, ptrs, c.eval_batch);

  const fs::path out = prepare_out(c);
  auto f = open_out(out / "predictions.csv");
  f << "utterance_id,system_id,raw_regression,raw_classification,final\n";
  for (std::size_t i = 0; i < d.utterances.size(); ++i) {
    std::optional<double> r;
    std::span<const double> probs;
    if (reg) r = reg_out[i];
    if (cls) probs = std::span<const double>(cls_out).subspan(i * kNumClasses, kNumClasses);
    const double final_score = pipeline(r, probs, post);
    const auto& u = d.utterances[i];
    f << csv::quote(u.id) << ',' << csv::quote(u.system_id) << ',';
    if (r) f << fmt(*r);
    f << ',';
    if (cls) f << fmt(decode_classification(probs, post.decode));
    f << ',' << fmt(final_score) << '\n';
  }
  std::cout << "predictions " << d.utterances.size() << '\n';
  return 0;
}

std::map<std::string, double> read_predictions(const fs::path& path, const std::string& column) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string(), "cannot open");
  const auto rows = csv::read(in);
  if (rows.empty()) throw FormatError(path.string(), "empty file");
  const auto& header = rows.front();
  const auto id_it = std::find(header.begin(), header.end(), "utterance_id");
  const auto col_it = std::find(header.begin(), header.end(), column);
  if (id_it == header.end() || col_it == header.end())
    throw FormatError(path.string(), "needs columns utterance_id and " + column);
  const auto id_col = static_cast<std::size_t>(id_it - header.begin());
  const auto val_col = static_cast<std::size_t>(col_it - header.begin());

  std::map<std::string, double> out;
  for (std::size_t row = 1; row < rows.size(); ++row) {
    const auto& cells = rows[row];
    if (cells.size() == 1 && cells[0].empty()) continue;
    if (cells.size() != header.size())
      throw FormatError(path.string(), "row " + std::to_string(row + 1) + ": wrong column count");
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(cells[val_col], &used);
      if (used != cells[val_col].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw FormatError(path.string(), "row " + std::to_string(row + 1) + ": bad value '" +
                                           cells[val_col] + "'");
    }
    if (!out.emplace(cells[id_col], v).second)
      throw FormatError(path.string(), "duplicate utterance id " + cells[id_col]);
  }
  return out;
}

int cmd_evaluate(const RunConfig& c) {
  const Dataset d = load_manifest(require(c.manifest, "manifest"), Split::kTest);
  const auto preds = read_predictions(require(c.predictions, "predictions"), c.eval_column);
  const EvalReport r = evaluate(preds, d, c.kendall_variant());
  const fs::path out = prepare_out(c);
  auto f = open_out(out / "report.csv");
  f << report_csv(r);
  auto t = open_out(out / "report.txt");
  t << format_report(r);
  std::cout << format_report(r);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mospred: MOS prediction from precomputed speech features"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "key=value configuration file");
  std::map<std::string, std::string> overrides;
  std::map<std::string, CLI::Option*> options;
  for (const auto& key : RunConfig::keys()) {
    options[key] = app.add_option("--" + key, overrides[key], RunConfig::description(key));
  }

  struct Command {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&);
  };
  const Command commands[] = {
      {"stats", "label histogram, mean/std scatter and class weights", cmd_stats},
      {"plan-batches", "write a batch plan as NDJSON", cmd_plan_batches},
      {"train", "train a regression or classification model", cmd_train},
      {"finetune", "continue training a checkpoint at a fixed rate", cmd_finetune},
      {"predict", "predict scores for a manifest", cmd_predict},
      {"evaluate", "score predictions against a labeled manifest", cmd_evaluate},
  };
  for (const auto& cmd : commands) app.add_subcommand(cmd.name, cmd.help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: usage: " << msg << '\n';
    return 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg.load_file(config_path);
    for (const auto& key : RunConfig::keys()) {
      if (options[key]->count() > 0) cfg.set(key, overrides[key]);
    }
    cfg.validate();
    if (cfg.threads > 0) kernels::set_threads(static_cast<int>(cfg.threads));
    for (const auto& cmd : commands) {
      if (app.got_subcommand(cmd.name)) return cmd.run(cfg);
    }
    throw InternalError("no subcommand");
  } catch (const Error& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: " << e.kind() << ": " << msg << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::string msg = e.what();
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    std::cerr << "error: io: " << msg << '\n';
    return 1;
  }
}
