/* Copyright 2026 The Omni-AD Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <CLI11.hpp>
#include <Eigen/Core>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "omniad/bench.hpp"
#include "omniad/errors.hpp"
#include "omniad/io.hpp"
#include "omniad/pipeline.hpp"

namespace fs = std::filesystem;
using namespace omniad;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNonFinite = 2;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

int thread_cap() {
  const char* env = std::getenv("OMNIAD_THREADS");
  if (!env || !*env) return 1;
  const int n = std::atoi(env);
  if (n < 1) throw ConfigError("OMNIAD_THREADS must be a positive integer, got '" + std::string(env) + "'");
  return n;
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string axis;
  std::string values;
  std::optional<double> sigma;
  std::string checkpoint;
  std::size_t tokens = 64;
  std::size_t dim = 256;
  std::size_t heads = 4;
  std::size_t repeats = 3;
  std::optional<std::size_t> index;
};

RunConfig load_config(const Options& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : RunConfig::from_file(o.config);
  if (o.seed) cfg.train.seed = *o.seed;
  if (o.sigma) cfg.eval.sigma = *o.sigma;
  cfg.validate();
  return cfg;
}

int cmd_train(const Options& o) {
  const RunConfig cfg = load_config(o);
  const fs::path out = o.out.empty() ? fs::path("checkpoint") : fs::path(o.out);
  const SyntheticCorpus corpus = generate_corpus(cfg);
  const FeatureCache features = FeatureCache::build(cfg.network, corpus);
  Trainer trainer(cfg, features);
  int status = kExitOk;
  try {
    for (std::size_t done = 0; done < cfg.train.steps;) {
      const std::size_t chunk = std::min<std::size_t>(100, cfg.train.steps - done);
      trainer.run(chunk);
      done += chunk;
      std::cerr << "step " << done << "/" << cfg.train.steps << " loss " << trainer.loss_trace().back() << "\n";
    }
  } catch (const NonFiniteLoss& e) {
    std::cerr << "error: " << e.what() << "; saving last finite state\n";
    status = kExitNonFinite;
  }
  save_checkpoint(out, trainer.checkpoint());
  write_text(out / "loss.csv", loss_csv(trainer.loss_trace()));
  std::cout << "checkpoint " << out.string() << " (step " << trainer.checkpoint().step << ")\n";
  return status;
}

// Loads a checkpoint and applies --config/--seed/--sigma on top of its echoed config.
Checkpoint load_for_eval(const Options& o, RunConfig& cfg) {
  if (o.checkpoint.empty()) throw ConfigError("a checkpoint directory is required");
  Checkpoint ckpt = load_checkpoint(o.checkpoint);
  cfg = ckpt.config;
  if (!o.config.empty()) {
    const RunConfig given = RunConfig::from_file(o.config);
    if (!(given.network == ckpt.config.network)) {
      throw ConfigError("config " + o.config + " describes a different network than checkpoint " + o.checkpoint);
    }
    cfg.corpus = given.corpus;
    cfg.eval = given.eval;
  }
  if (o.seed) cfg.corpus.seed = *o.seed;
  if (o.sigma) cfg.eval.sigma = *o.sigma;
  cfg.validate();
  return ckpt;
}

int cmd_eval(const Options& o) {
  RunConfig cfg;
  const Checkpoint ckpt = load_for_eval(o, cfg);
  const SyntheticCorpus corpus = generate_corpus(cfg);
  const FeatureCache features = FeatureCache::build(cfg.network, corpus);
  const EvalResult result = evaluate(ckpt.model, cfg.eval, corpus, features, cfg.train.batch_size);
  const fs::path out = o.out.empty() ? fs::path("report") : fs::path(o.out);
  write_text(out / "report.csv", metrics::report_csv(result.report));
  write_text(out / "report.txt", metrics::report_table(result.report));
  std::cout << metrics::report_table(result.report);
  return kExitOk;
}

int cmd_export_map(const Options& o) {
  RunConfig cfg;
  const Checkpoint ckpt = load_for_eval(o, cfg);
  const SyntheticCorpus corpus = generate_corpus(cfg);
  if (o.index && *o.index >= corpus.test.size()) {
    throw ConfigError("--index " + std::to_string(*o.index) + " exceeds the " +
                      std::to_string(corpus.test.size()) + " test images");
  }
  const FeatureCache features = FeatureCache::build(cfg.network, corpus);
  const EvalResult result = evaluate(ckpt.model, cfg.eval, corpus, features, cfg.train.batch_size);
  const fs::path out = o.out.empty() ? fs::path("maps") : fs::path(o.out);
  fs::create_directories(out);
  for (std::size_t i = 0; i < corpus.test.size(); ++i) {
    if (o.index && *o.index != i) continue;
    const std::string& id = corpus.test[i].record_id;
    io::write_tensor_file(out / (id + ".omt"), result.maps[i].map);
    io::write_pgm(out / (id + ".pgm"), result.maps[i].map);
  }
  std::cout << "maps written to " << out.string() << "\n";
  return kExitOk;
}

int cmd_bench(const Options& o) {
  BenchOptions b;
  if (!o.values.empty()) {
    b.sizes.clear();
    for (const std::string& v : split_list(o.values)) b.sizes.push_back(std::stoull(v));
  }
  b.tokens = o.tokens;
  b.dim = o.dim;
  b.heads = o.heads;
  b.repeats = o.repeats;
  if (o.seed) b.seed = *o.seed;
  const std::string csv = bench_csv(bench_attention(b));
  if (!o.out.empty()) write_text(o.out, csv);
  std::cout << csv;
  return kExitOk;
}

int cmd_ablate(const Options& o) {
  const RunConfig cfg = load_config(o);
  const AblationAxis axis = parse_ablation_axis(o.axis);
  const std::vector<std::string> values = split_list(o.values);
  if (values.empty()) throw ConfigError("--values needs at least one entry");
  const fs::path out = o.out.empty() ? fs::path("ablation") : fs::path(o.out);
  const auto rows = run_ablation(cfg, axis, values, [&](const AblationRow& row) {
    write_text(out / (to_string(axis) + "_" + row.value + ".csv"), metrics::report_csv(row.report));
    std::cerr << to_string(axis) << "=" << row.value << " mAD " << metrics::mad(row.report) << "\n";
  });
  const std::string table = ablation_csv(axis, rows);
  write_text(out / "ablation.csv", table);
  std::cout << table;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reconstruction-based multi-class anomaly detection with learnable-token attention"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run configuration file (key = value)");
    sub->add_option("--seed", o.seed, "Seed override");
    sub->add_option("--out", o.out, "Output path");
  };

  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint directory");
  add_common(train);

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the held-out synthetic split");
  add_common(eval);
  eval->add_option("checkpoint", o.checkpoint, "Checkpoint directory")->required();
  eval->add_option("--sigma", o.sigma, "Gaussian smoothing of anomaly maps (0 disables)");

  auto* bench = app.add_subcommand("bench-attn", "Time learnable-token vs standard attention");
  bench->add_option("--values", o.values, "Comma-separated ascending sequence lengths");
  bench->add_option("--seed", o.seed, "Seed for random inputs");
  bench->add_option("--out", o.out, "CSV output file");
  bench->add_option("--tokens", o.tokens, "Learnable token count");
  bench->add_option("--dim", o.dim, "Embedding width");
  bench->add_option("--heads", o.heads, "Attention heads");
  bench->add_option("--repeats", o.repeats, "Timed repeats per cell");

  auto* ablate = app.add_subcommand("ablate", "Train and evaluate one model per axis value");
  add_common(ablate);
  ablate->add_option("--axis", o.axis, "token_count | decouple_order | branches | depths")->required();
  ablate->add_option("--values", o.values, "Comma-separated axis values")->required();
  ablate->add_option("--sigma", o.sigma, "Gaussian smoothing of anomaly maps");

  auto* export_map = app.add_subcommand("export-map", "Write anomaly maps as tensor files and PGM images");
  add_common(export_map);
  export_map->add_option("checkpoint", o.checkpoint, "Checkpoint directory")->required();
  export_map->add_option("--sigma", o.sigma, "Gaussian smoothing of anomaly maps");
  export_map->add_option("--index", o.index, "Only export this test image");

  CLI11_PARSE(app, argc, argv);

  try {
    Eigen::setNbThreads(thread_cap());
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*bench) return cmd_bench(o);
    if (*ablate) return cmd_ablate(o);
    if (*export_map) return cmd_export_map(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitOk;
}
