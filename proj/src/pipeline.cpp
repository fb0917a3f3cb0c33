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

#include "omniad/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "omniad/errors.hpp"
#include "omniad/io.hpp"

namespace omniad {

SyntheticCorpus generate_corpus(const RunConfig& cfg) {
  return generate_corpus(cfg.corpus.seed, cfg.corpus.n_classes, cfg.corpus.n_train, cfg.corpus.n_test,
                         cfg.network.height, cfg.network.width);
}

FeatureCache FeatureCache::build(const NetworkConfig& cfg, const SyntheticCorpus& corpus) {
  const auto provider = make_feature_provider(cfg);
  const bool by_record = cfg.provider == ProviderKind::kFile;
  FeatureCache cache;
  cache.train.reserve(corpus.train.size());
  cache.test.reserve(corpus.test.size());
  for (const TrainSample& s : corpus.train) {
    cache.train.push_back(by_record ? provider->extract_record(s.record_id) : provider->extract(s.image));
  }
  for (const TestSample& s : corpus.test) {
    cache.test.push_back(by_record ? provider->extract_record(s.record_id) : provider->extract(s.image));
  }
  return cache;
}

// ---- training ------------------------------------------------------------------

Checkpoint::Checkpoint(const RunConfig& cfg)
    : config(cfg), model(cfg.network, cfg.train.seed), optimizer(cfg.train.adamw(), model.parameters()) {}

NonFiniteLoss::NonFiniteLoss(std::uint64_t step)
    : std::runtime_error("non-finite loss at step " + std::to_string(step)), step_(step) {}

Trainer::Trainer(const RunConfig& cfg, const FeatureCache& features)
    : ckpt_((cfg.validate(), cfg)), features_(&features), order_rng_(cfg.train.seed ^ 0x0bad5eedULL) {
  if (features.train.empty()) throw ContractError("training needs at least one normal image");
  order_.resize(features.train.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::shuffle(order_.begin(), order_.end(), order_rng_);
}

std::vector<std::size_t> Trainer::next_batch() {
  std::vector<std::size_t> batch;
  const std::size_t size = ckpt_.config.train.batch_size;
  while (batch.size() < size) {
    if (cursor_ == order_.size()) {
      std::shuffle(order_.begin(), order_.end(), order_rng_);
      cursor_ = 0;
    }
    batch.push_back(order_[cursor_++]);
  }
  return batch;
}

std::vector<double> Trainer::run(std::size_t steps) {
  std::vector<double> out;
  std::vector<Tensor> params = ckpt_.model.parameters();
  for (std::size_t i = 0; i < steps; ++i) {
    std::vector<FeaturePyramid> items;
    for (std::size_t idx : next_batch()) items.push_back(features_->train[idx]);
    const FeaturePyramid batch = stack_pyramids(items);

    Tape tape;
    Tensor loss;
    {
      Tape::Recording recording(tape);
      loss = reconstruction_loss(batch, ckpt_.model.forward(batch, true));
    }
    const double value = loss.item();
    if (!std::isfinite(value)) throw NonFiniteLoss(ckpt_.step);
    for (Tensor& p : params) p.zero_grad();
    backward(loss, tape);
    adamw_step(params, ckpt_.optimizer);
    ++ckpt_.step;
    out.push_back(value);
    losses_.push_back(value);
  }
  return out;
}

TrainResult train(const RunConfig& cfg, const FeatureCache& features) {
  Trainer trainer(cfg, features);
  trainer.run(cfg.train.steps);
  return TrainResult{std::move(trainer.checkpoint()), trainer.loss_trace()};
}

double smoothed_loss(const std::vector<double>& losses, std::size_t end, std::size_t window) {
  if (end == 0 || end > losses.size() || window == 0) {
    throw ContractError("smoothed_loss: window end " + std::to_string(end) + " outside a trace of " +
                        std::to_string(losses.size()));
  }
  const std::size_t begin = end > window ? end - window : 0;
  double total = 0.0;
  for (std::size_t i = begin; i < end; ++i) total += losses[i];
  return total / static_cast<double>(end - begin);
}

std::string loss_csv(const std::vector<double>& losses) {
  std::ostringstream out;
  out << "step,loss\n" << std::setprecision(17);
  for (std::size_t i = 0; i < losses.size(); ++i) out << i << "," << losses[i] << "\n";
  return out.str();
}

// ---- evaluation ----------------------------------------------------------------

EvalResult evaluate(const OmniAdModel& model, const EvalConfig& eval, const SyntheticCorpus& corpus,
                    const FeatureCache& features, std::size_t batch_size) {
  if (features.test.size() != corpus.test.size()) {
    throw DimensionError("evaluate: " + std::to_string(features.test.size()) + " cached pyramids for " +
                         std::to_string(corpus.test.size()) + " test images");
  }
  if (batch_size == 0) batch_size = 1;
  const std::size_t h = corpus.height, w = corpus.width;
  EvalResult result;
  NoGradGuard no_grad;
  for (std::size_t start = 0; start < features.test.size(); start += batch_size) {
    const std::size_t end = std::min(features.test.size(), start + batch_size);
    const std::span<const FeaturePyramid> items(features.test.data() + start, end - start);
    const FeaturePyramid recon = model.forward(stack_pyramids(items), false);
    for (std::size_t i = start; i < end; ++i) {
      result.maps.push_back(anomaly_map(features.test[i], pyramid_at(recon, i - start), h, w, eval.sigma));
    }
  }

  std::vector<std::uint8_t> image_labels;
  std::vector<double> image_scores;
  std::vector<std::uint8_t> pixel_labels;
  std::vector<double> pixel_scores;
  std::vector<metrics::MaskedMap> masked;
  for (std::size_t i = 0; i < corpus.test.size(); ++i) {
    const TestSample& s = corpus.test[i];
    image_labels.push_back(s.anomalous ? 1 : 0);
    image_scores.push_back(result.maps[i].image_score);
    const auto map = result.maps[i].map.data();
    pixel_labels.insert(pixel_labels.end(), s.mask.begin(), s.mask.end());
    pixel_scores.insert(pixel_scores.end(), map.begin(), map.end());
    masked.push_back(metrics::MaskedMap{h, w, s.mask, std::vector<double>(map.begin(), map.end())});
  }
  metrics::EvalReport& r = result.report;
  r.image_auroc = metrics::auroc(image_labels, image_scores);
  r.image_ap = metrics::average_precision(image_labels, image_scores);
  r.image_f1_max = metrics::f1_max(image_labels, image_scores);
  r.pixel_auroc = metrics::auroc(pixel_labels, pixel_scores);
  r.pixel_ap = metrics::average_precision(pixel_labels, pixel_scores);
  r.pixel_f1_max = metrics::f1_max(pixel_labels, pixel_scores);
  r.pixel_aupro = metrics::aupro(masked, eval.fpr_cap);
  return result;
}

// ---- checkpoints ---------------------------------------------------------------

namespace {

constexpr const char* kManifestHeader = "omniad-checkpoint 1";

std::filesystem::path tensor_path(const std::filesystem::path& dir, const std::string& name) {
  return dir / "tensors" / (name + ".omt");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir / "tensors");
  std::ostringstream manifest;
  manifest << kManifestHeader << "\n"
           << "step " << ckpt.step << "\n"
           << "optimizer_step " << ckpt.optimizer.t << "\n";
  std::vector<std::string> names;
  auto put = [&](const std::string& name, const Tensor& t) {
    io::write_tensor_file(tensor_path(dir, name), t, io::kFormatFloat64);
    names.push_back(name);
  };
  const NamedTensors params = ckpt.model.named_parameters();
  for (const auto& [name, t] : params) put(name, t);
  for (const auto& [name, t] : ckpt.model.named_buffers()) put(name, t);
  if (ckpt.optimizer.m.size() == params.size()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      put("opt.m." + params[i].first, Tensor(params[i].second.shape(), ckpt.optimizer.m[i]));
      put("opt.v." + params[i].first, Tensor(params[i].second.shape(), ckpt.optimizer.v[i]));
    }
  }
  for (const std::string& n : names) manifest << "tensor " << n << "\n";
  manifest << "config\n" << ckpt.config.serialize();
  std::ofstream out(dir / "manifest.txt");
  if (!out) throw FormatError("cannot write checkpoint manifest in " + dir.string(), 0);
  out << manifest.str();
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw FormatError("missing checkpoint manifest " + (dir / "manifest.txt").string(), 0);
  std::string line;
  std::getline(in, line);
  if (line != kManifestHeader) throw FormatError("unrecognised checkpoint manifest header '" + line + "'", 0);
  std::uint64_t step = 0, opt_step = 0;
  std::vector<std::string> names;
  std::string config_text;
  bool in_config = false;
  while (std::getline(in, line)) {
    if (in_config) {
      config_text += line + "\n";
    } else if (line == "config") {
      in_config = true;
    } else if (line.rfind("step ", 0) == 0) {
      step = std::stoull(line.substr(5));
    } else if (line.rfind("optimizer_step ", 0) == 0) {
      opt_step = std::stoull(line.substr(15));
    } else if (line.rfind("tensor ", 0) == 0) {
      names.push_back(line.substr(7));
    } else if (!line.empty()) {
      throw FormatError("unexpected checkpoint manifest line '" + line + "'", 0);
    }
  }
  Checkpoint ckpt(RunConfig::parse(config_text));
  ckpt.step = step;
  ckpt.optimizer.t = opt_step;

  auto load_into = [&](const std::string& name, Tensor& target) {
    const Tensor src = io::read_tensor_file(tensor_path(dir, name));
    if (src.shape() != target.shape()) {
      throw DimensionError("checkpoint tensor '" + name + "' has shape " + shape_string(src.shape()) +
                           ", model expects " + shape_string(target.shape()));
    }
    std::copy(src.data().begin(), src.data().end(), target.mutable_data().begin());
  };
  auto has = [&](const std::string& name) { return std::find(names.begin(), names.end(), name) != names.end(); };

  NamedTensors params = ckpt.model.named_parameters();
  for (auto& [name, t] : params) {
    if (!has(name)) throw FormatError("checkpoint is missing parameter '" + name + "'", 0);
    load_into(name, t);
  }
  for (auto& [name, t] : ckpt.model.named_buffers()) {
    if (!has(name)) throw FormatError("checkpoint is missing buffer '" + name + "'", 0);
    load_into(name, t);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params[i].first;
    if (!has("opt.m." + name)) continue;
    Tensor m(params[i].second.shape()), v(params[i].second.shape());
    load_into("opt.m." + name, m);
    load_into("opt.v." + name, v);
    ckpt.optimizer.m[i].assign(m.data().begin(), m.data().end());
    ckpt.optimizer.v[i].assign(v.data().begin(), v.data().end());
  }
  return ckpt;
}

// ---- ablation ------------------------------------------------------------------

AblationAxis parse_ablation_axis(const std::string& text) {
  if (text == "token_count") return AblationAxis::kTokenCount;
  if (text == "decouple_order") return AblationAxis::kDecoupleOrder;
  if (text == "branches") return AblationAxis::kBranches;
  if (text == "depths") return AblationAxis::kDepths;
  throw ConfigError("unknown ablation axis '" + text + "' (token_count, decouple_order, branches, depths)");
}

std::string to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::kTokenCount:
      return "token_count";
    case AblationAxis::kDecoupleOrder:
      return "decouple_order";
    case AblationAxis::kBranches:
      return "branches";
    case AblationAxis::kDepths:
      return "depths";
  }
  return "unknown";
}

RunConfig apply_ablation_value(const RunConfig& base, AblationAxis axis, const std::string& value) {
  RunConfig cfg = base;
  switch (axis) {
    case AblationAxis::kTokenCount:
      cfg.set("token_count", value);
      break;
    case AblationAxis::kDecoupleOrder:
      cfg.set("decouple_order", value);
      break;
    case AblationAxis::kBranches:
      if (value == "global") {
        cfg.network.global_enabled = true;
        cfg.network.local_enabled = false;
      } else if (value == "local") {
        cfg.network.global_enabled = false;
        cfg.network.local_enabled = true;
      } else if (value == "both") {
        cfg.network.global_enabled = true;
        cfg.network.local_enabled = true;
      } else {
        throw ConfigError("branches value '" + value + "' is not one of global, local, both");
      }
      break;
    case AblationAxis::kDepths:
      cfg.set("depths", value);
      break;
  }
  cfg.validate();
  return cfg;
}

std::vector<AblationRow> run_ablation(const RunConfig& base, AblationAxis axis, const std::vector<std::string>& values,
                                      const std::function<void(const AblationRow&)>& on_row) {
  std::vector<RunConfig> configs;
  for (const std::string& v : values) configs.push_back(apply_ablation_value(base, axis, v));
  const SyntheticCorpus corpus = generate_corpus(base);
  const FeatureCache features = FeatureCache::build(base.network, corpus);
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < values.size(); ++i) {
    TrainResult trained = train(configs[i], features);
    AblationRow row;
    row.value = values[i];
    row.decoder_parameters = trained.checkpoint.model.decoder_parameter_count();
    row.final_loss = trained.losses.empty() ? std::nan("") : trained.losses.back();
    row.report = evaluate(trained.checkpoint.model, configs[i].eval, corpus, features,
                          configs[i].train.batch_size)
                     .report;
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_csv(AblationAxis axis, const std::vector<AblationRow>& rows) {
  std::ostringstream out;
  out << to_string(axis) << ",decoder_params,final_loss";
  for (const char* c : metrics::kReportColumns) out << "," << c;
  out << "\n" << std::setprecision(17);
  for (const AblationRow& r : rows) {
    out << r.value << "," << r.decoder_parameters << "," << r.final_loss;
    for (const auto& v : r.report.values()) out << "," << *v;
    out << "," << metrics::mad(r.report) << "\n";
  }
  return out.str();
}

}  // namespace omniad
