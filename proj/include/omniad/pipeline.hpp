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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "omniad/anomaly.hpp"
#include "omniad/config.hpp"
#include "omniad/corpus.hpp"
#include "omniad/metrics.hpp"
#include "omniad/network.hpp"
#include "omniad/optim.hpp"

namespace omniad {

SyntheticCorpus generate_corpus(const RunConfig& cfg);

/// Frozen-provider features of every corpus image, extracted once.
struct FeatureCache {
  std::vector<FeaturePyramid> train;
  std::vector<FeaturePyramid> test;

  static FeatureCache build(const NetworkConfig& cfg, const SyntheticCorpus& corpus);
};

struct Checkpoint {
  RunConfig config;
  std::uint64_t step = 0;
  OmniAdModel model;
  AdamWState optimizer;

  explicit Checkpoint(const RunConfig& cfg);
};

// Raised when a step produces a non-finite loss. The model and optimizer are
// left at their last finite state.
class NonFiniteLoss : public std::runtime_error {
 public:
  explicit NonFiniteLoss(std::uint64_t step);
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

/// Single-threaded training loop: epoch-shuffled mini-batches of cached
/// features, reconstruction loss, backward and one AdamW update per step.
class Trainer {
 public:
  Trainer(const RunConfig& cfg, const FeatureCache& features);

  // Runs `steps` further steps; returns their losses. Throws NonFiniteLoss.
  std::vector<double> run(std::size_t steps);

  Checkpoint& checkpoint() { return ckpt_; }
  const Checkpoint& checkpoint() const { return ckpt_; }
  const std::vector<double>& loss_trace() const { return losses_; }

 private:
  std::vector<std::size_t> next_batch();

  Checkpoint ckpt_;
  const FeatureCache* features_;
  Rng order_rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::vector<double> losses_;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> losses;
};

// Trains cfg.train.steps steps from the initial state under cfg.train.seed.
TrainResult train(const RunConfig& cfg, const FeatureCache& features);

// Mean of the trailing `window` entries ending at index `end` (exclusive).
double smoothed_loss(const std::vector<double>& losses, std::size_t end, std::size_t window = 50);

std::string loss_csv(const std::vector<double>& losses);

struct EvalResult {
  metrics::EvalReport report;
  std::vector<AnomalyMap> maps;  // one per test sample
};

EvalResult evaluate(const OmniAdModel& model, const EvalConfig& eval, const SyntheticCorpus& corpus,
                    const FeatureCache& features, std::size_t batch_size = 8);

// Directory layout: manifest.txt plus tensors/<name>.omt for every parameter,
// buffer and optimizer moment, stored in 64-bit form.
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

enum class AblationAxis { kTokenCount, kDecoupleOrder, kBranches, kDepths };

AblationAxis parse_ablation_axis(const std::string& text);
std::string to_string(AblationAxis axis);
// Returns a copy of `base` with the axis set to `value`; ConfigError if invalid.
RunConfig apply_ablation_value(const RunConfig& base, AblationAxis axis, const std::string& value);

struct AblationRow {
  std::string value;
  std::size_t decoder_parameters = 0;
  double final_loss = 0.0;
  metrics::EvalReport report;
};

std::vector<AblationRow> run_ablation(const RunConfig& base, AblationAxis axis, const std::vector<std::string>& values,
                                      const std::function<void(const AblationRow&)>& on_row = {});

std::string ablation_csv(AblationAxis axis, const std::vector<AblationRow>& rows);

}  // namespace omniad
