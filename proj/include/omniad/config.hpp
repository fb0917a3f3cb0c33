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
#include <string>
#include <vector>

#include "omniad/network.hpp"
#include "omniad/optim.hpp"

namespace omniad {

struct CorpusConfig {
  std::uint64_t seed = 0;
  std::size_t n_classes = 3;
  std::size_t n_train = 96;
  std::size_t n_test = 48;

  bool operator==(const CorpusConfig&) const = default;
};

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamWOptions adamw() const;
  bool operator==(const TrainConfig&) const = default;
};

struct EvalConfig {
  double sigma = 4.0;
  double fpr_cap = 0.3;

  bool operator==(const EvalConfig&) const = default;
};

/// Flat "key = value" run description. Blank lines and lines starting with '#'
/// are ignored; unknown keys are rejected with a ConfigError naming them.
struct RunConfig {
  NetworkConfig network;
  CorpusConfig corpus;
  TrainConfig train;
  EvalConfig eval;

  static RunConfig parse(const std::string& text);
  static RunConfig from_file(const std::filesystem::path& path);
  std::string serialize() const;
  void to_file(const std::filesystem::path& path) const;

  // Assigns one key from its textual value.
  void set(const std::string& key, const std::string& value);
  void validate() const;

  static std::vector<std::string> keys();

  bool operator==(const RunConfig&) const = default;
};

}  // namespace omniad
