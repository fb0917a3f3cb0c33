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

#include <cstdint>
#include <span>
#include <vector>

#include "omniad/tensor.hpp"

namespace omniad {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// Per-parameter moments plus the shared step counter.
struct AdamWState {
  AdamWOptions options;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t t = 0;

  AdamWState() = default;
  AdamWState(AdamWOptions opts, std::span<const Tensor> params);
};

/// One AdamW update. Weight decay is decoupled: p -= lr * wd * p is applied
/// before the bias-corrected Adam step. Parameters without a gradient are
/// treated as having a zero gradient.
void adamw_step(std::span<Tensor> params, AdamWState& state);

}  // namespace omniad
