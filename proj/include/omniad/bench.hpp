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
#include <string>
#include <vector>

namespace omniad {

struct BenchOptions {
  std::vector<std::size_t> sizes{256, 1024, 4096};
  std::size_t tokens = 64;
  std::size_t dim = 256;
  std::size_t heads = 4;
  std::size_t repeats = 3;
  std::uint64_t seed = 0;
};

/// Median wall-clock milliseconds per attention variant at one sequence length.
/// "core" times only the dot-product stage on pre-projected inputs; "full"
/// includes the Q/K/V/O projections.
struct BenchRow {
  std::size_t n = 0;
  double learnable_core_ms = 0.0;
  double learnable_full_ms = 0.0;
  double standard_core_ms = 0.0;
  double standard_full_ms = 0.0;
  double learnable_flops = 0.0;
  double standard_flops = 0.0;
  double flop_ratio = 0.0;
};

std::vector<BenchRow> bench_attention(const BenchOptions& options);
std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace omniad
