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
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "omniad/ops.hpp"
#include "omniad/random.hpp"
#include "omniad/tensor.hpp"

namespace omniad {

// Which input of each of the two global-branch attentions is replaced by
// learnable tokens. "Q" = learnable queries, "KV" = keys/values projected from
// learnable source tokens.
enum class DecoupleOrder { kQueryThenKeyValue, kQueryThenQuery, kKeyValueThenKeyValue, kKeyValueThenQuery };

std::string to_string(DecoupleOrder order);  // "Q+KV", "Q+Q", "KV+KV", "KV+Q"
DecoupleOrder parse_decouple_order(const std::string& text);

enum class AttentionMode { kLearnableQuery, kLearnableKeyValue };

struct BlockConfig {
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t tokens = 64;
  std::size_t height = 8;
  std::size_t width = 8;
  DecoupleOrder order = DecoupleOrder::kQueryThenKeyValue;
  bool global_enabled = true;
  bool local_enabled = true;

  std::size_t num_positions() const { return height * width; }
  // Side of the square grid the learnable-token outputs are laid out on.
  std::size_t token_grid() const;
  // Throws ConfigError on any violated invariant.
  void validate() const;
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
};

// One attention of the global branch together with its learnable tokens.
struct GlobalStageParams {
  AttentionMode mode = AttentionMode::kLearnableQuery;
  // Learnable queries (Q-bar) or key/value source tokens (S-bar), [T x D].
  Tensor tokens;
  // Projections of the source tokens into keys and values; only in KV mode.
  Tensor source_wk;
  Tensor source_wv;
  ops::MhaWeights mha;
  LayerNormParams norm;
};

struct LocalBranchParams {
  Tensor dw3;  // [3, 3, D]
  Tensor dw5;  // [5, 5, D]
  Tensor pw3_w, pw3_b;    // D -> D
  Tensor pw5_w, pw5_b;    // D -> D
  Tensor fuse_w, fuse_b;  // 2D -> D
};

struct MlpParams {
  LayerNormParams norm;
  Tensor fc1_w, fc1_b;  // D -> 4D
  Tensor fc2_w, fc2_b;  // 4D -> D
};

struct OmniBlockParams {
  std::vector<GlobalStageParams> global;  // empty when the global branch is off
  std::optional<LocalBranchParams> local;
  MlpParams mlp;

  // Truncated-normal weights and tokens, zero biases, unit norm scales.
  static OmniBlockParams init(const BlockConfig& cfg, double std, Rng& rng);

  std::vector<std::pair<std::string, Tensor>> named_parameters(const std::string& prefix) const;
};

// Token tensors may be [N, D], [B, N, D] or [B, h, w, D]; outputs have the
// input's shape.
Tensor global_branch(const Tensor& x, const OmniBlockParams& params, const BlockConfig& cfg);
Tensor local_branch(const Tensor& x, const OmniBlockParams& params, const BlockConfig& cfg);
// MLP(norm(global + local)) + x, a disabled branch contributing nothing.
Tensor omni_block_forward(const Tensor& x, const OmniBlockParams& params, const BlockConfig& cfg);

std::size_t global_branch_parameter_count(std::size_t dim, std::size_t tokens, DecoupleOrder order);
std::size_t local_branch_parameter_count(std::size_t dim);
std::size_t mlp_parameter_count(std::size_t dim);
std::size_t omni_block_parameter_count(const BlockConfig& cfg);

// Multiply-add counts of the key-query dot-product stage for one attention.
struct AttentionFlops {
  std::uint64_t learnable_token;  // 2 N T D
  std::uint64_t standard;         // 2 N N D
};

AttentionFlops attention_flop_count(std::uint64_t n, std::uint64_t tokens, std::uint64_t dim,
                                    std::uint64_t heads);

}  // namespace omniad
