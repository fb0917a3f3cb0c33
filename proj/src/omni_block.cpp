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

#include "omniad/omni_block.hpp"

#include <cmath>

#include "omniad/errors.hpp"

namespace omniad {

std::string to_string(DecoupleOrder order) {
  switch (order) {
    case DecoupleOrder::kQueryThenKeyValue: return "Q+KV";
    case DecoupleOrder::kQueryThenQuery: return "Q+Q";
    case DecoupleOrder::kKeyValueThenKeyValue: return "KV+KV";
    case DecoupleOrder::kKeyValueThenQuery: return "KV+Q";
  }
  return "?";
}

DecoupleOrder parse_decouple_order(const std::string& text) {
  if (text == "Q+KV") return DecoupleOrder::kQueryThenKeyValue;
  if (text == "Q+Q") return DecoupleOrder::kQueryThenQuery;
  if (text == "KV+KV") return DecoupleOrder::kKeyValueThenKeyValue;
  if (text == "KV+Q") return DecoupleOrder::kKeyValueThenQuery;
  throw ConfigError("unknown decouple order '" + text + "' (expected Q+KV, Q+Q, KV+KV or KV+Q)");
}

namespace {

std::pair<AttentionMode, AttentionMode> modes_of(DecoupleOrder order) {
  using M = AttentionMode;
  switch (order) {
    case DecoupleOrder::kQueryThenKeyValue: return {M::kLearnableQuery, M::kLearnableKeyValue};
    case DecoupleOrder::kQueryThenQuery: return {M::kLearnableQuery, M::kLearnableQuery};
    case DecoupleOrder::kKeyValueThenKeyValue: return {M::kLearnableKeyValue, M::kLearnableKeyValue};
    case DecoupleOrder::kKeyValueThenQuery: return {M::kLearnableKeyValue, M::kLearnableQuery};
  }
  return {M::kLearnableQuery, M::kLearnableKeyValue};
}

std::size_t integer_sqrt(std::size_t n) {
  auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r;
}

// Views any accepted token layout as [B, h, w, D].
Tensor as_image(const Tensor& x, const BlockConfig& cfg) {
  const std::size_t n = cfg.num_positions();
  if (x.rank() == 4 && x.dim(1) == cfg.height && x.dim(2) == cfg.width && x.dim(3) == cfg.dim) return x;
  if (x.rank() == 2 && x.dim(0) == n && x.dim(1) == cfg.dim) {
    return ops::reshape(x, {1, cfg.height, cfg.width, cfg.dim});
  }
  if (x.rank() == 3 && x.dim(1) == n && x.dim(2) == cfg.dim) {
    return ops::reshape(x, {x.dim(0), cfg.height, cfg.width, cfg.dim});
  }
  throw DimensionError("omni-block: input " + shape_string(x.shape()) + " does not hold N = " +
                       std::to_string(cfg.height) + "x" + std::to_string(cfg.width) +
                       " tokens of width " + std::to_string(cfg.dim));
}

Tensor restore_layout(const Tensor& y, const Tensor& like) {
  if (y.shape() == like.shape()) return y;
  return ops::reshape(y, like.shape());
}

Tensor global_image(const Tensor& x4, const OmniBlockParams& params, const BlockConfig& cfg) {
  const std::size_t batch = x4.dim(0);
  const std::size_t n = cfg.num_positions();
  const std::size_t grid = cfg.token_grid();
  Tensor y = x4;
  for (const GlobalStageParams& stage : params.global) {
    const Tensor normed = ops::layer_norm(y, stage.norm.gamma, stage.norm.beta);
    const Tensor tokens = ops::reshape(normed, {batch, n, cfg.dim});
    if (stage.mode == AttentionMode::kLearnableQuery) {
      const Tensor f = ops::multi_head_attention(stage.tokens, tokens, tokens, stage.mha, cfg.heads);
      const Tensor up = ops::bilinear_resize(ops::reshape(f, {batch, grid, grid, cfg.dim}),
                                             cfg.height, cfg.width);
      y = ops::add(up, y);
    } else {
      const Tensor k = ops::matmul(stage.tokens, stage.source_wk);
      const Tensor v = ops::matmul(stage.tokens, stage.source_wv);
      const Tensor f = ops::multi_head_attention(tokens, k, v, stage.mha, cfg.heads);
      y = ops::add(ops::reshape(f, x4.shape()), y);
    }
  }
  return y;
}

Tensor local_image(const Tensor& x4, const LocalBranchParams& p) {
  const Tensor f3 = ops::pointwise_conv(ops::depthwise_conv2d(x4, p.dw3), p.pw3_w, p.pw3_b);
  const Tensor f4 = ops::pointwise_conv(ops::depthwise_conv2d(x4, p.dw5), p.pw5_w, p.pw5_b);
  return ops::pointwise_conv(ops::concat_channels(f3, f4), p.fuse_w, p.fuse_b);
}

void add_named(std::vector<std::pair<std::string, Tensor>>& out, const std::string& name,
               const Tensor& t) {
  if (t.defined()) out.emplace_back(name, t);
}

}  // namespace

std::size_t BlockConfig::token_grid() const { return integer_sqrt(tokens); }

void BlockConfig::validate() const {
  if (dim == 0 || heads == 0 || dim % heads != 0) {
    throw ConfigError("block width " + std::to_string(dim) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if (tokens == 0 || token_grid() * token_grid() != tokens) {
    throw ConfigError("token count " + std::to_string(tokens) + " is not a positive perfect square");
  }
  if (height == 0 || width == 0) throw ConfigError("block spatial extents must be positive");
  if (!global_enabled && !local_enabled) {
    throw ConfigError("at least one of the global and local branches must be enabled");
  }
}

OmniBlockParams OmniBlockParams::init(const BlockConfig& cfg, double std, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.dim;
  OmniBlockParams p;
  if (cfg.global_enabled) {
    const auto [first, second] = modes_of(cfg.order);
    for (AttentionMode mode : {first, second}) {
      GlobalStageParams s;
      s.mode = mode;
      s.tokens = truncated_normal({cfg.tokens, d}, std, rng);
      if (mode == AttentionMode::kLearnableKeyValue) {
        s.source_wk = truncated_normal({d, d}, std, rng);
        s.source_wv = truncated_normal({d, d}, std, rng);
      }
      s.mha.wq = truncated_normal({d, d}, std, rng);
      s.mha.wk = truncated_normal({d, d}, std, rng);
      s.mha.wv = truncated_normal({d, d}, std, rng);
      s.mha.wo = truncated_normal({d, d}, std, rng);
      s.norm = {Tensor::ones({d}), Tensor::zeros({d})};
      p.global.push_back(std::move(s));
    }
  }
  if (cfg.local_enabled) {
    LocalBranchParams l;
    l.dw3 = truncated_normal({3, 3, d}, std, rng);
    l.dw5 = truncated_normal({5, 5, d}, std, rng);
    l.pw3_w = truncated_normal({d, d}, std, rng);
    l.pw3_b = Tensor::zeros({d});
    l.pw5_w = truncated_normal({d, d}, std, rng);
    l.pw5_b = Tensor::zeros({d});
    l.fuse_w = truncated_normal({2 * d, d}, std, rng);
    l.fuse_b = Tensor::zeros({d});
    p.local = std::move(l);
  }
  p.mlp.norm = {Tensor::ones({d}), Tensor::zeros({d})};
  p.mlp.fc1_w = truncated_normal({d, 4 * d}, std, rng);
  p.mlp.fc1_b = Tensor::zeros({4 * d});
  p.mlp.fc2_w = truncated_normal({4 * d, d}, std, rng);
  p.mlp.fc2_b = Tensor::zeros({d});
  return p;
}

std::vector<std::pair<std::string, Tensor>> OmniBlockParams::named_parameters(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t i = 0; i < global.size(); ++i) {
    const GlobalStageParams& s = global[i];
    const std::string g = prefix + "global" + std::to_string(i) + ".";
    add_named(out, g + "tokens", s.tokens);
    add_named(out, g + "source_wk", s.source_wk);
    add_named(out, g + "source_wv", s.source_wv);
    add_named(out, g + "mha.wq", s.mha.wq);
    add_named(out, g + "mha.wk", s.mha.wk);
    add_named(out, g + "mha.wv", s.mha.wv);
    add_named(out, g + "mha.wo", s.mha.wo);
    add_named(out, g + "norm.gamma", s.norm.gamma);
    add_named(out, g + "norm.beta", s.norm.beta);
  }
  if (local) {
    const std::string l = prefix + "local.";
    add_named(out, l + "dw3", local->dw3);
    add_named(out, l + "dw5", local->dw5);
    add_named(out, l + "pw3.w", local->pw3_w);
    add_named(out, l + "pw3.b", local->pw3_b);
    add_named(out, l + "pw5.w", local->pw5_w);
    add_named(out, l + "pw5.b", local->pw5_b);
    add_named(out, l + "fuse.w", local->fuse_w);
    add_named(out, l + "fuse.b", local->fuse_b);
  }
  const std::string m = prefix + "mlp.";
  add_named(out, m + "norm.gamma", mlp.norm.gamma);
  add_named(out, m + "norm.beta", mlp.norm.beta);
  add_named(out, m + "fc1.w", mlp.fc1_w);
  add_named(out, m + "fc1.b", mlp.fc1_b);
  add_named(out, m + "fc2.w", mlp.fc2_w);
  add_named(out, m + "fc2.b", mlp.fc2_b);
  return out;
}

Tensor global_branch(const Tensor& x, const OmniBlockParams& params, const BlockConfig& cfg) {
  cfg.validate();
  if (!cfg.global_enabled || params.global.empty()) {
    throw ConfigError("global_branch called with the global branch disabled");
  }
  return restore_layout(global_image(as_image(x, cfg), params, cfg), x);
}

Tensor local_branch(const Tensor& x, const OmniBlockParams& params, const BlockConfig& cfg) {
  cfg.validate();
  if (!cfg.local_enabled || !params.local) {
    throw ConfigError("local_branch called with the local branch disabled");
  }
  return restore_layout(local_image(as_image(x, cfg), *params.local), x);
}

Tensor omni_block_forward(const Tensor& x, const OmniBlockParams& params, const BlockConfig& cfg) {
  cfg.validate();
  const Tensor x4 = as_image(x, cfg);
  Tensor mixed;
  if (cfg.global_enabled) mixed = global_image(x4, params, cfg);
  if (cfg.local_enabled) {
    const Tensor f5 = local_image(x4, *params.local);
    mixed = mixed.defined() ? ops::add(mixed, f5) : f5;
  }
  const MlpParams& m = params.mlp;
  const Tensor hidden =
      ops::gelu(ops::linear(ops::layer_norm(mixed, m.norm.gamma, m.norm.beta), m.fc1_w, m.fc1_b));
  const Tensor out = ops::add(ops::linear(hidden, m.fc2_w, m.fc2_b), x4);
  return restore_layout(out, x);
}

std::size_t global_branch_parameter_count(std::size_t dim, std::size_t tokens, DecoupleOrder order) {
  const auto [first, second] = modes_of(order);
  std::size_t total = 0;
  for (AttentionMode mode : {first, second}) {
    total += tokens * dim + 4 * dim * dim + 2 * dim;
    if (mode == AttentionMode::kLearnableKeyValue) total += 2 * dim * dim;
  }
  return total;
}

std::size_t local_branch_parameter_count(std::size_t dim) {
  return 9 * dim + 25 * dim + 2 * (dim * dim + dim) + (2 * dim * dim + dim);
}

std::size_t mlp_parameter_count(std::size_t dim) {
  return 2 * dim + (dim * 4 * dim + 4 * dim) + (4 * dim * dim + dim);
}

std::size_t omni_block_parameter_count(const BlockConfig& cfg) {
  std::size_t total = mlp_parameter_count(cfg.dim);
  if (cfg.global_enabled) total += global_branch_parameter_count(cfg.dim, cfg.tokens, cfg.order);
  if (cfg.local_enabled) total += local_branch_parameter_count(cfg.dim);
  return total;
}

AttentionFlops attention_flop_count(std::uint64_t n, std::uint64_t tokens, std::uint64_t dim,
                                    std::uint64_t heads) {
  if (n == 0 || tokens == 0 || dim == 0 || heads == 0) {
    throw ConfigError("attention_flop_count: arguments must be positive");
  }
  // The dot-product stage costs the same regardless of how D is split into heads.
  return {2 * n * tokens * dim, 2 * n * n * dim};
}

}  // namespace omniad
