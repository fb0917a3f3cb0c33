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

#include "omniad/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "omniad/errors.hpp"
#include "omniad/io.hpp"
#include "omniad/ops.hpp"

namespace omniad {

std::string to_string(ProviderKind kind) {
  return kind == ProviderKind::kSyntheticCnn ? "synthetic-cnn" : "file";
}

ProviderKind parse_provider_kind(const std::string& text) {
  if (text == "synthetic-cnn") return ProviderKind::kSyntheticCnn;
  if (text == "file") return ProviderKind::kFile;
  throw ConfigError("unknown feature provider '" + text + "' (expected synthetic-cnn or file)");
}

// ---- NetworkConfig -------------------------------------------------------------

void NetworkConfig::validate() const {
  if (height == 0 || width == 0 || height % 32 != 0 || width % 32 != 0) {
    throw ConfigError("input size " + std::to_string(height) + "x" + std::to_string(width) +
                      " must be positive and divisible by 32");
  }
  if (channels == 0) throw ConfigError("channel base must be positive");
  for (std::size_t d : depths) {
    if (d == 0) throw ConfigError("every decoder stage needs at least one block");
  }
  if (!(bn_momentum > 0.0 && bn_momentum <= 1.0)) throw ConfigError("bn_momentum must be in (0, 1]");
  if (!(init_std > 0.0)) throw ConfigError("init_std must be positive");
  for (std::size_t s = 0; s < 4; ++s) block_config(s).validate();
}

BlockConfig NetworkConfig::block_config(std::size_t stage) const {
  BlockConfig b;
  b.dim = (8 * channels) >> stage;
  b.heads = heads;
  b.tokens = tokens;
  b.height = (height / 32) << stage;
  b.width = (width / 32) << stage;
  b.order = order;
  b.global_enabled = global_enabled;
  b.local_enabled = local_enabled;
  return b;
}

Shape NetworkConfig::level_shape(std::size_t level) const {
  return {height >> (level + 2), width >> (level + 2), channels << level};
}

Shape NetworkConfig::fused_shape() const { return {height / 32, width / 32, 8 * channels}; }

// ---- pyramids ------------------------------------------------------------------

void validate_pyramid(const FeaturePyramid& p, const NetworkConfig& cfg) {
  std::size_t batch = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const Tensor& t = p.levels[k];
    const Shape want = cfg.level_shape(k);
    if (!t.defined()) throw FormatError("pyramid level l" + std::to_string(k + 1) + " is missing");
    Shape got = t.shape();
    std::size_t b = 1;
    if (got.size() == 4) {
      b = got[0];
      got.erase(got.begin());
    }
    if (k == 0) batch = b;
    if (got != want || b != batch) {
      throw FormatError("pyramid level l" + std::to_string(k + 1) + ": expected " +
                        shape_string(want) + ", found " + shape_string(t.shape()));
    }
  }
}

FeaturePyramid stack_pyramids(std::span<const FeaturePyramid> items) {
  if (items.empty()) throw ContractError("stack_pyramids: no pyramids given");
  FeaturePyramid out;
  for (std::size_t k = 0; k < 3; ++k) {
    const Shape& base = items[0].levels[k].shape();
    Shape shape{items.size()};
    shape.insert(shape.end(), base.begin(), base.end());
    std::vector<double> data;
    data.reserve(shape_numel(shape));
    for (const FeaturePyramid& p : items) {
      if (p.levels[k].shape() != base) {
        throw DimensionError("stack_pyramids: level shapes differ " + shape_string(base) + " vs " +
                             shape_string(p.levels[k].shape()));
      }
      data.insert(data.end(), p.levels[k].data().begin(), p.levels[k].data().end());
    }
    out.levels[k] = Tensor(std::move(shape), std::move(data));
  }
  return out;
}

FeaturePyramid pyramid_at(const FeaturePyramid& batch, std::size_t index) {
  FeaturePyramid out;
  for (std::size_t k = 0; k < 3; ++k) {
    const Tensor& t = batch.levels[k];
    if (t.rank() != 4 || index >= t.dim(0)) {
      throw DimensionError("pyramid_at: no item " + std::to_string(index) + " in " + shape_string(t.shape()));
    }
    Shape item(t.shape().begin() + 1, t.shape().end());
    const std::size_t n = shape_numel(item);
    out.levels[k] = Tensor(item, std::vector<double>(t.data().begin() + index * n,
                                                     t.data().begin() + (index + 1) * n));
  }
  return out;
}

// ---- feature providers -------------------------------------------------------

FeaturePyramid FeatureProvider::extract_record(const std::string& record_id) const {
  throw ContractError("this feature provider cannot load record '" + record_id + "'");
}

SyntheticCnnProvider::SyntheticCnnProvider(const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  Rng rng(seed ^ 0x5eedf00dULL);
  auto make = [&rng](std::size_t cin, std::size_t cout, std::size_t stride) {
    const double std = std::sqrt(2.0 / (9.0 * static_cast<double>(cin)));
    return Conv{normal({3, 3, cin, cout}, std, rng), Tensor::zeros({cout}), stride};
  };
  const std::size_t stem = std::max<std::size_t>(1, cfg.channels / 2);
  stem_ = make(3, stem, 2);
  std::size_t cin = stem;
  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t cout = cfg.channels << k;
    stages_[k][0] = make(cin, cout, 2);
    stages_[k][1] = make(cout, cout, 1);
    cin = cout;
  }
}

namespace {

// Mirror padding by one pixel without repeating the edge row or column.
Tensor reflect_pad(const Tensor& x) {
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  auto mirror = [](std::ptrdiff_t i, std::size_t n) {
    if (n == 1) return std::size_t{0};
    if (i < 0) return static_cast<std::size_t>(-i);
    if (i >= static_cast<std::ptrdiff_t>(n)) return 2 * n - 2 - static_cast<std::size_t>(i);
    return static_cast<std::size_t>(i);
  };
  Tensor out(Shape{h + 2, w + 2, c});
  auto dst = out.mutable_data();
  const auto src = x.data();
  for (std::size_t y = 0; y < h + 2; ++y)
    for (std::size_t xx = 0; xx < w + 2; ++xx) {
      const std::size_t sy = mirror(static_cast<std::ptrdiff_t>(y) - 1, h);
      const std::size_t sx = mirror(static_cast<std::ptrdiff_t>(xx) - 1, w);
      std::copy_n(&src[(sy * w + sx) * c], c, &dst[(y * (w + 2) + xx) * c]);
    }
  return out;
}

// 3x3 convolution over a reflect-padded input; stride 2 keeps every other centre.
Tensor reflect_conv(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride) {
  const std::size_t h = x.dim(0), w = x.dim(1);
  const Tensor full = ops::conv2d(reflect_pad(x), weight, bias, 1);
  const std::size_t c = full.dim(2);
  const std::size_t oh = (h - 1) / stride + 1, ow = (w - 1) / stride + 1;
  Tensor out(Shape{oh, ow, c});
  auto dst = out.mutable_data();
  const auto src = full.data();
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t xx = 0; xx < ow; ++xx) {
      const std::size_t sy = 1 + y * stride, sx = 1 + xx * stride;
      std::copy_n(&src[(sy * (w + 2) + sx) * c], c, &dst[(y * ow + xx) * c]);
    }
  return out;
}

}  // namespace

FeaturePyramid SyntheticCnnProvider::extract(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(0) != cfg_.height || image.dim(1) != cfg_.width ||
      image.dim(2) != 3) {
    throw DimensionError("feature extractor expects a " + std::to_string(cfg_.height) + "x" +
                         std::to_string(cfg_.width) + "x3 image, got " + shape_string(image.shape()));
  }
  NoGradGuard frozen;
  Tensor centered(image.shape());
  for (std::size_t i = 0; i < image.numel(); ++i) centered.mutable_data()[i] = image[i] - 0.5;
  Tensor x = ops::relu(reflect_conv(centered, stem_.weight, stem_.bias, stem_.stride));
  FeaturePyramid out;
  for (std::size_t k = 0; k < 3; ++k) {
    for (const Conv& c : stages_[k]) x = ops::relu(reflect_conv(x, c.weight, c.bias, c.stride));
    out.levels[k] = x;
  }
  return out;
}

std::uint64_t SyntheticCnnProvider::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const Tensor& t) {
    for (double v : t.data()) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    }
  };
  mix(stem_.weight);
  mix(stem_.bias);
  for (const auto& stage : stages_)
    for (const Conv& c : stage) {
      mix(c.weight);
      mix(c.bias);
    }
  return h;
}

FileFeatureProvider::FileFeatureProvider(const NetworkConfig& cfg, std::filesystem::path dir)
    : cfg_(cfg), dir_(std::move(dir)) {}

FeaturePyramid FileFeatureProvider::extract(const Tensor&) const {
  throw ContractError("the file feature provider loads features by record id, not from pixels");
}

FeaturePyramid FileFeatureProvider::extract_record(const std::string& record_id) const {
  FeaturePyramid p;
  for (std::size_t k = 0; k < 3; ++k) {
    p.levels[k] = io::read_tensor_file(dir_ / (record_id + "_l" + std::to_string(k + 1) + ".omt"));
  }
  validate_pyramid(p, cfg_);
  return p;
}

void FileFeatureProvider::write_pyramid(const std::filesystem::path& dir, const std::string& record_id,
                                        const FeaturePyramid& p) {
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < 3; ++k) {
    io::write_tensor_file(dir / (record_id + "_l" + std::to_string(k + 1) + ".omt"), p.levels[k]);
  }
}

std::unique_ptr<FeatureProvider> make_feature_provider(const NetworkConfig& cfg) {
  if (cfg.provider == ProviderKind::kFile) {
    return std::make_unique<FileFeatureProvider>(cfg, cfg.feature_dir);
  }
  return std::make_unique<SyntheticCnnProvider>(cfg, cfg.provider_seed);
}

// ---- neck ----------------------------------------------------------------------

Tensor cbr_forward(const Tensor& x, const CbrParams& p, bool training, double momentum) {
  Tensor rm = p.running_mean;
  Tensor rv = p.running_var;
  const Tensor conv = ops::conv2d(x, p.weight, p.bias, p.stride);
  return ops::relu(ops::batch_norm(conv, p.gamma, p.beta, rm, rv, training, momentum));
}

FusionNeck FusionNeck::init(const NetworkConfig& cfg, Rng& rng) {
  const std::size_t c = cfg.channels;
  auto make = [&](std::size_t cin, std::size_t cout, std::size_t stride) {
    CbrParams p;
    p.weight = truncated_normal({3, 3, cin, cout}, cfg.init_std, rng);
    p.bias = Tensor::zeros({cout});
    p.gamma = Tensor::ones({cout});
    p.beta = Tensor::zeros({cout});
    p.running_mean = Tensor::zeros({cout});
    p.running_var = Tensor::ones({cout});
    p.stride = stride;
    return p;
  };
  FusionNeck n;
  n.cbr[0] = make(c, 2 * c, 2);
  n.cbr[1] = make(4 * c, 2 * c, 1);
  n.cbr[2] = make(2 * c, 4 * c, 2);
  n.cbr[3] = make(8 * c, 4 * c, 1);
  n.cbr[4] = make(4 * c, 8 * c, 2);
  return n;
}

Tensor FusionNeck::forward(const FeaturePyramid& p, bool training, double momentum) const {
  const Tensor a = cbr_forward(p.levels[0], cbr[0], training, momentum);
  const Tensor b = cbr_forward(ops::concat_channels(a, p.levels[1]), cbr[1], training, momentum);
  const Tensor c = cbr_forward(b, cbr[2], training, momentum);
  const Tensor d = cbr_forward(ops::concat_channels(c, p.levels[2]), cbr[3], training, momentum);
  return cbr_forward(d, cbr[4], training, momentum);
}

NamedTensors FusionNeck::named_parameters(const std::string& prefix) const {
  NamedTensors out;
  for (std::size_t i = 0; i < cbr.size(); ++i) {
    const std::string p = prefix + "cbr" + std::to_string(i) + ".";
    out.emplace_back(p + "weight", cbr[i].weight);
    out.emplace_back(p + "bias", cbr[i].bias);
    out.emplace_back(p + "gamma", cbr[i].gamma);
    out.emplace_back(p + "beta", cbr[i].beta);
  }
  return out;
}

NamedTensors FusionNeck::named_buffers(const std::string& prefix) const {
  NamedTensors out;
  for (std::size_t i = 0; i < cbr.size(); ++i) {
    const std::string p = prefix + "cbr" + std::to_string(i) + ".";
    out.emplace_back(p + "running_mean", cbr[i].running_mean);
    out.emplace_back(p + "running_var", cbr[i].running_var);
  }
  return out;
}

// ---- decoder -------------------------------------------------------------------

Decoder Decoder::init(const NetworkConfig& cfg, Rng& rng) {
  Decoder d;
  for (std::size_t s = 0; s < 4; ++s) {
    const BlockConfig bc = cfg.block_config(s);
    if (s > 0) {
      const std::size_t din = 2 * bc.dim;
      d.upsamplers[s - 1] = {truncated_normal({din, bc.dim}, cfg.init_std, rng), Tensor::zeros({bc.dim})};
    }
    for (std::size_t i = 0; i < cfg.depths[s]; ++i) {
      d.stages[s].push_back(OmniBlockParams::init(bc, cfg.init_std, rng));
    }
  }
  return d;
}

FeaturePyramid Decoder::forward(const Tensor& fused, const NetworkConfig& cfg) const {
  const Shape want = cfg.fused_shape();
  const bool unbatched = fused.rank() == 3;
  Shape got = fused.shape();
  if (!unbatched && got.size() == 4) got.erase(got.begin());
  if (got != want) {
    throw DimensionError("decoder input " + shape_string(fused.shape()) + " does not match " +
                         shape_string(want));
  }
  Tensor x = unbatched ? ops::reshape(fused, {1, want[0], want[1], want[2]}) : fused;
  FeaturePyramid out;
  for (std::size_t s = 0; s < 4; ++s) {
    const BlockConfig bc = cfg.block_config(s);
    if (s > 0) {
      const Upsampler& up = upsamplers[s - 1];
      x = ops::pointwise_conv(ops::bilinear_resize(x, bc.height, bc.width), up.weight, up.bias);
    }
    for (const OmniBlockParams& block : stages[s]) x = omni_block_forward(x, block, bc);
    if (s > 0) {
      const std::size_t level = 3 - s;  // stage 2 -> l3, stage 3 -> l2, stage 4 -> l1
      out.levels[level] = unbatched ? ops::reshape(x, {bc.height, bc.width, bc.dim}) : x;
    }
  }
  return out;
}

NamedTensors Decoder::named_parameters(const std::string& prefix) const {
  NamedTensors out;
  for (std::size_t s = 0; s < 4; ++s) {
    if (s > 0) {
      const std::string u = prefix + "up" + std::to_string(s - 1) + ".";
      out.emplace_back(u + "weight", upsamplers[s - 1].weight);
      out.emplace_back(u + "bias", upsamplers[s - 1].bias);
    }
    for (std::size_t i = 0; i < stages[s].size(); ++i) {
      auto block = stages[s][i].named_parameters(prefix + "s" + std::to_string(s) + ".b" +
                                                 std::to_string(i) + ".");
      out.insert(out.end(), block.begin(), block.end());
    }
  }
  return out;
}

// ---- model ---------------------------------------------------------------------

OmniAdModel::OmniAdModel(const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  neck_ = FusionNeck::init(cfg_, rng);
  decoder_ = Decoder::init(cfg_, rng);
  for (auto& [name, t] : named_parameters()) t.set_requires_grad(true);
}

NamedTensors OmniAdModel::named_parameters() const {
  NamedTensors out = neck_.named_parameters("neck.");
  NamedTensors dec = decoder_.named_parameters("dec.");
  out.insert(out.end(), dec.begin(), dec.end());
  return out;
}

NamedTensors OmniAdModel::named_buffers() const { return neck_.named_buffers("neck."); }

std::vector<Tensor> OmniAdModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

Tensor OmniAdModel::fuse(const FeaturePyramid& batch, bool training) const {
  validate_pyramid(batch, cfg_);
  return neck_.forward(batch, training, cfg_.bn_momentum);
}

FeaturePyramid OmniAdModel::forward(const FeaturePyramid& batch, bool training) const {
  return decoder_.forward(fuse(batch, training), cfg_);
}

std::size_t OmniAdModel::decoder_parameter_count() const {
  std::size_t total = 0;
  for (auto& [name, t] : decoder_.named_parameters("")) total += t.numel();
  return total;
}

std::size_t decoder_parameter_count_formula(const NetworkConfig& cfg) {
  std::size_t total = 0;
  for (std::size_t s = 0; s < 4; ++s) {
    const BlockConfig bc = cfg.block_config(s);
    total += cfg.depths[s] * omni_block_parameter_count(bc);
    if (s > 0) total += 2 * bc.dim * bc.dim + bc.dim;
  }
  return total;
}

Tensor reconstruction_loss(const FeaturePyramid& original, const FeaturePyramid& recon) {
  Tensor total;
  for (std::size_t k = 0; k < 3; ++k) {
    const Tensor& a = original.levels[k];
    const Tensor& b = recon.levels[k];
    if (!a.defined() || !b.defined() || a.shape() != b.shape() || a.rank() < 3) {
      throw DimensionError("reconstruction_loss: level l" + std::to_string(k + 1) + " shapes " +
                           (a.defined() ? shape_string(a.shape()) : "<none>") + " vs " +
                           (b.defined() ? shape_string(b.shape()) : "<none>"));
    }
    const std::size_t batch = a.rank() == 4 ? a.dim(0) : 1;
    const std::size_t hw = a.dim(a.rank() - 3) * a.dim(a.rank() - 2);
    const Tensor term = ops::scale(ops::sum_squares(ops::sub(a, b)),
                                   1.0 / static_cast<double>(batch * hw));
    total = total.defined() ? ops::add(total, term) : term;
  }
  return total;
}

}  // namespace omniad
