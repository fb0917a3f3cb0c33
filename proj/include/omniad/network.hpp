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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "omniad/omni_block.hpp"
#include "omniad/tensor.hpp"

namespace omniad {

enum class ProviderKind { kSyntheticCnn, kFile };

std::string to_string(ProviderKind kind);  // "synthetic-cnn", "file"
ProviderKind parse_provider_kind(const std::string& text);

struct NetworkConfig {
  std::size_t height = 256;
  std::size_t width = 256;
  std::size_t channels = 64;  // C: width of the finest pyramid level
  std::array<std::size_t, 4> depths{3, 9, 9, 7};
  std::size_t tokens = 64;
  std::size_t heads = 4;
  DecoupleOrder order = DecoupleOrder::kQueryThenKeyValue;
  bool global_enabled = true;
  bool local_enabled = true;
  ProviderKind provider = ProviderKind::kSyntheticCnn;
  std::uint64_t provider_seed = 0;
  std::string feature_dir;
  double init_std = 0.02;
  double bn_momentum = 0.1;

  void validate() const;
  // Decoder stage s in 0..3 runs at (H/32 * 2^s) x (W/32 * 2^s) with 8C / 2^s channels.
  BlockConfig block_config(std::size_t stage) const;
  // Pyramid level k in 0..2 is (H / 2^(k+2)) x (W / 2^(k+2)) x 2^k C.
  Shape level_shape(std::size_t level) const;
  Shape fused_shape() const;

  bool operator==(const NetworkConfig&) const = default;
};

// Three encoder levels, finest first. Each is [h, w, C_k] or batched [B, h, w, C_k].
struct FeaturePyramid {
  std::array<Tensor, 3> levels;
};

// Throws FormatError listing expected vs found extents on any mismatch.
void validate_pyramid(const FeaturePyramid& p, const NetworkConfig& cfg);
// Stacks unbatched pyramids into one batched pyramid.
FeaturePyramid stack_pyramids(std::span<const FeaturePyramid> items);
// Item i of a batched pyramid, unbatched.
FeaturePyramid pyramid_at(const FeaturePyramid& batch, std::size_t index);

class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  // image is [H, W, 3] with values in [0, 1].
  virtual FeaturePyramid extract(const Tensor& image) const = 0;
  virtual FeaturePyramid extract_record(const std::string& record_id) const;
};

/// Frozen, randomly initialised strided CNN standing in for a pretrained
/// backbone: a stride-2 stem followed by three stride-2 stages of two 3x3
/// conv + ReLU layers each, with reflect padding.
class SyntheticCnnProvider : public FeatureProvider {
 public:
  SyntheticCnnProvider(const NetworkConfig& cfg, std::uint64_t seed);
  FeaturePyramid extract(const Tensor& image) const override;
  // FNV-1a hash over every weight, for checking the provider stays frozen.
  std::uint64_t fingerprint() const;

 private:
  struct Conv {
    Tensor weight, bias;
    std::size_t stride;
  };
  NetworkConfig cfg_;
  Conv stem_;
  std::array<std::array<Conv, 2>, 3> stages_;
};

/// Reads pyramids written by write_pyramid(): <dir>/<record>_l{1,2,3}.omt.
class FileFeatureProvider : public FeatureProvider {
 public:
  FileFeatureProvider(const NetworkConfig& cfg, std::filesystem::path dir);
  FeaturePyramid extract(const Tensor& image) const override;
  FeaturePyramid extract_record(const std::string& record_id) const override;

  static void write_pyramid(const std::filesystem::path& dir, const std::string& record_id,
                            const FeaturePyramid& p);

 private:
  NetworkConfig cfg_;
  std::filesystem::path dir_;
};

std::unique_ptr<FeatureProvider> make_feature_provider(const NetworkConfig& cfg);

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Conv + BatchNorm + ReLU.
struct CbrParams {
  Tensor weight, bias;
  Tensor gamma, beta;
  Tensor running_mean, running_var;
  std::size_t stride = 1;
};

/// Progressive fusion of the three pyramid levels into one H/32 x W/32 x 8C map:
///   a = CBR_s2(l1) -> 2C;  b = CBR(cat(a, l2)) -> 2C
///   c = CBR_s2(b) -> 4C;   d = CBR(cat(c, l3)) -> 4C
///   fused = CBR_s2(d) -> 8C (bottleneck)
struct FusionNeck {
  std::array<CbrParams, 5> cbr;

  static FusionNeck init(const NetworkConfig& cfg, Rng& rng);
  Tensor forward(const FeaturePyramid& p, bool training, double momentum) const;
  NamedTensors named_parameters(const std::string& prefix) const;
  NamedTensors named_buffers(const std::string& prefix) const;
};

Tensor cbr_forward(const Tensor& x, const CbrParams& p, bool training, double momentum);

// Bilinear x2 followed by a pointwise projection D -> D/2.
struct Upsampler {
  Tensor weight, bias;
};

struct Decoder {
  std::array<std::vector<OmniBlockParams>, 4> stages;
  std::array<Upsampler, 3> upsamplers;

  static Decoder init(const NetworkConfig& cfg, Rng& rng);
  // Returns reconstructions of the pyramid levels, finest first.
  FeaturePyramid forward(const Tensor& fused, const NetworkConfig& cfg) const;
  NamedTensors named_parameters(const std::string& prefix) const;
};

class OmniAdModel {
 public:
  OmniAdModel(const NetworkConfig& cfg, std::uint64_t seed);

  const NetworkConfig& config() const { return cfg_; }
  FusionNeck& neck() { return neck_; }
  const FusionNeck& neck() const { return neck_; }
  Decoder& decoder() { return decoder_; }
  const Decoder& decoder() const { return decoder_; }

  // Trainable tensors with stable, unique names.
  NamedTensors named_parameters() const;
  // Non-trainable state (batch-norm running statistics).
  NamedTensors named_buffers() const;
  std::vector<Tensor> parameters() const;

  Tensor fuse(const FeaturePyramid& batch, bool training) const;
  FeaturePyramid forward(const FeaturePyramid& batch, bool training) const;

  std::size_t decoder_parameter_count() const;

 private:
  NetworkConfig cfg_;
  FusionNeck neck_;
  Decoder decoder_;
};

// Closed-form decoder size: blocks of every stage plus the three upsamplers.
std::size_t decoder_parameter_count_formula(const NetworkConfig& cfg);

/// sum_k ||orig_k - recon_k||^2 / (H_k W_k), averaged over the batch.
Tensor reconstruction_loss(const FeaturePyramid& original, const FeaturePyramid& recon);

}  // namespace omniad
