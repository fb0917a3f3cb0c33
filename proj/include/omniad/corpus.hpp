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

#include "omniad/tensor.hpp"

namespace omniad {

enum class AnomalyKind { kNone, kPatchSwap, kIntensityBump, kTextureSplice };

std::string to_string(AnomalyKind kind);

struct TrainSample {
  std::string record_id;
  std::size_t class_id = 0;
  Tensor image;  // [H, W, 3] in [0, 1]
};

struct TestSample {
  std::string record_id;
  std::size_t class_id = 0;
  Tensor image;
  bool anomalous = false;
  AnomalyKind kind = AnomalyKind::kNone;
  std::vector<std::uint8_t> mask;  // H * W, row-major
};

/// Procedural multi-class texture corpus. Class c belongs to texture family
/// c % 3 (stripes, checkerboard, dot lattice) with class-specific frequency,
/// orientation and tint. Training images are all normal; test sample i is
/// anomalous iff i is odd, carrying one of:
///   patch swap      rectangle (H/6..H/3 per side) from another class
///   intensity bump  disk of radius H/12..H/6 shifted by +-0.35
///   texture splice  rectangle of the own texture at 45 degrees and half frequency
struct SyntheticCorpus {
  std::uint64_t seed = 0;
  std::size_t n_classes = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<TrainSample> train;
  std::vector<TestSample> test;
};

SyntheticCorpus generate_corpus(std::uint64_t seed, std::size_t n_classes, std::size_t n_train,
                                std::size_t n_test, std::size_t height, std::size_t width);

}  // namespace omniad
