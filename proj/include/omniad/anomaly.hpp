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

#include "omniad/network.hpp"
#include "omniad/tensor.hpp"

namespace omniad {

struct AnomalyMap {
  Tensor map;  // [H, W]
  double image_score = 0.0;
};

// 1 - cos over the channel vector at each pixel of two [h, w, C] maps -> [h, w].
// A zero vector on either side has cosine 0.
Tensor cosine_distance_map(const Tensor& a, const Tensor& b);

// Per-scale distance maps resized to out_h x out_w and summed, before smoothing.
Tensor combined_distance_map(const FeaturePyramid& original, const FeaturePyramid& recon,
                             std::size_t out_h, std::size_t out_w);

// Separable Gaussian with radius ceil(4 sigma) and replicated borders; sigma 0 is the identity.
Tensor gaussian_blur(const Tensor& map, double sigma);

AnomalyMap anomaly_map(const FeaturePyramid& original, const FeaturePyramid& recon, std::size_t out_h,
                       std::size_t out_w, double sigma = 4.0);

}  // namespace omniad
