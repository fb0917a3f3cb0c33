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

#include "omniad/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "omniad/errors.hpp"
#include "omniad/ops.hpp"

namespace omniad {

Tensor cosine_distance_map(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() != 3) {
    throw DimensionError("cosine_distance_map: expected two equal [h,w,C] maps, got " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  }
  const std::size_t h = a.dim(0), w = a.dim(1), c = a.dim(2);
  std::vector<double> out(h * w);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t p = 0; p < h * w; ++p) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double x = pa[p * c + k];
      const double y = pb[p * c + k];
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    const double cosine = (na > 0.0 && nb > 0.0) ? dot / (std::sqrt(na) * std::sqrt(nb)) : 0.0;
    out[p] = 1.0 - std::clamp(cosine, -1.0, 1.0);
  }
  return Tensor(Shape{h, w}, std::move(out));
}

Tensor combined_distance_map(const FeaturePyramid& original, const FeaturePyramid& recon, std::size_t out_h,
                             std::size_t out_w) {
  NoGradGuard no_grad;
  std::vector<double> total(out_h * out_w, 0.0);
  for (std::size_t k = 0; k < 3; ++k) {
    const Tensor m = cosine_distance_map(original.levels[k], recon.levels[k]);
    const Tensor up = ops::bilinear_resize(ops::reshape(m, Shape{m.dim(0), m.dim(1), 1}), out_h, out_w);
    const double* pu = up.data().data();
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += pu[i];
  }
  return Tensor(Shape{out_h, out_w}, std::move(total));
}

Tensor gaussian_blur(const Tensor& map, double sigma) {
  if (map.rank() != 2) throw DimensionError("gaussian_blur: expected [H,W], got " + shape_string(map.shape()));
  if (sigma < 0.0) throw ConfigError("gaussian_blur: sigma must be non-negative");
  if (sigma == 0.0) return map.detach();
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    kernel[static_cast<std::size_t>(i + radius)] = v;
    norm += v;
  }
  for (double& v : kernel) v /= norm;

  const auto h = static_cast<std::ptrdiff_t>(map.dim(0));
  const auto w = static_cast<std::ptrdiff_t>(map.dim(1));
  const double* src = map.data().data();
  std::vector<double> tmp(map.numel()), out(map.numel());
  for (std::ptrdiff_t y = 0; y < h; ++y)
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        const std::ptrdiff_t xx = std::clamp<std::ptrdiff_t>(x + i, 0, w - 1);
        acc += kernel[static_cast<std::size_t>(i + radius)] * src[y * w + xx];
      }
      tmp[static_cast<std::size_t>(y * w + x)] = acc;
    }
  for (std::ptrdiff_t y = 0; y < h; ++y)
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        const std::ptrdiff_t yy = std::clamp<std::ptrdiff_t>(y + i, 0, h - 1);
        acc += kernel[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(yy * w + x)];
      }
      out[static_cast<std::size_t>(y * w + x)] = acc;
    }
  return Tensor(map.shape(), std::move(out));
}

AnomalyMap anomaly_map(const FeaturePyramid& original, const FeaturePyramid& recon, std::size_t out_h,
                       std::size_t out_w, double sigma) {
  AnomalyMap result;
  result.map = gaussian_blur(combined_distance_map(original, recon, out_h, out_w), sigma);
  const double* p = result.map.data().data();
  result.image_score = *std::max_element(p, p + result.map.numel());
  return result;
}

}  // namespace omniad
