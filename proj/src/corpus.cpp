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

#include "omniad/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include "omniad/errors.hpp"
#include "omniad/random.hpp"

namespace omniad {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct ClassStyle {
  std::size_t family;
  double frequency;  // cycles per image width
  double angle;
  std::array<double, 3> dark;
  std::array<double, 3> light;
};

ClassStyle class_style(std::size_t c) {
  ClassStyle s{};
  s.family = c % 3;
  const double tier = static_cast<double>(c / 3);
  s.frequency = 3.0 + 1.0 * tier + 0.5 * static_cast<double>(s.family);
  s.angle = 0.35 + 0.61 * static_cast<double>(c);
  // Spread tints around the hue circle.
  const double hue = 0.37 * static_cast<double>(c) + 0.1;
  for (std::size_t k = 0; k < 3; ++k) {
    const double phase = kTwoPi * (hue + static_cast<double>(k) / 3.0);
    s.light[k] = 0.65 + 0.25 * std::cos(phase);
    s.dark[k] = 0.15 + 0.1 * std::sin(phase);
  }
  return s;
}

struct Variation {
  double phase_u, phase_v, angle_jitter;
};

Variation draw_variation(Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Variation v{};
  v.phase_u = unit(rng);
  v.phase_v = unit(rng);
  v.angle_jitter = (unit(rng) - 0.5) * 0.1;
  return v;
}

// Texture intensity in [0, 1] at pixel (y, x).
double texture_value(const ClassStyle& s, const Variation& var, double y, double x, std::size_t h,
                     std::size_t w) {
  const double angle = s.angle + var.angle_jitter;
  const double u = (x * std::cos(angle) + y * std::sin(angle)) / static_cast<double>(w);
  const double v = (-x * std::sin(angle) + y * std::cos(angle)) / static_cast<double>(h);
  const double fu = s.frequency * u + var.phase_u;
  const double fv = s.frequency * v + var.phase_v;
  switch (s.family) {
    case 0:
      return 0.5 + 0.5 * std::sin(kTwoPi * fu);
    case 1:
      return 0.5 + 0.5 * std::tanh(3.0 * std::sin(kTwoPi * fu) * std::sin(kTwoPi * fv));
    default: {
      const double du = fu - std::floor(fu) - 0.5;
      const double dv = fv - std::floor(fv) - 0.5;
      return std::exp(-(du * du + dv * dv) / (2.0 * 0.16 * 0.16));
    }
  }
}

Tensor render(const ClassStyle& s, const Variation& var, std::size_t h, std::size_t w, Rng& rng) {
  std::normal_distribution<double> noise(0.0, 0.02);
  std::vector<double> px(h * w * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double t = texture_value(s, var, static_cast<double>(y), static_cast<double>(x), h, w);
      for (std::size_t k = 0; k < 3; ++k) {
        const double value = s.dark[k] + (s.light[k] - s.dark[k]) * t + noise(rng);
        px[(y * w + x) * 3 + k] = std::clamp(value, 0.0, 1.0);
      }
    }
  return Tensor(Shape{h, w, 3}, std::move(px));
}

std::string record_name(const char* split, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%05zu", split, index);
  return buf;
}

struct Rect {
  std::size_t y0, x0, rh, rw;
};

Rect draw_rect(std::size_t h, std::size_t w, Rng& rng) {
  std::uniform_int_distribution<std::size_t> rh(std::max<std::size_t>(h / 6, 4), std::max<std::size_t>(h / 3, 4));
  std::uniform_int_distribution<std::size_t> rw(std::max<std::size_t>(w / 6, 4), std::max<std::size_t>(w / 3, 4));
  Rect r{};
  r.rh = rh(rng);
  r.rw = rw(rng);
  r.y0 = std::uniform_int_distribution<std::size_t>(0, h - r.rh)(rng);
  r.x0 = std::uniform_int_distribution<std::size_t>(0, w - r.rw)(rng);
  return r;
}

void paste_rect(TestSample& sample, const Tensor& source, const Rect& r, std::size_t w) {
  auto dst = sample.image.mutable_data();
  const auto src = source.data();
  for (std::size_t y = r.y0; y < r.y0 + r.rh; ++y)
    for (std::size_t x = r.x0; x < r.x0 + r.rw; ++x) {
      for (std::size_t k = 0; k < 3; ++k) dst[(y * w + x) * 3 + k] = src[(y * w + x) * 3 + k];
      sample.mask[y * w + x] = 1;
    }
}

void inject_anomaly(TestSample& sample, std::size_t n_classes, std::size_t h, std::size_t w, Rng& rng) {
  const auto kind = std::uniform_int_distribution<int>(0, 2)(rng);
  sample.mask.assign(h * w, 0);
  if (kind == 0) {
    sample.kind = AnomalyKind::kPatchSwap;
    std::size_t other = std::uniform_int_distribution<std::size_t>(0, n_classes - 1)(rng);
    // With a single class, fall back to a foreign texture family.
    const ClassStyle style = other == sample.class_id ? class_style(sample.class_id + 1) : class_style(other);
    const Tensor donor = render(style, draw_variation(rng), h, w, rng);
    paste_rect(sample, donor, draw_rect(h, w, rng), w);
  } else if (kind == 1) {
    sample.kind = AnomalyKind::kIntensityBump;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double lo = std::max<double>(static_cast<double>(h) / 12.0, 2.5);
    const double hi = std::max<double>(static_cast<double>(h) / 6.0, lo);
    const double radius = lo + (hi - lo) * unit(rng);
    const double cy = radius + (static_cast<double>(h) - 2.0 * radius) * unit(rng);
    const double cx = radius + (static_cast<double>(w) - 2.0 * radius) * unit(rng);
    auto px = sample.image.mutable_data();
    double mean = 0.0;
    std::size_t count = 0;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double dy = static_cast<double>(y) + 0.5 - cy;
        const double dx = static_cast<double>(x) + 0.5 - cx;
        if (dy * dy + dx * dx <= radius * radius) {
          sample.mask[y * w + x] = 1;
          for (std::size_t k = 0; k < 3; ++k) mean += px[(y * w + x) * 3 + k];
          ++count;
        }
      }
    mean /= static_cast<double>(3 * count);
    const double delta = mean > 0.5 ? -0.35 : 0.35;
    for (std::size_t i = 0; i < h * w; ++i)
      if (sample.mask[i])
        for (std::size_t k = 0; k < 3; ++k) px[i * 3 + k] = std::clamp(px[i * 3 + k] + delta, 0.0, 1.0);
  } else {
    sample.kind = AnomalyKind::kTextureSplice;
    ClassStyle style = class_style(sample.class_id);
    style.angle += std::numbers::pi / 4.0;
    style.frequency *= 0.5;
    const Tensor donor = render(style, draw_variation(rng), h, w, rng);
    paste_rect(sample, donor, draw_rect(h, w, rng), w);
  }
}

}  // namespace

std::string to_string(AnomalyKind kind) {
  switch (kind) {
    case AnomalyKind::kNone:
      return "none";
    case AnomalyKind::kPatchSwap:
      return "patch-swap";
    case AnomalyKind::kIntensityBump:
      return "intensity-bump";
    case AnomalyKind::kTextureSplice:
      return "texture-splice";
  }
  return "unknown";
}

SyntheticCorpus generate_corpus(std::uint64_t seed, std::size_t n_classes, std::size_t n_train,
                                std::size_t n_test, std::size_t height, std::size_t width) {
  if (n_classes == 0 || n_train == 0 || n_test == 0) {
    throw ConfigError("generate_corpus: class, train and test counts must be positive");
  }
  if (height < 16 || width < 16) throw ConfigError("generate_corpus: images must be at least 16x16");
  SyntheticCorpus corpus;
  corpus.seed = seed;
  corpus.n_classes = n_classes;
  corpus.height = height;
  corpus.width = width;
  Rng rng(seed);
  for (std::size_t i = 0; i < n_train; ++i) {
    TrainSample s;
    s.record_id = record_name("train", i);
    s.class_id = i % n_classes;
    s.image = render(class_style(s.class_id), draw_variation(rng), height, width, rng);
    corpus.train.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < n_test; ++i) {
    TestSample s;
    s.record_id = record_name("test", i);
    s.class_id = (i / 2) % n_classes;
    s.image = render(class_style(s.class_id), draw_variation(rng), height, width, rng);
    s.anomalous = i % 2 == 1;
    if (s.anomalous) {
      inject_anomaly(s, n_classes, height, width, rng);
    } else {
      s.mask.assign(height * width, 0);
    }
    corpus.test.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace omniad
