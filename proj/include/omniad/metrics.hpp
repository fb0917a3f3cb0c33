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
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "omniad/tensor.hpp"

// Threshold metrics for anomaly detection and localisation. All results are
// percentages in [0, 100]. Labels are 0 (normal) or nonzero (anomalous).
namespace omniad::metrics {

// Mann-Whitney: P(score+ > score-) + 0.5 P(tie).
double auroc(std::span<const std::uint8_t> labels, std::span<const double> scores);
// sum_n (R_n - R_{n-1}) P_n over descending thresholds, ties forming one step.
double average_precision(std::span<const std::uint8_t> labels, std::span<const double> scores);
// max over thresholds t in the score set (positive iff score >= t) of 2PR/(P+R).
double f1_max(std::span<const std::uint8_t> labels, std::span<const double> scores);

// 8-connected component labels of a binary [H, W] mask: 0 for background,
// 1..count for regions in raster order of their first pixel.
struct Components {
  std::vector<std::uint32_t> labels;
  std::uint32_t count = 0;
};
Components connected_components(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width);

// A binary mask / anomaly map pair of equal extents.
struct MaskedMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> mask;
  std::vector<double> scores;
};

// Area under per-region overlap vs pooled false-positive rate, trapezoidal,
// integrated over FPR in [0, fpr_cap] and normalised by fpr_cap.
double aupro(std::span<const MaskedMap> items, double fpr_cap = 0.3);

struct EvalReport {
  std::optional<double> image_auroc;
  std::optional<double> image_ap;
  std::optional<double> image_f1_max;
  std::optional<double> pixel_auroc;
  std::optional<double> pixel_ap;
  std::optional<double> pixel_f1_max;
  std::optional<double> pixel_aupro;

  // Column order of the report: image AU-ROC/AP/F1_max, pixel AU-ROC/AP/F1_max/AU-PRO.
  std::array<std::optional<double>, 7> values() const;
};

// Arithmetic mean of the seven report values; ContractError if any is missing.
double mad(const EvalReport& report);

inline constexpr std::array<const char*, 8> kReportColumns = {
    "img-auroc", "img-ap", "img-f1max", "px-auroc", "px-ap", "px-f1max", "aupro", "mad"};

std::string report_csv(const EvalReport& report);
std::string report_table(const EvalReport& report);

}  // namespace omniad::metrics
