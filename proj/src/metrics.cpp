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

#include "omniad/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "omniad/errors.hpp"

namespace omniad::metrics {
namespace {

void require_same_size(std::size_t labels, std::size_t scores, const char* metric) {
  if (labels != scores) {
    throw DimensionError(std::string(metric) + ": " + std::to_string(labels) + " labels vs " +
                         std::to_string(scores) + " scores");
  }
}

// Indices ordered by descending score; equal scores end up adjacent.
std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

// Positive/negative counts per group of tied scores, in descending score order.
struct TieGroup {
  std::uint64_t pos = 0;
  std::uint64_t neg = 0;
};

std::vector<TieGroup> tie_groups(std::span<const std::uint8_t> labels, std::span<const double> scores) {
  const auto order = descending_order(scores);
  std::vector<TieGroup> groups;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i == 0 || scores[order[i]] != scores[order[i - 1]]) groups.emplace_back();
    if (labels[order[i]]) {
      ++groups.back().pos;
    } else {
      ++groups.back().neg;
    }
  }
  return groups;
}

std::uint64_t count_positives(std::span<const std::uint8_t> labels) {
  return static_cast<std::uint64_t>(std::count_if(labels.begin(), labels.end(),
                                                  [](std::uint8_t l) { return l != 0; }));
}

}  // namespace

double auroc(std::span<const std::uint8_t> labels, std::span<const double> scores) {
  require_same_size(labels.size(), scores.size(), "auroc");
  const std::uint64_t pos = count_positives(labels);
  const std::uint64_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw UndefinedMetricError("auroc needs both normal and anomalous samples");
  // Walk from the lowest score up, counting negatives strictly below each group.
  const auto groups = tie_groups(labels, scores);
  std::uint64_t twice_wins = 0;
  std::uint64_t neg_below = 0;
  for (auto it = groups.rbegin(); it != groups.rend(); ++it) {
    twice_wins += 2 * it->pos * neg_below + it->pos * it->neg;
    neg_below += it->neg;
  }
  return 100.0 * static_cast<double>(twice_wins) / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
}

double average_precision(std::span<const std::uint8_t> labels, std::span<const double> scores) {
  require_same_size(labels.size(), scores.size(), "average_precision");
  const std::uint64_t pos = count_positives(labels);
  if (pos == 0) throw UndefinedMetricError("average precision needs at least one anomalous sample");
  double ap = 0.0;
  double prev_recall = 0.0;
  std::uint64_t tp = 0, fp = 0;
  for (const TieGroup& g : tie_groups(labels, scores)) {
    tp += g.pos;
    fp += g.neg;
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return 100.0 * ap;
}

double f1_max(std::span<const std::uint8_t> labels, std::span<const double> scores) {
  require_same_size(labels.size(), scores.size(), "f1_max");
  const std::uint64_t pos = count_positives(labels);
  if (pos == 0) throw UndefinedMetricError("F1 needs at least one anomalous sample");
  double best = 0.0;
  std::uint64_t tp = 0, fp = 0;
  for (const TieGroup& g : tie_groups(labels, scores)) {
    tp += g.pos;
    fp += g.neg;
    const double f1 = 2.0 * static_cast<double>(tp) /
                      (2.0 * static_cast<double>(tp) + static_cast<double>(fp) + static_cast<double>(pos - tp));
    best = std::max(best, f1);
  }
  return 100.0 * best;
}

Components connected_components(std::span<const std::uint8_t> mask, std::size_t height, std::size_t width) {
  require_same_size(mask.size(), height * width, "connected_components");
  Components out;
  out.labels.assign(mask.size(), 0);
  std::vector<std::size_t> queue;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || out.labels[start]) continue;
    const std::uint32_t id = ++out.count;
    out.labels[start] = id;
    queue.assign(1, start);
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::size_t y = queue[head] / width;
      const std::size_t x = queue[head] % width;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const auto ny = static_cast<std::ptrdiff_t>(y) + dy;
          const auto nx = static_cast<std::ptrdiff_t>(x) + dx;
          if (ny < 0 || nx < 0 || ny >= static_cast<std::ptrdiff_t>(height) ||
              nx >= static_cast<std::ptrdiff_t>(width))
            continue;
          const std::size_t n = static_cast<std::size_t>(ny) * width + static_cast<std::size_t>(nx);
          if (mask[n] && !out.labels[n]) {
            out.labels[n] = id;
            queue.push_back(n);
          }
        }
    }
  }
  return out;
}

double aupro(std::span<const MaskedMap> items, double fpr_cap) {
  if (!(fpr_cap > 0.0 && fpr_cap <= 1.0)) throw ConfigError("aupro: fpr_cap must be in (0, 1]");

  // Pool pixels; region = -1 for normal pixels, else a global region index.
  std::vector<double> scores;
  std::vector<std::int64_t> region;
  std::vector<double> region_size;
  std::uint64_t normal_pixels = 0;
  for (const MaskedMap& item : items) {
    require_same_size(item.mask.size(), item.height * item.width, "aupro(mask)");
    require_same_size(item.scores.size(), item.height * item.width, "aupro(map)");
    const Components cc = connected_components(item.mask, item.height, item.width);
    const auto base = static_cast<std::int64_t>(region_size.size());
    region_size.resize(region_size.size() + cc.count, 0.0);
    for (std::size_t i = 0; i < item.mask.size(); ++i) {
      scores.push_back(item.scores[i]);
      if (cc.labels[i]) {
        region.push_back(base + cc.labels[i] - 1);
        region_size[static_cast<std::size_t>(base + cc.labels[i] - 1)] += 1.0;
      } else {
        region.push_back(-1);
        ++normal_pixels;
      }
    }
  }
  if (region_size.empty()) throw UndefinedMetricError("aupro needs at least one anomalous region");
  if (normal_pixels == 0) throw UndefinedMetricError("aupro needs normal pixels to measure FPR");

  const auto order = descending_order(scores);
  const double regions = static_cast<double>(region_size.size());
  double area = 0.0;
  double prev_fpr = 0.0, prev_pro = 0.0;
  double overlap_sum = 0.0;
  std::uint64_t fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double t = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == t; ++i) {
      const std::int64_t r = region[order[i]];
      if (r < 0) {
        ++fp;
      } else {
        overlap_sum += 1.0 / region_size[static_cast<std::size_t>(r)];
      }
    }
    const double fpr = static_cast<double>(fp) / static_cast<double>(normal_pixels);
    const double pro = overlap_sum / regions;
    if (fpr >= fpr_cap) {
      const double at_cap = fpr > prev_fpr ? prev_pro + (pro - prev_pro) * (fpr_cap - prev_fpr) / (fpr - prev_fpr)
                                           : pro;
      area += (fpr_cap - prev_fpr) * (prev_pro + at_cap) / 2.0;
      return 100.0 * area / fpr_cap;
    }
    area += (fpr - prev_fpr) * (prev_pro + pro) / 2.0;
    prev_fpr = fpr;
    prev_pro = pro;
  }
  return 100.0 * area / fpr_cap;
}

std::array<std::optional<double>, 7> EvalReport::values() const {
  return {image_auroc, image_ap, image_f1_max, pixel_auroc, pixel_ap, pixel_f1_max, pixel_aupro};
}

double mad(const EvalReport& report) {
  double total = 0.0;
  const auto vals = report.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (!vals[i]) throw ContractError(std::string("mad: report field '") + kReportColumns[i] + "' is missing");
    total += *vals[i];
  }
  return total / 7.0;
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  for (std::size_t i = 0; i < kReportColumns.size(); ++i) out << (i ? "," : "") << kReportColumns[i];
  out << "\n" << std::setprecision(17);
  for (const auto& v : report.values()) out << *v << ",";
  out << mad(report) << "\n";
  return out.str();
}

std::string report_table(const EvalReport& report) {
  constexpr std::array<const char*, 7> names = {"AU-ROC", "AP", "F1_max", "AU-ROC", "AP", "F1_max", "AU-PRO"};
  std::ostringstream out;
  out << std::left << std::setw(27) << " Image-level" << "| " << std::setw(36) << "Pixel-level" << "|\n"
      << std::right;
  for (std::size_t i = 0; i < names.size(); ++i) {
    out << std::setw(7) << names[i] << "  ";
    if (i == 2) out << "| ";
  }
  out << "| " << std::setw(6) << "mAD" << "\n" << std::fixed << std::setprecision(1);
  const auto vals = report.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    out << std::setw(7) << *vals[i] << "  ";
    if (i == 2) out << "| ";
  }
  out << "| " << std::setw(6) << mad(report) << "\n";
  return out.str();
}

}  // namespace omniad::metrics
