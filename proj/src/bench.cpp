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

#include "omniad/bench.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <sstream>

#include "omniad/errors.hpp"
#include "omniad/omni_block.hpp"
#include "omniad/ops.hpp"
#include "omniad/random.hpp"

namespace omniad {
namespace {

template <typename F>
double median_ms(std::size_t repeats, F&& body) {
  std::vector<double> times;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  const std::size_t mid = times.size() / 2;
  return times.size() % 2 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
}

}  // namespace

std::vector<BenchRow> bench_attention(const BenchOptions& options) {
  if (options.repeats == 0) throw ConfigError("bench: repeats must be positive");
  for (std::size_t i = 1; i < options.sizes.size(); ++i) {
    if (options.sizes[i] <= options.sizes[i - 1]) throw ConfigError("bench: sequence lengths must ascend");
  }
  NoGradGuard no_grad;
  Rng rng(options.seed);
  const std::size_t d = options.dim;
  const ops::MhaWeights w{normal({d, d}, 0.02, rng), normal({d, d}, 0.02, rng), normal({d, d}, 0.02, rng),
                          normal({d, d}, 0.02, rng)};
  const Tensor tokens = normal({options.tokens, d}, 1.0, rng);
  const Tensor token_q = ops::linear(tokens, w.wq);

  std::vector<BenchRow> rows;
  for (std::size_t n : options.sizes) {
    const Tensor x = normal({n, d}, 1.0, rng);
    const Tensor xq = ops::linear(x, w.wq);
    const Tensor xk = ops::linear(x, w.wk);
    const Tensor xv = ops::linear(x, w.wv);
    BenchRow row;
    row.n = n;
    // Warm-up so first-touch allocation does not land in the first timing.
    ops::scaled_dot_product_attention(token_q, xk, xv, options.heads);
    row.learnable_core_ms = median_ms(options.repeats, [&] {
      ops::scaled_dot_product_attention(token_q, xk, xv, options.heads);
    });
    row.learnable_full_ms = median_ms(options.repeats, [&] {
      ops::multi_head_attention(tokens, x, x, w, options.heads);
    });
    row.standard_core_ms = median_ms(options.repeats, [&] {
      ops::scaled_dot_product_attention(xq, xk, xv, options.heads);
    });
    row.standard_full_ms = median_ms(options.repeats, [&] {
      ops::multi_head_attention(x, x, x, w, options.heads);
    });
    const AttentionFlops flops = attention_flop_count(n, options.tokens, d, options.heads);
    row.learnable_flops = static_cast<double>(flops.learnable_token);
    row.standard_flops = static_cast<double>(flops.standard);
    row.flop_ratio = row.standard_flops / row.learnable_flops;
    rows.push_back(row);
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "n,learnable_core_ms,learnable_full_ms,standard_core_ms,standard_full_ms,learnable_flops,"
         "standard_flops,flop_ratio\n"
      << std::setprecision(10);
  for (const BenchRow& r : rows) {
    out << r.n << "," << r.learnable_core_ms << "," << r.learnable_full_ms << "," << r.standard_core_ms << ","
        << r.standard_full_ms << "," << r.learnable_flops << "," << r.standard_flops << "," << r.flop_ratio
        << "\n";
  }
  return out.str();
}

}  // namespace omniad
