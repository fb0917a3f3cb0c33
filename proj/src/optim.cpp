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

#include "omniad/optim.hpp"

#include <cmath>
#include <string>

#include "omniad/errors.hpp"

namespace omniad {

AdamWState::AdamWState(AdamWOptions opts, std::span<const Tensor> params) : options(opts) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const Tensor& p : params) {
    m.emplace_back(p.numel(), 0.0);
    v.emplace_back(p.numel(), 0.0);
  }
}

void adamw_step(std::span<Tensor> params, AdamWState& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adamw_step: state tracks " + std::to_string(state.m.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& p = params[i];
    if (state.m[i].size() != p.numel() || state.v[i].size() != p.numel() ||
        (p.has_grad() && p.grad().size() != p.numel())) {
      throw DimensionError("adamw_step: moment/gradient size mismatch for parameter " +
                           std::to_string(i) + " of shape " + shape_string(p.shape()));
    }
  }

  const AdamWOptions& o = state.options;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    auto data = p.mutable_data();
    const bool has_grad = p.has_grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double g = has_grad ? p.grad()[j] : 0.0;
      data[j] -= o.lr * o.weight_decay * data[j];
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g;
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g * g;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      data[j] -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
    }
  }
}

}  // namespace omniad
