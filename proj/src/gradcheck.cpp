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

#include "omniad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace omniad {

double grad_check(const std::function<Tensor()>& f, Tensor x, double h) {
  const bool was_tracked = x.requires_grad();
  x.set_requires_grad(true);
  x.impl()->grad.clear();

  std::vector<double> analytic;
  {
    Tape tape;
    Tensor loss;
    {
      Tape::Recording rec(tape);
      loss = f();
    }
    backward(loss, tape);
    analytic = x.has_grad() ? std::vector<double>(x.grad().begin(), x.grad().end())
                            : std::vector<double>(x.numel(), 0.0);
  }

  double worst = 0.0;
  auto data = x.mutable_data();
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + h;
    const double up = f().item();
    data[i] = saved - h;
    const double down = f().item();
    data[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  x.impl()->grad.clear();
  x.set_requires_grad(was_tracked);
  return worst;
}

}  // namespace omniad
