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

#include <functional>

#include "omniad/tensor.hpp"

namespace omniad {

/// Compares reverse-mode gradients of a scalar function against central
/// differences (f(x + h e_i) - f(x - h e_i)) / 2h.
///
/// `f` must build its graph from `x` (and any other captured tensors) each
/// time it is called. Returns the max over elements of
/// |a - b| / max(|a|, |b|, 1e-8). Any gradient previously held by `x` is
/// discarded.
double grad_check(const std::function<Tensor()>& f, Tensor x, double h = 1e-3);

}  // namespace omniad
