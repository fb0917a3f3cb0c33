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

#include <cstdint>
#include <random>

#include "omniad/tensor.hpp"

namespace omniad {

using Rng = std::mt19937_64;

// Normal(0, std) samples redrawn until they fall inside +-2 std.
Tensor truncated_normal(Shape shape, double std, Rng& rng);
Tensor uniform(Shape shape, double lo, double hi, Rng& rng);
Tensor normal(Shape shape, double std, Rng& rng);

}  // namespace omniad
