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
#include <filesystem>
#include <span>
#include <vector>

#include "omniad/tensor.hpp"

namespace omniad::io {

// Portable tensor file layout, all fields little-endian:
//   "OMNI" | version u32 | rank u32 | rank x extent u64 | payload
// Version 1 stores the payload as IEEE-754 binary32, version 2 as binary64.
inline constexpr std::uint32_t kFormatFloat32 = 1;
inline constexpr std::uint32_t kFormatFloat64 = 2;
inline constexpr std::uint32_t kMaxRank = 16;

std::vector<std::uint8_t> encode_tensor(const Tensor& t, std::uint32_t version = kFormatFloat32);
// Throws FormatError carrying the byte offset of the first inconsistency.
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor_file(const std::filesystem::path& path, const Tensor& t,
                       std::uint32_t version = kFormatFloat32);
Tensor read_tensor_file(const std::filesystem::path& path);

// Binary PGM (P5) of a [H, W] map, min-max normalised to 0..255. The comment
// line records the original range: "# omniad min=<min> max=<max>".
void write_pgm(const std::filesystem::path& path, const Tensor& map);

}  // namespace omniad::io
