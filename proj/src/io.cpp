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

#include "omniad/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <string>

#include "omniad/errors.hpp"

namespace omniad::io {
namespace {

constexpr char kMagic[4] = {'O', 'M', 'N', 'I'};

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
}

template <typename U>
U get_le(std::span<const std::uint8_t> bytes, std::size_t offset) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[offset + i]) << (8 * i);
  return value;
}

void need(std::span<const std::uint8_t> bytes, std::size_t offset, std::size_t count, const char* what) {
  if (bytes.size() < offset + count) {
    throw FormatError(std::string("truncated ") + what + ": need " + std::to_string(offset + count) +
                          " bytes, file has " + std::to_string(bytes.size()),
                      bytes.size());
  }
}

}  // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor& t, std::uint32_t version) {
  if (version != kFormatFloat32 && version != kFormatFloat64) {
    throw FormatError("unsupported tensor format version " + std::to_string(version));
  }
  std::vector<std::uint8_t> out;
  const std::size_t width = version == kFormatFloat32 ? 4 : 8;
  out.reserve(12 + 8 * t.rank() + width * t.numel());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, version);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t e : t.shape()) put_le<std::uint64_t>(out, e);
  for (double v : t.data()) {
    if (version == kFormatFloat32) {
      put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    } else {
      put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
  }
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  need(bytes, 0, 4, "magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic, expected \"OMNI\"", 0);
  need(bytes, 4, 4, "version");
  const auto version = get_le<std::uint32_t>(bytes, 4);
  if (version != kFormatFloat32 && version != kFormatFloat64) {
    throw FormatError("unsupported format version " + std::to_string(version), 4);
  }
  need(bytes, 8, 4, "rank");
  const auto rank = get_le<std::uint32_t>(bytes, 8);
  if (rank > kMaxRank) {
    throw FormatError("rank " + std::to_string(rank) + " exceeds limit " + std::to_string(kMaxRank), 8);
  }
  std::size_t offset = 12;
  need(bytes, offset, 8 * static_cast<std::size_t>(rank), "extents");
  const std::size_t width = version == kFormatFloat32 ? 4 : 8;
  Shape shape;
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i, offset += 8) {
    const auto e = get_le<std::uint64_t>(bytes, offset);
    if (e == 0) throw FormatError("extent " + std::to_string(i) + " is zero", offset);
    if (e > bytes.size() || count > bytes.size() / e) {
      throw FormatError("extents exceed the file size of " + std::to_string(bytes.size()) + " bytes",
                        offset);
    }
    count *= static_cast<std::size_t>(e);
    shape.push_back(static_cast<std::size_t>(e));
  }
  const std::size_t expected = count * width;
  if (bytes.size() - offset != expected) {
    throw FormatError("payload length mismatch: expected " + std::to_string(expected) +
                          " bytes, found " + std::to_string(bytes.size() - offset),
                      bytes.size() < offset + expected ? bytes.size() : offset + expected);
  }
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i, offset += width) {
    if (width == 4) {
      data[i] = std::bit_cast<float>(get_le<std::uint32_t>(bytes, offset));
    } else {
      data[i] = std::bit_cast<double>(get_le<std::uint64_t>(bytes, offset));
    }
  }
  return Tensor(std::move(shape), std::move(data));
}

void write_tensor_file(const std::filesystem::path& path, const Tensor& t, std::uint32_t version) {
  const auto bytes = encode_tensor(t, version);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Tensor read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open tensor file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_pgm(const std::filesystem::path& path, const Tensor& map) {
  if (map.rank() != 2) throw DimensionError("write_pgm: expected [H,W] map, got " + shape_string(map.shape()));
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double v : map.data()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  std::ostringstream header;
  header.precision(17);
  header << "P5\n# omniad min=" << lo << " max=" << hi << "\n" << map.dim(1) << ' ' << map.dim(0) << "\n255\n";
  out << header.str();
  const double span = hi - lo;
  for (double v : map.data()) {
    const double unit = span > 0.0 ? (v - lo) / span : 0.0;
    out.put(static_cast<char>(static_cast<std::uint8_t>(std::lround(unit * 255.0))));
  }
}

}  // namespace omniad::io
