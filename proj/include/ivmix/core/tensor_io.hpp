// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ivmix/core/error.hpp"
#include "ivmix/core/latent.hpp"

namespace ivmix {

// Raw tensor file: five little-endian uint64 extents (b, c, t, h, w) followed by
// b*c*t*h*w little-endian IEEE-754 doubles in row-major order.

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string encode_tensor(const LatentTensor& x) {
  std::string out;
  out.reserve(40 + 8 * x.size());
  for (std::size_t d : x.shape().dims()) detail::put_u64(out, d);
  for (double v : x.data()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

inline LatentTensor decode_tensor(const std::string& bytes) {
  if (bytes.size() < 40) throw ShapeError("tensor file shorter than its 40-byte header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  Shape5 shape{detail::get_u64(p), detail::get_u64(p + 8), detail::get_u64(p + 16), detail::get_u64(p + 24),
               detail::get_u64(p + 32)};
  const std::size_t n = shape.numel();
  if (bytes.size() != 40 + 8 * n) {
    throw ShapeError("tensor file holds " + std::to_string(bytes.size() - 40) + " payload bytes, header " +
                     shape.str() + " needs " + std::to_string(8 * n));
  }
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<double>(detail::get_u64(p + 40 + 8 * i));
  return LatentTensor(shape, std::move(data));
}

inline void write_tensor(const std::filesystem::path& path, const LatentTensor& x) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_tensor(x);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw std::runtime_error("short write to " + path.string());
}

inline LatentTensor read_tensor(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_tensor(bytes);
}

}  // namespace ivmix
