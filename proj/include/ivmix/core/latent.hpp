// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ivmix/core/error.hpp"

namespace ivmix {

/// Extents of a video latent: batch, channels, frames, height, width.
struct Shape5 {
  std::size_t batch = 1;
  std::size_t channels = 1;
  std::size_t frames = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t numel() const noexcept { return batch * channels * frames * height * width; }
  /// Elements of one frame of one batch item (c * h * w).
  std::size_t frame_size() const noexcept { return channels * height * width; }
  std::array<std::size_t, 5> dims() const noexcept { return {batch, channels, frames, height, width}; }

  std::string str() const {
    return "(" + std::to_string(batch) + "," + std::to_string(channels) + "," + std::to_string(frames) + "," +
           std::to_string(height) + "," + std::to_string(width) + ")";
  }

  friend bool operator==(const Shape5&, const Shape5&) = default;
};

/// Dense row-major b x c x t x h x w tensor of doubles.
class LatentTensor {
 public:
  LatentTensor() = default;

  explicit LatentTensor(Shape5 shape, double fill = 0.0) : shape_(validated(shape)), data_(shape.numel(), fill) {}

  LatentTensor(Shape5 shape, std::vector<double> data) : shape_(validated(shape)), data_(std::move(data)) {
    if (data_.size() != shape_.numel()) {
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " + shape_.str());
    }
  }

  const Shape5& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  const double& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::size_t offset(std::size_t b, std::size_t c, std::size_t t, std::size_t y, std::size_t x) const noexcept {
    return (((b * shape_.channels + c) * shape_.frames + t) * shape_.height + y) * shape_.width + x;
  }
  double& at(std::size_t b, std::size_t c, std::size_t t, std::size_t y, std::size_t x) {
    return data_[offset(b, c, t, y, x)];
  }
  double at(std::size_t b, std::size_t c, std::size_t t, std::size_t y, std::size_t x) const {
    return data_[offset(b, c, t, y, x)];
  }

  /// Copies frame t of batch item b into a contiguous c*h*w vector (channel-major).
  std::vector<double> frame(std::size_t b, std::size_t t) const {
    std::vector<double> out(shape_.frame_size());
    const std::size_t hw = shape_.height * shape_.width;
    for (std::size_t c = 0; c < shape_.channels; ++c) {
      const double* src = &data_[offset(b, c, t, 0, 0)];
      std::copy(src, src + hw, out.begin() + c * hw);
    }
    return out;
  }

  void set_frame(std::size_t b, std::size_t t, std::span<const double> values) {
    if (values.size() != shape_.frame_size()) throw ShapeError("frame length mismatch");
    const std::size_t hw = shape_.height * shape_.width;
    for (std::size_t c = 0; c < shape_.channels; ++c) {
      std::copy(values.begin() + c * hw, values.begin() + (c + 1) * hw, &data_[offset(b, c, t, 0, 0)]);
    }
  }

  double squared_norm() const noexcept {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return s;
  }
  double norm() const noexcept { return std::sqrt(squared_norm()); }

  bool all_finite() const noexcept {
    for (double v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  LatentTensor& operator+=(const LatentTensor& o) {
    require_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  LatentTensor& operator-=(const LatentTensor& o) {
    require_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  LatentTensor& operator*=(double s) noexcept {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend LatentTensor operator+(LatentTensor a, const LatentTensor& b) { return a += b; }
  friend LatentTensor operator-(LatentTensor a, const LatentTensor& b) { return a -= b; }
  friend LatentTensor operator*(double s, LatentTensor a) { return a *= s; }

  /// a * x + b * y, elementwise.
  static LatentTensor combine(double a, const LatentTensor& x, double b, const LatentTensor& y) {
    x.require_same_shape(y);
    LatentTensor out(x.shape_);
    for (std::size_t i = 0; i < x.data_.size(); ++i) out.data_[i] = a * x.data_[i] + b * y.data_[i];
    return out;
  }

  void require_same_shape(const LatentTensor& o) const {
    if (shape_ != o.shape_) throw ShapeError("shape mismatch: " + shape_.str() + " vs " + o.shape_.str());
  }

  friend bool operator==(const LatentTensor&, const LatentTensor&) = default;

 private:
  static Shape5 validated(Shape5 s) {
    for (std::size_t d : s.dims()) {
      if (d == 0) throw ShapeError("all extents must be >= 1, got " + s.str());
    }
    return s;
  }

  Shape5 shape_;
  std::vector<double> data_;
};

inline double distance(const LatentTensor& a, const LatentTensor& b) {
  a.require_same_shape(b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double relative_distance(const LatentTensor& a, const LatentTensor& reference) {
  const double n = reference.norm();
  return n > 0.0 ? distance(a, reference) / n : distance(a, reference);
}

/// b x c x t x h x w -> (b*t) x c x 1 x h x w: each frame becomes its own batch item.
inline LatentTensor flatten_frames(const LatentTensor& x) {
  const Shape5& s = x.shape();
  LatentTensor out(Shape5{s.batch * s.frames, s.channels, 1, s.height, s.width});
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t t = 0; t < s.frames; ++t) {
      const std::size_t n = b * s.frames + t;
      for (std::size_t c = 0; c < s.channels; ++c) {
        const double* src = &x[x.offset(b, c, t, 0, 0)];
        std::copy(src, src + s.height * s.width, &out[out.offset(n, c, 0, 0, 0)]);
      }
    }
  }
  return out;
}

/// Inverse of flatten_frames; the leading extent must be divisible by `frames`.
inline LatentTensor unflatten_frames(const LatentTensor& x, std::size_t frames) {
  const Shape5& s = x.shape();
  if (frames == 0 || s.frames != 1 || s.batch % frames != 0) {
    throw ShapeError("cannot unflatten " + s.str() + " into " + std::to_string(frames) + " frames");
  }
  LatentTensor out(Shape5{s.batch / frames, s.channels, frames, s.height, s.width});
  for (std::size_t n = 0; n < s.batch; ++n) {
    const std::size_t b = n / frames;
    const std::size_t t = n % frames;
    for (std::size_t c = 0; c < s.channels; ++c) {
      const double* src = &x[x.offset(n, c, 0, 0, 0)];
      std::copy(src, src + s.height * s.width, &out[out.offset(b, c, t, 0, 0)]);
    }
  }
  return out;
}

}  // namespace ivmix
