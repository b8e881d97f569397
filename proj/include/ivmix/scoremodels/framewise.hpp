// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>

#include "ivmix/core/latent.hpp"
#include "ivmix/scoremodels/gaussian_mixture.hpp"
#include "ivmix/scoremodels/score_model.hpp"

namespace ivmix {

/// Image-model stand-in: the same mixture over c*h*w applied to every frame
/// independently.  Videos are flattened to (b*t) single-frame items, scored,
/// and reshaped back.
class FramewiseModel final : public AnalyticScoreModel {
 public:
  FramewiseModel(GaussianMixtureSpec spec, NoiseSchedule schedule, std::string name = "IDM")
      : AnalyticScoreModel(std::move(schedule)), spec_(std::move(spec)), name_(std::move(name)) {
    spec_.validate();
  }

  const GaussianMixtureSpec& spec() const noexcept { return spec_; }
  std::string name() const override { return name_; }

  LatentTensor predict_noise_at(const LatentTensor& x, NoiseLevel level, const Condition& cond) const override {
    check_dim(x);
    LatentTensor images = flatten_frames(x);
    LatentTensor eps(images.shape());
    const std::size_t n = spec_.dim;
    for (std::size_t item = 0; item < images.shape().batch; ++item) {
      std::span<const double> xi(&images[item * n], n);
      std::span<double> ei(&eps[item * n], n);
      evaluate_mixture(spec_, xi, level, cond, ei);
    }
    return unflatten_frames(eps, x.shape().frames);
  }

  double log_density_at(const LatentTensor& x, NoiseLevel level, const Condition& cond) const override {
    check_dim(x);
    const LatentTensor images = flatten_frames(x);
    const std::size_t n = spec_.dim;
    double total = 0.0;
    for (std::size_t item = 0; item < images.shape().batch; ++item) {
      total += evaluate_mixture(spec_, std::span<const double>(&images[item * n], n), level, cond).log_density;
    }
    return total;
  }

  /// Log density of a single frame vector.
  double frame_log_density(std::span<const double> frame, NoiseLevel level, const Condition& cond) const {
    if (frame.size() != spec_.dim) throw ShapeError("frame length does not match mixture dimension");
    return evaluate_mixture(spec_, frame, level, cond).log_density;
  }

 private:
  void check_dim(const LatentTensor& x) const {
    if (x.shape().frame_size() != spec_.dim) {
      throw ShapeError("frame size " + std::to_string(x.shape().frame_size()) + " of " + x.shape().str() +
                       " does not match mixture dimension " + std::to_string(spec_.dim));
    }
  }

  GaussianMixtureSpec spec_;
  std::string name_;
};

}  // namespace ivmix
