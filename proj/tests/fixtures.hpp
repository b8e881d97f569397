// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ivmix/ivmix.hpp"

namespace ivmix::testing {

/// Returns the same noise tensor everywhere.
class ConstantNoiseModel final : public ScoreModel {
 public:
  explicit ConstantNoiseModel(LatentTensor eps) : eps_(std::move(eps)) {}
  std::string name() const override { return "const"; }
  LatentTensor predict_noise(const LatentTensor& x, int, const Condition&) const override {
    x.require_same_shape(eps_);
    return eps_;
  }

 private:
  LatentTensor eps_;
};

/// Forwards to another model and logs each call as "<name>@<timestep>".
class SpyModel final : public ScoreModel {
 public:
  SpyModel(const ScoreModel& inner, std::string label, std::vector<std::string>* log)
      : inner_(inner), label_(std::move(label)), log_(log) {}
  std::string name() const override { return label_; }
  LatentTensor predict_noise(const LatentTensor& x, int t, const Condition& cond) const override {
    log_->push_back(label_ + "@" + std::to_string(t) + (cond.is_null() ? "/null" : "/c"));
    return inner_.predict_noise(x, t, cond);
  }

 private:
  const ScoreModel& inner_;
  std::string label_;
  std::vector<std::string>* log_;
};

/// Two classes, each with a tight component and a broad unconditional halo
/// around the same mean.
inline GaussianMixtureSpec halo_mixture(std::size_t dim, std::uint64_t seed, double mean_scale = 1.5) {
  NoiseStream g({seed, 0});
  GaussianMixtureSpec mix;
  mix.dim = dim;
  for (int k = 0; k < 2; ++k) {
    std::vector<double> m(dim);
    for (double& v : m) v = mean_scale * g.normal();
    mix.components.push_back({0.2, m, 0.1, k});
    mix.components.push_back({0.3, m, 0.3, -1});
  }
  return mix;
}

/// Image and video models on a 4x2x2 frame over `frames` frames.
struct DeskModels {
  NoiseSchedule sched = NoiseSchedule::make_default();
  GaussianMixtureSpec mix = halo_mixture(16, 1234);
  FramewiseModel idm{mix, sched};
  TemporalModel vdm;
  ModelSet set() const { return {&idm, &vdm}; }

  explicit DeskModels(std::size_t frames = 8, double kappa = 1.5, double rho = 0.9)
      : vdm(TemporalModelSpec{mix, rho, kappa}, sched, "VDM", frames) {}
};

inline Shape5 desk_shape(std::size_t batch = 1, std::size_t frames = 8) { return {batch, 4, frames, 2, 2}; }

}  // namespace ivmix::testing
