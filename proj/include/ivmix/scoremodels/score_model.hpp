// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <utility>

#include "ivmix/core/error.hpp"
#include "ivmix/core/latent.hpp"
#include "ivmix/core/schedule.hpp"

namespace ivmix {

enum class ConditionTag { kText, kNull };

/// Text condition c (selects a class) or the null condition.
struct Condition {
  ConditionTag tag = ConditionTag::kText;
  int class_id = 0;

  static Condition text(int class_id) { return {ConditionTag::kText, class_id}; }
  static Condition null() { return {ConditionTag::kNull, 0}; }
  bool is_null() const noexcept { return tag == ConditionTag::kNull; }

  friend bool operator==(const Condition& a, const Condition& b) {
    return a.tag == b.tag && (a.is_null() || a.class_id == b.class_id);
  }
};

/// Noise-prediction interface eps(x, t, condition).
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;

  virtual std::string name() const = 0;

  /// Noise prediction at integer timestep `timestep` of the training grid.
  virtual LatentTensor predict_noise(const LatentTensor& x, int timestep, const Condition& cond) const = 0;
};

/// A model whose noised density is known in closed form at any noise level.
class AnalyticScoreModel : public ScoreModel {
 public:
  explicit AnalyticScoreModel(NoiseSchedule schedule) : schedule_(std::move(schedule)) {}

  const NoiseSchedule& schedule() const noexcept { return schedule_; }

  LatentTensor predict_noise(const LatentTensor& x, int timestep, const Condition& cond) const final {
    if (!schedule_.on_grid(timestep)) {
      throw ConfigError("timestep " + std::to_string(timestep) + " is off the schedule grid");
    }
    if (!x.all_finite()) throw NumericalError("non-finite input to " + name());
    return predict_noise_at(x, schedule_.level(timestep), cond);
  }

  /// eps*(x) = -sigma * grad log p_t(x | cond) at an arbitrary noise level.
  virtual LatentTensor predict_noise_at(const LatentTensor& x, NoiseLevel level, const Condition& cond) const = 0;

  /// log p_t(x | cond), summed over batch items.
  virtual double log_density_at(const LatentTensor& x, NoiseLevel level, const Condition& cond) const = 0;

  /// grad log p_t(x | cond).
  LatentTensor score_at(const LatentTensor& x, NoiseLevel level, const Condition& cond) const {
    if (!(level.sigma > 0.0)) throw NumericalError("score undefined at sigma = 0");
    LatentTensor eps = predict_noise_at(x, level, cond);
    eps *= -1.0 / level.sigma;
    return eps;
  }

 private:
  NoiseSchedule schedule_;
};

}  // namespace ivmix
