// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "ivmix/core/error.hpp"

namespace ivmix {

/// One (step size, error) observation of a convergence study.
struct OrderSample {
  double step = 0.0;
  double error = 0.0;
};

/// Least-squares slope of log(error) against log(step).
/// Needs at least three points, all positive and finite, with distinct steps.
inline double estimate_order(const std::vector<OrderSample>& samples) {
  if (samples.size() < 3) throw NumericalError("order estimate needs at least 3 points");
  double sx = 0.0;
  double sy = 0.0;
  for (const auto& s : samples) {
    if (!(s.step > 0.0) || !(s.error > 0.0) || !std::isfinite(s.step) || !std::isfinite(s.error)) {
      throw NumericalError("order estimate needs positive finite step sizes and errors");
    }
    sx += std::log(s.step);
    sy += std::log(s.error);
  }
  const double n = static_cast<double>(samples.size());
  const double mx = sx / n;
  const double my = sy / n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (const auto& s : samples) {
    const double dx = std::log(s.step) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(s.error) - my);
  }
  if (sxx < 1e-24) throw NumericalError("order estimate needs distinct step sizes");
  return sxy / sxx;
}

}  // namespace ivmix
