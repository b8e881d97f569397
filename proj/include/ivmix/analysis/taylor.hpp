// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <vector>

#include "ivmix/analysis/order.hpp"
#include "ivmix/core/latent.hpp"
#include "ivmix/core/schedule.hpp"
#include "ivmix/sampler/ddim.hpp"
#include "ivmix/scoremodels/score_model.hpp"

namespace ivmix {

struct TaylorProbeOptions {
  double go_scale = -4.0;  // CFG scale of the go step, held fixed
  int gap = 1;             // layer width in training steps
  InversionMode inversion = InversionMode::kFixedPoint;
  FixedPointOptions fixed_point{};
};

struct TaylorRow {
  double delta_omega = 0.0;
  double actual_norm = 0.0;     // ||x' - x||
  double predicted_norm = 0.0;  // ||first-order prediction||
  double residual = 0.0;        // ||(x' - x) - prediction||
};

/// Runs one go/back layer (identity inside) with back scale = go scale + delta
/// and compares the displacement with the first-order prediction
///   -delta * (alpha_t sigma_u - alpha_u sigma_t) / alpha_u * (eps(x, t, c) - eps(x, t, null)),
/// u = t + gap.  The sign follows from expanding the two DDIM maps.
inline std::vector<TaylorRow> taylor_residual_probe(const LatentTensor& x, int t, const std::vector<double>& deltas,
                                                    const ScoreModel& model, const Condition& cond,
                                                    const NoiseSchedule& sched, const TaylorProbeOptions& opts = {}) {
  const int u = std::min(t + opts.gap, sched.top_index());
  const NoiseLevel lt = sched.level(t);
  const NoiseLevel lu = sched.level(u);
  const double jump = (lt.alpha * lu.sigma - lu.alpha * lt.sigma) / std::max(lu.alpha, kAlphaFloor);
  LatentTensor diff = model.predict_noise(x, t, cond);
  diff -= model.predict_noise(x, t, Condition::null());

  const LatentTensor up =
      ddim_inversion(x, t, u, model, cond, sched, opts.go_scale, opts.inversion, opts.fixed_point).latent;
  std::vector<TaylorRow> rows;
  rows.reserve(deltas.size());
  for (double d : deltas) {
    const LatentTensor back = ddim_step(up, u, t, model, cond, sched, opts.go_scale + d);
    LatentTensor actual = back;
    actual -= x;
    LatentTensor predicted = diff;
    predicted *= -d * jump;
    rows.push_back({d, actual.norm(), predicted.norm(), distance(actual, predicted)});
  }
  return rows;
}

/// Log-log slope of residual against delta over the probe table.
inline double taylor_slope(const std::vector<TaylorRow>& rows) {
  std::vector<OrderSample> pts;
  pts.reserve(rows.size());
  for (const auto& r : rows) pts.push_back({r.delta_omega, r.residual});
  return estimate_order(pts);
}

}  // namespace ivmix
