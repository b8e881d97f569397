// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ivmix/core/error.hpp"
#include "ivmix/core/latent.hpp"
#include "ivmix/core/schedule.hpp"
#include "ivmix/sampler/config.hpp"
#include "ivmix/sampler/mixed_sampler.hpp"
#include "ivmix/scoremodels/score_model.hpp"

namespace ivmix {

/// Sum of gated guidance curves, w(p) = sum_k coef_k h_k(p) [begin_k <= p < end_k].
/// p is the trajectory position, 0 at the noisy end and 1 at the clean end.
struct WeightCurve {
  struct Term {
    double coef = 1.0;
    GuidanceSchedule schedule;
    double begin = 0.0;
    double end = 1.0;
  };
  std::vector<Term> terms;

  static WeightCurve constant(double w) {
    WeightCurve c;
    if (w != 0.0) c.terms.push_back({1.0, GuidanceSchedule::constant(w), 0.0, 1.0});
    return c;
  }

  double at(double p) const {
    double s = 0.0;
    for (const auto& t : terms) {
      const bool inside = p >= t.begin && (p < t.end || (t.end >= 1.0 && p <= 1.0));
      if (inside) s += t.coef * t.schedule.evaluate(p);
    }
    return s;
  }

  bool is_zero() const noexcept { return terms.empty(); }
};

enum class Integrator { kEuler, kRk4 };

/// Parameters of the equivalent probability-flow ODE
///
///   dx = [f(t) x - 1/2 g^2(t) ( grad log q^V_t(x | c)
///                               + w_I(p) grad log q^I_t(c | x)
///                               + (w_V(p) + w) grad log q^V_t(c | x) )] dt,
///
/// with grad log q(c | x) = grad log q_t(x | c) - grad log q_t(x | null) and p = 1 - t.
struct OdeOracleConfig {
  WeightCurve idm_weight;
  WeightCurve vdm_weight;
  double vanilla_cfg = 0.0;
  int substeps = 10;  // per grid cell
  Integrator integrator = Integrator::kRk4;
  Condition condition = Condition::text(0);

  void validate() const {
    if (substeps < 10) throw ConfigError("ODE oracle needs at least 10 substeps per grid cell");
    if (!std::isfinite(vanilla_cfg)) throw ConfigError("vanilla_cfg must be finite");
  }
};

/// Right-hand side of the equivalent ODE at continuous time t inside grid cell `cell`.
inline LatentTensor equivalent_ode_rhs(const LatentTensor& x, double t, int cell, const OdeOracleConfig& cfg,
                                       const AnalyticScoreModel& idm, const AnalyticScoreModel& vdm,
                                       const NoiseSchedule& sched) {
  const SdeCoefficients sde = sched.sde_at(t, cell);
  const NoiseLevel level = sde.level;
  const double p = 1.0 - t;
  const double w_idm = cfg.idm_weight.at(p);
  const double w_vdm = cfg.vdm_weight.at(p) + cfg.vanilla_cfg;
  const Condition& c = cfg.condition;

  // Work with noise predictions: score = -eps / sigma, so the bracket is
  // -(1/sigma) [eps_V(c) + w_I (eps_I(c) - eps_I(0)) + w_V (eps_V(c) - eps_V(0))].
  LatentTensor eps = vdm.predict_noise_at(x, level, c);
  if (!c.is_null() && w_vdm != 0.0) {
    const LatentTensor eu = vdm.predict_noise_at(x, level, Condition::null());
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] += w_vdm * (eps[i] - eu[i]);
  }
  if (!c.is_null() && w_idm != 0.0) {
    const LatentTensor ic = idm.predict_noise_at(x, level, c);
    const LatentTensor iu = idm.predict_noise_at(x, level, Condition::null());
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] += w_idm * (ic[i] - iu[i]);
  }
  // dx/dt = f x - 1/2 g^2 (-eps / sigma) = f x + g^2 / (2 sigma) eps
  return LatentTensor::combine(sde.drift, x, 0.5 * sde.diffusion_sq / level.sigma, eps);
}

/// Integrates the equivalent ODE from the top of the grid (t = 1) down to the
/// floor (t = 0), `substeps` steps per grid cell.
inline LatentTensor integrate_equivalent_ode(const LatentTensor& x_top, const OdeOracleConfig& cfg,
                                             const AnalyticScoreModel& idm, const AnalyticScoreModel& vdm,
                                             const NoiseSchedule& sched) {
  cfg.validate();
  const int cells = sched.top_index();
  const double cell = 1.0 / cells;
  const double h = -cell / cfg.substeps;
  LatentTensor x = x_top;
  for (int c = cells; c > 0; --c) {
    auto rhs = [&](const LatentTensor& y, double t) { return equivalent_ode_rhs(y, t, c - 1, cfg, idm, vdm, sched); };
    for (int k = 0; k < cfg.substeps; ++k) {
      const double t = (c - static_cast<double>(k) / cfg.substeps) * cell;
      const double t_next = std::max(0.0, (c - static_cast<double>(k + 1) / cfg.substeps) * cell);
      if (cfg.integrator == Integrator::kEuler) {
        x = LatentTensor::combine(1.0, x, h, rhs(x, t));
      } else {
        const double tm = 0.5 * (t + t_next);
        const LatentTensor k1 = rhs(x, t);
        const LatentTensor k2 = rhs(LatentTensor::combine(1.0, x, 0.5 * h, k1), tm);
        const LatentTensor k3 = rhs(LatentTensor::combine(1.0, x, 0.5 * h, k2), tm);
        const LatentTensor k4 = rhs(LatentTensor::combine(1.0, x, h, k3), t_next);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
      }
      if (!x.all_finite()) throw NonFiniteStepError((cells - c) * cfg.substeps + k, "ODE oracle state became non-finite");
    }
  }
  return x;
}

/// Maps a deterministic sampler configuration onto the equivalent ODE.
///
/// To first order in the layer width, one injection pass moves x by
///   Delta_lambda * sigma * sum_slots h_slot * grad log q^{model(slot)}(c | x)
/// (in x/alpha coordinates) provided every layer stack uses the same multiset
/// of models on the go side as on the back side, so the conditional noise
/// terms cancel.  Dividing by the step width gives weight r * h_slot with
/// r = n * (T / n) / (T - 1), the ratio of layer width to sampling step.
inline OdeOracleConfig equivalent_ode_config(const MixedSamplerConfig& config, const NoiseSchedule& sched,
                                             int substeps = 10) {
  config.validate(sched);
  const int n = config.inference_steps;
  const double ratio = static_cast<double>(n) * injection_stride(sched.train_steps(), n) / sched.top_index();

  OdeOracleConfig out;
  out.vanilla_cfg = config.vanilla_cfg;
  out.substeps = substeps;
  out.condition = config.condition;

  auto add_stack = [&](const std::vector<LayerSpec>& layers, double begin, double end) {
    if (!(begin < end)) return;
    std::map<ModelKind, int> balance;
    for (const auto& l : layers) {
      if (l.go == ModelKind::kRandom) throw ConfigError("stochastic layers have no equivalent ODE");
      ++balance[l.go];
      --balance[l.back];
    }
    for (const auto& [kind, count] : balance) {
      if (count != 0) throw ConfigError("go and back models differ; no first-order ODE form");
    }
    for (const auto& l : layers) {
      auto& go = l.go == ModelKind::kIdm ? out.idm_weight : out.vdm_weight;
      go.terms.push_back({ratio, l.go_guidance, begin, end});
      auto& back = l.back == ModelKind::kIdm ? out.idm_weight : out.vdm_weight;
      back.terms.push_back({ratio, l.back_guidance, begin, end});
    }
  };

  const double b = config.interval.begin_pct / 100.0;
  const double e = config.interval.end_pct / 100.0;
  if (config.fallback) {
    const double z = config.fallback->z_pct / 100.0;
    if (config.fallback->placement == FallbackPlacement::kHead) {
      add_stack(config.fallback->layers, b, std::min(e, z));
      add_stack(config.layers, std::max(b, z), e);
    } else {
      add_stack(config.layers, b, std::min(e, 1.0 - z));
      add_stack(config.fallback->layers, std::max(b, 1.0 - z), e);
    }
  } else {
    add_stack(config.layers, b, e);
  }
  return out;
}

/// Closed-form probability-flow map for a single Gaussian N(mu, s^2 I):
/// x_to = alpha_to mu + sqrt(alpha_to^2 s^2 + sigma_to^2) (x_from - alpha_from mu) / sqrt(alpha_from^2 s^2 + sigma_from^2).
inline LatentTensor gaussian_flow_map(const LatentTensor& x_from, std::span<const double> frame_mean, double variance,
                                      NoiseLevel from, NoiseLevel to) {
  const std::size_t fs = x_from.shape().frame_size();
  if (frame_mean.size() != fs) throw ShapeError("mean length does not match frame size");
  const double scale = std::sqrt((to.alpha * to.alpha * variance + to.sigma * to.sigma) /
                                 (from.alpha * from.alpha * variance + from.sigma * from.sigma));
  LatentTensor out(x_from.shape());
  const Shape5& s = x_from.shape();
  for (std::size_t b = 0; b < s.batch; ++b) {
    for (std::size_t t = 0; t < s.frames; ++t) {
      std::vector<double> f = x_from.frame(b, t);
      for (std::size_t i = 0; i < fs; ++i) {
        f[i] = to.alpha * frame_mean[i] + scale * (f[i] - from.alpha * frame_mean[i]);
      }
      out.set_frame(b, t, f);
    }
  }
  return out;
}

}  // namespace ivmix
