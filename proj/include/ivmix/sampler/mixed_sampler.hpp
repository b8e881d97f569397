// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <span>
#include <string>
#include <vector>

#include "ivmix/core/error.hpp"
#include "ivmix/core/latent.hpp"
#include "ivmix/core/rng.hpp"
#include "ivmix/core/schedule.hpp"
#include "ivmix/sampler/config.hpp"
#include "ivmix/sampler/ddim.hpp"
#include "ivmix/sampler/trajectory.hpp"
#include "ivmix/scoremodels/score_model.hpp"

namespace ivmix {

/// The image model and video model a sampler run draws on.
struct ModelSet {
  const ScoreModel* idm = nullptr;
  const ScoreModel* vdm = nullptr;

  const ScoreModel& get(ModelKind k) const {
    const ScoreModel* m = k == ModelKind::kIdm ? idm : k == ModelKind::kVdm ? vdm : nullptr;
    if (m == nullptr) throw ConfigError(std::string("no model bound for slot '") + model_letter(k) + "'");
    return *m;
  }
};

/// Descending timesteps tau_0 = T-1 > ... > tau_n = 0, evenly spaced and rounded.
inline std::vector<int> inference_timesteps(int train_steps, int n) {
  if (n < 1 || n >= train_steps) throw ConfigError("need 1 <= inference_steps < train_steps");
  std::vector<int> ts(n + 1);
  const long long top = train_steps - 1;
  for (int i = 0; i <= n; ++i) ts[i] = static_cast<int>((2 * top * (n - i) + n) / (2LL * n));
  return ts;
}

/// Width of one injection layer in training steps.
inline int injection_stride(int train_steps, int n) { return train_steps / n; }

/// Everything one injection pass needs besides the latent.
struct InjectContext {
  const ModelSet& models;
  const NoiseSchedule& sched;
  Condition cond;
  int stride = 1;
  double position = 0.0;  // normalized step position for the guidance curves
  InversionMode inversion = InversionMode::kOneShot;
  FixedPointOptions fixed_point{};
  NoiseStream* rng = nullptr;
  std::vector<CfgUse>* log = nullptr;
};

/// Recursive injection G^depth: go one layer up the grid, recurse, come back down.
/// depth == layers.size() is the identity.
inline LatentTensor inject(const LatentTensor& x, int t, std::span<const LayerSpec> layers, std::size_t depth,
                           const InjectContext& ctx) {
  if (depth > layers.size()) throw ConfigError("injection depth exceeds the layer stack");
  if (depth == layers.size()) return x;
  const LayerSpec& layer = layers[depth];
  const int t_up = std::min(t + ctx.stride, ctx.sched.top_index());
  const std::string tag = "L" + std::to_string(depth + 1);

  LatentTensor u;
  if (layer.go == ModelKind::kRandom) {
    if (ctx.rng == nullptr) throw ConfigError("RANDOM go layer needs a noise stream");
    u = renoise_transition(x, t, t_up, ctx.sched, *ctx.rng);
    if (ctx.log) ctx.log->push_back({tag + ".go", 'R', 0.0});
  } else {
    const double w_go = -layer.go_guidance.evaluate(ctx.position);
    u = ddim_inversion(x, t, t_up, ctx.models.get(layer.go), ctx.cond, ctx.sched, w_go, ctx.inversion, ctx.fixed_point)
            .latent;
    if (ctx.log) ctx.log->push_back({tag + ".go", model_letter(layer.go), w_go});
  }

  const LatentTensor v = inject(u, t_up, layers, depth + 1, ctx);

  const double w_back = layer.back_guidance.evaluate(ctx.position);
  if (ctx.log) ctx.log->push_back({tag + ".back", model_letter(layer.back), w_back});
  return ddim_step(v, t_up, t, ctx.models.get(layer.back), ctx.cond, ctx.sched, w_back);
}

struct SampleResult {
  LatentTensor latent;
  TrajectoryRecord trajectory;
};

/// Full loop: optional injection at each step, then one guided DDIM step with the video model.
inline SampleResult iv_mixed_sample(const LatentTensor& x_top, const MixedSamplerConfig& config, const ModelSet& models,
                                    const NoiseSchedule& sched, RunSeed seed = {}) {
  config.validate(sched);
  const int n = config.inference_steps;
  const std::vector<int> ts = inference_timesteps(sched.train_steps(), n);
  const int stride = injection_stride(sched.train_steps(), n);
  NoiseStream rng(seed);

  SampleResult out;
  out.latent = x_top;
  out.trajectory.initial_norm = x_top.norm();
  out.trajectory.steps.reserve(n);

  for (int i = 0; i < n; ++i) {
    const auto start = std::chrono::steady_clock::now();
    StepRecord rec;
    rec.step_index = i;
    rec.timestep = ts[i];
    rec.next_timestep = ts[i + 1];

    const std::vector<LayerSpec>* stack = nullptr;
    if (config.interval.contains(i, n)) {
      if (config.fallback && config.fallback->contains(i, n)) {
        stack = &config.fallback->layers;
        rec.combo = "fallback";
      } else {
        stack = &config.layers;
        rec.combo = "main";
      }
    }

    if (stack != nullptr && !stack->empty()) {
      const InjectContext ctx{models,         sched,   config.condition,   stride, step_position(i, n),
                              config.inversion, config.fixed_point, &rng, &rec.cfg_scales};
      LatentTensor injected = inject(out.latent, ts[i], *stack, 0, ctx);
      rec.injection_delta_norm = distance(injected, out.latent);
      out.latent = std::move(injected);
      if (!out.latent.all_finite()) throw NonFiniteStepError(i, "non-finite latent after injection");
    }

    out.latent = ddim_step(out.latent, ts[i], ts[i + 1], models.get(ModelKind::kVdm), config.condition, sched,
                           config.vanilla_cfg);
    rec.cfg_scales.push_back({"vanilla", 'V', config.vanilla_cfg});
    if (!out.latent.all_finite()) throw NonFiniteStepError(i, "non-finite latent after denoising");

    rec.latent_norm = out.latent.norm();
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    out.trajectory.steps.push_back(std::move(rec));
  }
  return out;
}

}  // namespace ivmix
