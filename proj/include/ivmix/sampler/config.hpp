// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ivmix/core/error.hpp"
#include "ivmix/core/schedule.hpp"
#include "ivmix/sampler/ddim.hpp"
#include "ivmix/scoremodels/score_model.hpp"

namespace ivmix {

enum class ModelKind { kIdm, kVdm, kRandom };

inline char model_letter(ModelKind k) {
  switch (k) {
    case ModelKind::kIdm: return 'I';
    case ModelKind::kVdm: return 'V';
    case ModelKind::kRandom: return 'R';
  }
  return '?';
}

inline ModelKind model_kind_from_letter(char c) {
  switch (c) {
    case 'I': return ModelKind::kIdm;
    case 'V': return ModelKind::kVdm;
    case 'R': return ModelKind::kRandom;
    default: throw ConfigError(std::string("unknown model letter '") + c + "'");
  }
}

/// One go/back pair of the injection stack.  The engine negates the go
/// schedule: the go step runs with scale -h_go(p), the back step with +h_back(p).
struct LayerSpec {
  ModelKind go = ModelKind::kIdm;
  ModelKind back = ModelKind::kIdm;
  GuidanceSchedule go_guidance = GuidanceSchedule::constant(4.0);
  GuidanceSchedule back_guidance = GuidanceSchedule::constant(4.0);

  void validate() const {
    if (back == ModelKind::kRandom) throw ConfigError("RANDOM is only allowed in the go position");
    go_guidance.validate();
    back_guidance.validate();
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Decodes "AB-CD" style names.  Left of '-' lists go models outer to inner;
/// right of '-' lists back models in execution order (inner first), so layer k
/// pairs go[k] with back[N-1-k].  "standard" decodes to an empty stack.
inline std::vector<LayerSpec> layers_from_preset(std::string_view name,
                                                 GuidanceSchedule go = GuidanceSchedule::constant(4.0),
                                                 GuidanceSchedule back = GuidanceSchedule::constant(4.0)) {
  if (name == "standard" || name.empty()) return {};
  const auto dash = name.find('-');
  if (dash == std::string_view::npos || name.find('-', dash + 1) != std::string_view::npos) {
    throw ConfigError("preset '" + std::string(name) + "' must look like 'AB-CD'");
  }
  const std::string_view gos = name.substr(0, dash);
  const std::string_view backs = name.substr(dash + 1);
  if (gos.empty() || gos.size() != backs.size()) {
    throw ConfigError("preset '" + std::string(name) + "' needs equally many go and back models");
  }
  std::vector<LayerSpec> layers(gos.size());
  for (std::size_t k = 0; k < gos.size(); ++k) {
    layers[k].go = model_kind_from_letter(gos[k]);
    layers[k].back = model_kind_from_letter(backs[gos.size() - 1 - k]);
    layers[k].go_guidance = go;
    layers[k].back_guidance = back;
    layers[k].validate();
  }
  return layers;
}

/// Inverse of layers_from_preset (model letters only).
inline std::string preset_from_layers(const std::vector<LayerSpec>& layers) {
  if (layers.empty()) return "standard";
  std::string gos;
  std::string backs;
  for (const auto& l : layers) gos.push_back(model_letter(l.go));
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) backs.push_back(model_letter(it->back));
  return gos + "-" + backs;
}

/// Portion of the inference loop (percent, measured from the noisiest step)
/// where injection runs.  Step i of n is inside when begin <= 100 i / n < end,
/// so 0-50 over 50 steps covers steps 1-25.  begin == end disables injection.
struct Interval {
  double begin_pct = 0.0;
  double end_pct = 100.0;

  bool contains(int i, int n) const { return begin_pct * n <= 100.0 * i && 100.0 * i < end_pct * n; }

  void validate() const {
    if (!(begin_pct >= 0.0 && begin_pct <= end_pct && end_pct <= 100.0)) {
      throw ConfigError("interval must satisfy 0 <= begin <= end <= 100");
    }
  }

  friend bool operator==(const Interval&, const Interval&) = default;
};

enum class FallbackPlacement { kHead, kTail };

/// Replaces the main stack with `layers` on z_pct percent of the loop.
struct Fallback {
  std::vector<LayerSpec> layers;
  double z_pct = 0.0;
  FallbackPlacement placement = FallbackPlacement::kTail;

  bool contains(int i, int n) const {
    if (placement == FallbackPlacement::kHead) return 100.0 * i < z_pct * n;
    return 100.0 * i >= (100.0 - z_pct) * n;
  }

  void validate() const {
    if (!(z_pct >= 0.0 && z_pct <= 100.0)) throw ConfigError("fallback z_pct must lie in [0, 100]");
    for (const auto& l : layers) l.validate();
  }

  friend bool operator==(const Fallback&, const Fallback&) = default;
};

struct MixedSamplerConfig {
  std::vector<LayerSpec> layers;
  int inference_steps = 50;
  double vanilla_cfg = 6.5;
  Interval interval;
  std::optional<Fallback> fallback;
  InversionMode inversion = InversionMode::kOneShot;
  FixedPointOptions fixed_point;
  std::string preset_name;
  Condition condition = Condition::text(0);

  void validate(const NoiseSchedule& sched) const {
    if (inference_steps < 1) throw ConfigError("inference_steps must be >= 1");
    if (inference_steps >= sched.train_steps()) {
      throw ConfigError("inference_steps must be smaller than train_steps");
    }
    if (!std::isfinite(vanilla_cfg)) throw ConfigError("vanilla_cfg must be finite");
    interval.validate();
    for (const auto& l : layers) l.validate();
    if (fallback) fallback->validate();
    if (fixed_point.max_iters < 1 || !(fixed_point.tol > 0.0)) throw ConfigError("invalid fixed-point options");
  }

  static MixedSamplerConfig from_preset(std::string_view name) {
    MixedSamplerConfig c;
    c.layers = layers_from_preset(name);
    c.preset_name = std::string(name);
    return c;
  }

  friend bool operator==(const MixedSamplerConfig&, const MixedSamplerConfig&) = default;
};

}  // namespace ivmix
