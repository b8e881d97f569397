// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

namespace ivmix {

/// One guidance scale applied during a step.
struct CfgUse {
  std::string slot;   // "L1.go", "L2.back", "vanilla", ...
  char model = 'V';   // I, V or R
  double scale = 0.0;
};

struct StepRecord {
  int step_index = 0;
  int timestep = 0;
  int next_timestep = 0;
  std::string combo = "none";  // none | main | fallback
  double latent_norm = 0.0;
  double injection_delta_norm = 0.0;
  std::vector<CfgUse> cfg_scales;
  double wall_ms = 0.0;
};

struct TrajectoryRecord {
  std::vector<StepRecord> steps;
  double initial_norm = 0.0;
};

inline nlohmann::json to_json(const StepRecord& r) {
  nlohmann::json cfg = nlohmann::json::array();
  for (const auto& c : r.cfg_scales) cfg.push_back({{"slot", c.slot}, {"model", std::string(1, c.model)}, {"scale", c.scale}});
  return {{"step_index", r.step_index},
          {"timestep", r.timestep},
          {"next_timestep", r.next_timestep},
          {"combo", r.combo},
          {"latent_norm", r.latent_norm},
          {"injection_delta_norm", r.injection_delta_norm},
          {"cfg_scales", cfg},
          {"wall_ms", r.wall_ms}};
}

/// Line-delimited records: one JSON object per step.
inline void write_jsonl(std::ostream& os, const TrajectoryRecord& t) {
  for (const auto& s : t.steps) os << to_json(s).dump() << '\n';
}

inline std::string to_jsonl(const TrajectoryRecord& t) {
  std::ostringstream os;
  write_jsonl(os, t);
  return os.str();
}

}  // namespace ivmix
