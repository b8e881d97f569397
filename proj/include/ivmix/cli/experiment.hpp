// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ivmix/core/error.hpp"
#include "ivmix/core/rng.hpp"
#include "ivmix/core/schedule.hpp"
#include "ivmix/sampler/config.hpp"
#include "ivmix/sampler/mixed_sampler.hpp"
#include "ivmix/scoremodels/file_backend.hpp"
#include "ivmix/scoremodels/framewise.hpp"
#include "ivmix/scoremodels/temporal.hpp"
#include "json.hpp"

namespace ivmix {

struct ScheduleBlock {
  ScheduleKind kind = ScheduleKind::kVpLinearBeta;
  int train_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 2e-2;

  NoiseSchedule build() const { return NoiseSchedule::build(kind, train_steps, beta_start, beta_end); }
  friend bool operator==(const ScheduleBlock&, const ScheduleBlock&) = default;
};

/// Analytic desk models.  Per class k the generator draws a mean
/// mean_scale * N(0, I) and then one discarded N(0, I) vector from the stream
/// (mixture_seed, 0); each class gets a tight component (class_weight,
/// class_variance, label k) and a halo (halo_weight, halo_variance, label -1)
/// around the same mean.
struct ModelBlock {
  std::string backend = "analytic";  // analytic | file
  std::string command;               // file backend only
  std::string workdir;               // file backend only
  std::size_t channels = 4;
  std::size_t height = 2;
  std::size_t width = 2;
  std::size_t frames = 8;
  std::size_t videos = 200;
  int classes = 2;
  std::uint64_t mixture_seed = 1234;
  double mean_scale = 1.5;
  double class_weight = 0.2;
  double class_variance = 0.1;
  double halo_weight = 0.3;
  double halo_variance = 0.3;
  double kappa = 1.5;
  double rho_time = 0.9;
  double reference_rho = 0.9;  // temporal reference for the coherence metric (kappa 1)

  std::size_t dim() const noexcept { return channels * height * width; }
  Shape5 shape() const noexcept { return {videos, channels, frames, height, width}; }

  GaussianMixtureSpec mixture() const {
    GaussianMixtureSpec mix;
    mix.dim = dim();
    NoiseStream g({mixture_seed, 0});
    for (int k = 0; k < classes; ++k) {
      std::vector<double> m(mix.dim);
      for (double& v : m) v = mean_scale * g.normal();
      for (std::size_t i = 0; i < mix.dim; ++i) g.normal();
      mix.components.push_back({class_weight, m, class_variance, k});
      mix.components.push_back({halo_weight, m, halo_variance, -1});
    }
    return mix;
  }

  void validate() const {
    if (backend != "analytic" && backend != "file") throw ConfigError("model.backend must be 'analytic' or 'file'");
    if (backend == "file" && command.empty()) throw ConfigError("model.command is required for the file backend");
    if (channels == 0 || height == 0 || width == 0 || frames == 0 || videos == 0) {
      throw ConfigError("model extents (channels, height, width, frames, videos) must be >= 1");
    }
    if (classes < 1) throw ConfigError("model.classes must be >= 1");
    if (!(mean_scale >= 0.0)) throw ConfigError("model.mean_scale must be >= 0");
    if (!(reference_rho >= 0.0 && reference_rho < 1.0)) throw ConfigError("model.reference_rho must lie in [0, 1)");
    mixture().validate();
    TemporalModelSpec{mixture(), rho_time, kappa}.validate();
  }

  friend bool operator==(const ModelBlock&, const ModelBlock&) = default;
};

struct SweepBlock {
  std::string axis;
  std::vector<std::string> values;
  friend bool operator==(const SweepBlock&, const SweepBlock&) = default;
};

/// Axes `ablate` can vary, each naming a config field.
inline const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes = {"preset",      "interval", "fallback_z", "vanilla_cfg",
                                                "inference_steps", "guidance", "seed",     "kappa",
                                                "rho_time"};
  return axes;
}

struct ExperimentConfig {
  ScheduleBlock schedule;
  ModelBlock model;
  MixedSamplerConfig sampler = MixedSamplerConfig::from_preset("IV-IV");
  std::optional<SweepBlock> sweep;
  std::string output_dir = "runs";
  std::uint64_t seed = 77;
  int repetitions = 1;

  void validate() const {
    model.validate();
    sampler.validate(schedule.build());
    if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
    if (sweep) {
      bool known = false;
      for (const auto& a : sweep_axes()) known = known || a == sweep->axis;
      if (!known) throw ConfigError("sweep.axis '" + sweep->axis + "' is not a sweepable field");
      if (sweep->values.empty()) throw ConfigError("sweep.values must not be empty");
    }
  }

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// JSON ----------------------------------------------------------------------------

namespace detail {

/// Object reader that names the offending field in every error and rejects
/// keys nobody asked for.
class FieldReader {
 public:
  FieldReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }
  ~FieldReader() = default;
  FieldReader(const FieldReader&) = delete;
  FieldReader& operator=(const FieldReader&) = delete;

  const nlohmann::json* find(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() || it->is_null() ? nullptr : &*it;
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    const nlohmann::json* v = find(key);
    if (v == nullptr) return;
    out = convert<T>(*v, field(key));
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown field '" + field(key) + "'");
    }
  }

  template <typename T>
  static T convert(const nlohmann::json& v, const std::string& name) {
    if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(name + ": expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(name + ": expected true or false");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(name + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_unsigned() || v.get<long long>() >= 0) return v.get<T>();
        throw ConfigError(name + ": expected a non-negative integer");
      } else {
        return v.get<T>();
      }
    } else {
      if (!v.is_number()) throw ConfigError(name + ": expected a number");
      const double d = v.get<double>();
      if (!std::isfinite(d)) throw ConfigError(name + ": expected a finite number");
      return d;
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::string inversion_name(InversionMode m) { return m == InversionMode::kOneShot ? "one_shot" : "fixed_point"; }

inline InversionMode inversion_from_name(const std::string& s, const std::string& field) {
  if (s == "one_shot") return InversionMode::kOneShot;
  if (s == "fixed_point") return InversionMode::kFixedPoint;
  throw ConfigError(field + ": expected 'one_shot' or 'fixed_point', got '" + s + "'");
}

inline std::string placement_name(FallbackPlacement p) { return p == FallbackPlacement::kHead ? "head" : "tail"; }

inline FallbackPlacement placement_from_name(const std::string& s, const std::string& field) {
  if (s == "head") return FallbackPlacement::kHead;
  if (s == "tail") return FallbackPlacement::kTail;
  throw ConfigError(field + ": expected 'head' or 'tail', got '" + s + "'");
}

inline nlohmann::json guidance_json(const GuidanceSchedule& g) {
  return {{"begin", g.gamma_begin}, {"end", g.gamma_end}, {"rho", g.rho}};
}

inline GuidanceSchedule parse_guidance(const nlohmann::json& j, const std::string& path) {
  GuidanceSchedule g;
  if (j.is_number()) return GuidanceSchedule::constant(FieldReader::convert<double>(j, path));
  FieldReader r(j, path);
  r.get("begin", g.gamma_begin);
  g.gamma_end = g.gamma_begin;
  r.get("end", g.gamma_end);
  r.get("rho", g.rho);
  r.finish();
  try {
    g.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return g;
}

inline nlohmann::json layers_json(const std::vector<LayerSpec>& layers) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& l : layers) {
    arr.push_back({{"go", std::string(1, model_letter(l.go))},
                   {"back", std::string(1, model_letter(l.back))},
                   {"go_guidance", guidance_json(l.go_guidance)},
                   {"back_guidance", guidance_json(l.back_guidance)}});
  }
  return arr;
}

inline ModelKind parse_model_letter(const nlohmann::json& j, const std::string& field) {
  const std::string s = FieldReader::convert<std::string>(j, field);
  if (s.size() != 1) throw ConfigError(field + ": expected one of I, V, R");
  try {
    return model_kind_from_letter(s[0]);
  } catch (const ConfigError&) {
    throw ConfigError(field + ": expected one of I, V, R, got '" + s + "'");
  }
}

/// Either an explicit "layers" array or a preset name decoded with the block's
/// go/back guidance (constant 4 unless given).  `preset` holds the fallback
/// name on entry and the label of the parsed stack on exit.
inline std::vector<LayerSpec> parse_stack(FieldReader& r, const std::string& path, std::string& preset) {
  std::string given;
  r.get("preset", given);
  GuidanceSchedule go = GuidanceSchedule::constant(4.0);
  GuidanceSchedule back = GuidanceSchedule::constant(4.0);
  if (const auto* g = r.find("go_guidance")) go = parse_guidance(*g, r.field("go_guidance"));
  if (const auto* g = r.find("back_guidance")) back = parse_guidance(*g, r.field("back_guidance"));
  if (const auto* arr = r.find("layers")) {
    if (!arr->is_array()) throw ConfigError(r.field("layers") + ": expected an array");
    std::vector<LayerSpec> layers;
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const std::string lp = r.field("layers") + "[" + std::to_string(i) + "]";
      FieldReader lr((*arr)[i], lp);
      LayerSpec l;
      l.go_guidance = go;
      l.back_guidance = back;
      if (const auto* v = lr.find("go")) l.go = parse_model_letter(*v, lr.field("go"));
      if (const auto* v = lr.find("back")) l.back = parse_model_letter(*v, lr.field("back"));
      if (const auto* v = lr.find("go_guidance")) l.go_guidance = parse_guidance(*v, lr.field("go_guidance"));
      if (const auto* v = lr.find("back_guidance")) l.back_guidance = parse_guidance(*v, lr.field("back_guidance"));
      lr.finish();
      if (l.back == ModelKind::kRandom) throw ConfigError(lp + ".back: RANDOM is only allowed in the go position");
      layers.push_back(l);
    }
    preset = given.empty() ? preset_from_layers(layers) : given;
    return layers;
  }
  if (!given.empty()) preset = given;
  if (preset.empty()) throw ConfigError(path + ": needs 'preset' or 'layers'");
  try {
    return layers_from_preset(preset, go, back);
  } catch (const ConfigError& e) {
    throw ConfigError(r.field("preset") + ": " + e.what());
  }
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  const auto& s = c.sampler;
  nlohmann::json sampler = {{"preset", s.preset_name},
                            {"layers", detail::layers_json(s.layers)},
                            {"inference_steps", s.inference_steps},
                            {"vanilla_cfg", s.vanilla_cfg},
                            {"condition_class", s.condition.class_id},
                            {"interval", {{"begin", s.interval.begin_pct}, {"end", s.interval.end_pct}}},
                            {"inversion",
                             {{"mode", detail::inversion_name(s.inversion)},
                              {"max_iters", s.fixed_point.max_iters},
                              {"tol", s.fixed_point.tol},
                              {"anderson_depth", s.fixed_point.anderson_depth},
                              {"restarts", s.fixed_point.restarts}}},
                            {"fallback", nullptr}};
  if (s.fallback) {
    sampler["fallback"] = {{"preset", preset_from_layers(s.fallback->layers)},
                           {"layers", detail::layers_json(s.fallback->layers)},
                           {"z_pct", s.fallback->z_pct},
                           {"placement", detail::placement_name(s.fallback->placement)}};
  }
  const auto& m = c.model;
  const nlohmann::json model = {{"backend", m.backend},
                          {"channels", m.channels},
                          {"height", m.height},
                          {"width", m.width},
                          {"frames", m.frames},
                          {"videos", m.videos},
                          {"classes", m.classes},
                          {"mixture_seed", m.mixture_seed},
                          {"mean_scale", m.mean_scale},
                          {"class_weight", m.class_weight},
                          {"class_variance", m.class_variance},
                          {"halo_weight", m.halo_weight},
                          {"halo_variance", m.halo_variance},
                          {"kappa", m.kappa},
                          {"rho_time", m.rho_time},
                          {"reference_rho", m.reference_rho},
                          {"command", m.command},
                          {"workdir", m.workdir}};
  nlohmann::json out = {{"schedule",
                         {{"kind", std::string(to_string(c.schedule.kind))},
                          {"train_steps", c.schedule.train_steps},
                          {"beta_start", c.schedule.beta_start},
                          {"beta_end", c.schedule.beta_end}}},
                        {"model", model},
                        {"sampler", sampler},
                        {"output_dir", c.output_dir},
                        {"seed", c.seed},
                        {"repetitions", c.repetitions}};
  if (c.sweep) out["sweep"] = {{"axis", c.sweep->axis}, {"values", c.sweep->values}};
  return out;
}

/// Parses and validates a config document.  Missing fields keep their
/// defaults; unknown fields and type mismatches raise ConfigError naming the field.
inline ExperimentConfig parse_experiment(const nlohmann::json& j) {
  using detail::FieldReader;
  ExperimentConfig c;
  FieldReader root(j, "");
  if (const auto* sj = root.find("schedule")) {
    FieldReader r(*sj, "schedule");
    std::string kind(to_string(c.schedule.kind));
    r.get("kind", kind);
    try {
      c.schedule.kind = schedule_kind_from_string(kind);
    } catch (const ConfigError& e) {
      throw ConfigError("schedule.kind: " + std::string(e.what()));
    }
    r.get("train_steps", c.schedule.train_steps);
    r.get("beta_start", c.schedule.beta_start);
    r.get("beta_end", c.schedule.beta_end);
    r.finish();
    try {
      c.schedule.build();
    } catch (const ConfigError& e) {
      throw ConfigError("schedule: " + std::string(e.what()));
    }
  }
  if (const auto* mj = root.find("model")) {
    FieldReader r(*mj, "model");
    auto& m = c.model;
    r.get("backend", m.backend);
    r.get("command", m.command);
    r.get("workdir", m.workdir);
    r.get("channels", m.channels);
    r.get("height", m.height);
    r.get("width", m.width);
    r.get("frames", m.frames);
    r.get("videos", m.videos);
    r.get("classes", m.classes);
    r.get("mixture_seed", m.mixture_seed);
    r.get("mean_scale", m.mean_scale);
    r.get("class_weight", m.class_weight);
    r.get("class_variance", m.class_variance);
    r.get("halo_weight", m.halo_weight);
    r.get("halo_variance", m.halo_variance);
    r.get("kappa", m.kappa);
    r.get("rho_time", m.rho_time);
    r.get("reference_rho", m.reference_rho);
    r.finish();
    try {
      m.validate();
    } catch (const ConfigError& e) {
      throw ConfigError("model: " + std::string(e.what()));
    }
  }
  if (const auto* sj = root.find("sampler")) {
    FieldReader r(*sj, "sampler");
    auto& s = c.sampler;
    s.layers = detail::parse_stack(r, "sampler", s.preset_name);
    r.get("inference_steps", s.inference_steps);
    r.get("vanilla_cfg", s.vanilla_cfg);
    int cls = s.condition.class_id;
    r.get("condition_class", cls);
    if (cls < 0) throw ConfigError("sampler.condition_class must be >= 0");
    s.condition = Condition::text(cls);
    if (const auto* ij = r.find("interval")) {
      FieldReader ir(*ij, "sampler.interval");
      ir.get("begin", s.interval.begin_pct);
      ir.get("end", s.interval.end_pct);
      ir.finish();
      try {
        s.interval.validate();
      } catch (const ConfigError& e) {
        throw ConfigError("sampler.interval: " + std::string(e.what()));
      }
    }
    if (const auto* ij = r.find("inversion")) {
      FieldReader ir(*ij, "sampler.inversion");
      std::string mode = detail::inversion_name(s.inversion);
      ir.get("mode", mode);
      s.inversion = detail::inversion_from_name(mode, "sampler.inversion.mode");
      ir.get("max_iters", s.fixed_point.max_iters);
      ir.get("tol", s.fixed_point.tol);
      ir.get("anderson_depth", s.fixed_point.anderson_depth);
      ir.get("restarts", s.fixed_point.restarts);
      ir.finish();
      if (s.fixed_point.max_iters < 1) throw ConfigError("sampler.inversion.max_iters must be >= 1");
      if (!(s.fixed_point.tol > 0.0)) throw ConfigError("sampler.inversion.tol must be positive");
      if (s.fixed_point.anderson_depth < 0) throw ConfigError("sampler.inversion.anderson_depth must be >= 0");
      if (s.fixed_point.restarts < 0) throw ConfigError("sampler.inversion.restarts must be >= 0");
    }
    s.fallback.reset();
    if (const auto* fj = r.find("fallback")) {
      FieldReader fr(*fj, "sampler.fallback");
      Fallback fb;
      std::string name;
      fb.layers = detail::parse_stack(fr, "sampler.fallback", name);
      fr.get("z_pct", fb.z_pct);
      std::string place = detail::placement_name(fb.placement);
      fr.get("placement", place);
      fb.placement = detail::placement_from_name(place, "sampler.fallback.placement");
      fr.finish();
      if (!(fb.z_pct >= 0.0 && fb.z_pct <= 100.0)) throw ConfigError("sampler.fallback.z_pct must lie in [0, 100]");
      s.fallback = std::move(fb);
    }
    r.finish();
    if (s.inference_steps < 1 || s.inference_steps >= c.schedule.train_steps) {
      throw ConfigError("sampler.inference_steps must lie in [1, train_steps)");
    }
  }
  if (const auto* wj = root.find("sweep")) {
    FieldReader r(*wj, "sweep");
    SweepBlock sw;
    r.get("axis", sw.axis);
    if (const auto* vj = r.find("values")) {
      if (!vj->is_array()) throw ConfigError("sweep.values: expected an array");
      for (const auto& v : *vj) sw.values.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    }
    r.finish();
    c.sweep = std::move(sw);
  }
  root.get("output_dir", c.output_dir);
  root.get("seed", c.seed);
  root.get("repetitions", c.repetitions);
  root.finish();
  if (c.repetitions < 1) throw ConfigError("repetitions must be >= 1");
  c.validate();
  return c;
}

inline ExperimentConfig parse_experiment(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_experiment(j);
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment(ss.str());
}

/// Applies one sweep value to a copy of the config.
inline ExperimentConfig apply_axis(ExperimentConfig c, const std::string& axis, const std::string& value) {
  auto number = [&](const std::string& v) {
    std::size_t used = 0;
    double d = 0.0;
    try {
      d = std::stod(v, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != v.size() || !std::isfinite(d)) throw ConfigError("axis " + axis + ": '" + v + "' is not a number");
    return d;
  };
  auto range = [&](const std::string& v, char sep) {
    const auto pos = v.find(sep, 1);
    if (pos == std::string::npos) return std::pair{number(v), number(v)};
    return std::pair{number(v.substr(0, pos)), number(v.substr(pos + 1))};
  };
  auto& s = c.sampler;
  if (axis == "preset") {
    const GuidanceSchedule go = s.layers.empty() ? GuidanceSchedule::constant(4.0) : s.layers.front().go_guidance;
    const GuidanceSchedule back = s.layers.empty() ? GuidanceSchedule::constant(4.0) : s.layers.front().back_guidance;
    s.layers = layers_from_preset(value, go, back);
    s.preset_name = value;
  } else if (axis == "interval") {
    if (value.find('-', 1) == std::string::npos) throw ConfigError("axis interval: '" + value + "' is not begin-end");
    const auto [b, e] = range(value, '-');
    s.interval = {b, e};
  } else if (axis == "fallback_z") {
    if (!s.fallback) s.fallback = Fallback{layers_from_preset("VV-VV"), 0.0, FallbackPlacement::kTail};
    s.fallback->z_pct = number(value);
  } else if (axis == "vanilla_cfg") {
    s.vanilla_cfg = number(value);
  } else if (axis == "inference_steps") {
    const double n = number(value);
    if (n != std::floor(n)) throw ConfigError("axis inference_steps: '" + value + "' is not an integer");
    s.inference_steps = static_cast<int>(n);
  } else if (axis == "guidance") {
    const auto [b, e] = range(value, ':');
    for (auto& l : s.layers) {
      l.go_guidance = {b, e, l.go_guidance.rho};
      l.back_guidance = {b, e, l.back_guidance.rho};
    }
  } else if (axis == "seed") {
    const double v = number(value);
    if (v < 0 || v != std::floor(v)) throw ConfigError("axis seed: '" + value + "' is not a non-negative integer");
    c.seed = static_cast<std::uint64_t>(v);
  } else if (axis == "kappa") {
    c.model.kappa = number(value);
  } else if (axis == "rho_time") {
    c.model.rho_time = number(value);
  } else {
    throw ConfigError("unknown sweep axis '" + axis + "'");
  }
  c.sweep.reset();
  c.validate();
  return c;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Hash of the fields that determine a run's output (seed and bookkeeping excluded).
inline std::string config_hash(const ExperimentConfig& c) {
  nlohmann::json j = to_json(c);
  j.erase("seed");
  j.erase("output_dir");
  j.erase("repetitions");
  j.erase("sweep");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

inline std::string run_dir_name(const ExperimentConfig& c, std::uint64_t seed) {
  return config_hash(c) + "-s" + std::to_string(seed);
}

/// Models built from a config: the two samplers plus the analytic references.
struct DeskSetup {
  NoiseSchedule sched;
  GaussianMixtureSpec mixture;
  std::unique_ptr<ScoreModel> idm;
  std::unique_ptr<ScoreModel> vdm;
  FramewiseModel image_ref;
  TemporalModel video_ref;

  /// File-backend exchanges go to `backend_dir` (default: <output_dir>/backend).
  explicit DeskSetup(const ExperimentConfig& c, const std::filesystem::path& backend_dir = {})
      : sched(c.schedule.build()),
        mixture(c.model.mixture()),
        image_ref(mixture, sched, "IDM-ref"),
        video_ref(TemporalModelSpec{mixture, c.model.reference_rho, 1.0}, sched, "VDM-ref", c.model.frames) {
    if (c.model.backend == "file") {
      std::filesystem::path dir = backend_dir;
      if (dir.empty()) {
        dir = c.model.workdir.empty() ? std::filesystem::path(c.output_dir) / "backend"
                                      : std::filesystem::path(c.model.workdir);
      }
      idm = std::make_unique<FileBackendModel>(dir / "idm", c.model.command, "IDM");
      vdm = std::make_unique<FileBackendModel>(dir / "vdm", c.model.command, "VDM");
    } else {
      idm = std::make_unique<FramewiseModel>(mixture, sched, "IDM");
      vdm = std::make_unique<TemporalModel>(TemporalModelSpec{mixture, c.model.rho_time, c.model.kappa}, sched, "VDM",
                                            c.model.frames);
    }
  }

  ModelSet models() const { return {idm.get(), vdm.get()}; }
};

}  // namespace ivmix
