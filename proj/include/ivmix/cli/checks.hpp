// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "ivmix/analysis/ode_oracle.hpp"
#include "ivmix/analysis/order.hpp"
#include "ivmix/analysis/taylor.hpp"
#include "ivmix/cli/experiment.hpp"
#include "ivmix/cli/runner.hpp"
#include "ivmix/core/tensor_io.hpp"
#include "ivmix/sampler/mixed_sampler.hpp"

namespace ivmix {

/// Outcome of one property check: `measured` is compared with `threshold`
/// under `relation` ("<=", ">=", "<", "==").
struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;
  std::string relation = "<=";
  double threshold = 0.0;
  std::string detail;
  double seconds = 0.0;
};

inline std::string format_check(const CheckResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%s  %-24s measured=%-12.6g %s %-10.6g (%.2fs)", r.passed ? "PASS" : "FAIL",
                r.name.c_str(), r.measured, r.relation.c_str(), r.threshold, r.seconds);
  std::string out = buf;
  if (!r.detail.empty()) out += "  " + r.detail;
  return out;
}

namespace detail {

inline CheckResult timed(const std::string& name, const std::function<CheckResult()>& body) {
  const auto start = std::chrono::steady_clock::now();
  CheckResult r;
  try {
    r = body();
  } catch (const std::exception& e) {
    r.passed = false;
    r.measured = std::numeric_limits<double>::quiet_NaN();
    r.detail = std::string("error: ") + e.what();
  }
  r.name = name;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

/// Calibrated desk config with a smaller batch.
inline ExperimentConfig desk_config(std::size_t videos) {
  ExperimentConfig c;
  c.model.videos = videos;
  return c;
}

}  // namespace detail

/// Same-model presets whose go and back models coincide layer by layer.
inline const std::vector<std::string>& same_model_presets() {
  static const std::vector<std::string> p = {"I-I", "V-V", "II-II", "VV-VV", "IV-VI", "VI-IV"};
  return p;
}

/// Matched applied scales (go and back both +4) with fixed-point inversion
/// must reproduce plain CFG-DDIM.  Reports the worst relative L2 deviation;
/// also fails when one preset takes longer than `max_seconds`.
inline CheckResult check_identity_collapse(double tol = 1e-5, double max_seconds = 10.0) {
  return detail::timed("identity_collapse", [&] {
    const ExperimentConfig base = detail::desk_config(2);
    const DeskSetup setup(base);
    const LatentTensor x = initial_latent(base, base.seed);
    MixedSamplerConfig standard = MixedSamplerConfig::from_preset("standard");
    const LatentTensor ref = iv_mixed_sample(x, standard, setup.models(), setup.sched).latent;
    double worst = 0.0;
    double slowest = 0.0;
    std::string worst_name;
    for (const auto& preset : same_model_presets()) {
      MixedSamplerConfig cfg = standard;
      cfg.layers = layers_from_preset(preset, GuidanceSchedule::constant(-4.0), GuidanceSchedule::constant(4.0));
      cfg.preset_name = preset;
      cfg.inversion = InversionMode::kFixedPoint;
      const auto start = std::chrono::steady_clock::now();
      const LatentTensor y = iv_mixed_sample(x, cfg, setup.models(), setup.sched).latent;
      slowest = std::max(slowest, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
      const double err = relative_distance(y, ref);
      if (err >= worst) {
        worst = err;
        worst_name = preset;
      }
    }
    CheckResult r;
    r.measured = worst;
    r.threshold = tol;
    r.passed = worst <= tol && slowest < max_seconds;
    r.detail = "worst preset " + worst_name + ", slowest preset " + detail::fmt(slowest) + "s (limit " +
               detail::fmt(max_seconds) + "s)";
    return r;
  });
}

/// Many-step DDIM under the exact single-Gaussian score against the closed-form
/// flow map from the top index to the floor index.  Worst relative L2 error
/// over `seeds` draws of (mean, x_T).
inline CheckResult check_gaussian_flow(int steps = 500, int seeds = 100, double tol = 1e-3) {
  return detail::timed("gaussian_flow", [&] {
    const NoiseSchedule sched = NoiseSchedule::make_default();
    const std::vector<int> ts = inference_timesteps(sched.train_steps(), steps);
    double worst = 0.0;
    double mean = 0.0;
    for (int k = 0; k < seeds; ++k) {
      NoiseStream g({static_cast<std::uint64_t>(5000 + k), 0});
      GaussianMixtureSpec spec;
      spec.dim = 16;
      std::vector<double> mu(16);
      for (double& v : mu) v = g.normal();
      const double variance = 0.5;
      spec.components.push_back({1.0, mu, variance, 0});
      const FramewiseModel model(spec, sched);
      const LatentTensor x_top = g.normal_tensor({1, 4, 1, 2, 2});
      LatentTensor x = x_top;
      for (int i = 0; i < steps; ++i) x = ddim_step(x, ts[i], ts[i + 1], model, Condition::text(0), sched);
      const LatentTensor exact =
          gaussian_flow_map(x_top, mu, variance, sched.level(sched.top_index()), sched.level(0));
      const double err = relative_distance(x, exact);
      worst = std::max(worst, err);
      mean += err / seeds;
    }
    CheckResult r;
    r.measured = worst;
    r.threshold = tol;
    r.passed = worst <= tol;
    r.detail = "mean " + detail::fmt(mean) + " over " + std::to_string(seeds) + " seeds, " + std::to_string(steps) +
               " steps";
    return r;
  });
}

/// One go/back layer with the back scale offset by delta; log-log slope of the
/// first-order residual against delta in {0.4, 0.2, 0.1, 0.05}.  Reports the
/// smallest slope over several timesteps and both models.
inline CheckResult check_taylor(int gap = 1, double min_slope = 1.8) {
  return detail::timed("taylor_slope", [&] {
    const ExperimentConfig base = detail::desk_config(1);
    const DeskSetup setup(base);
    NoiseStream g({2024, 0});
    TaylorProbeOptions opts;
    opts.gap = gap;
    double lowest = std::numeric_limits<double>::infinity();
    double highest = -lowest;
    for (int t : {100, 300, 500, 800}) {
      const LatentTensor x =
          forward_diffuse(g.normal_tensor(base.model.shape()), t, g.normal_tensor(base.model.shape()), setup.sched);
      for (const ScoreModel* m : {setup.idm.get(), setup.vdm.get()}) {
        const auto rows = taylor_residual_probe(x, t, {0.4, 0.2, 0.1, 0.05}, *m, base.sampler.condition, setup.sched, opts);
        const double slope = taylor_slope(rows);
        lowest = std::min(lowest, slope);
        highest = std::max(highest, slope);
      }
    }
    CheckResult r;
    r.measured = lowest;
    r.relation = ">=";
    r.threshold = min_slope;
    r.passed = lowest >= min_slope;
    r.detail = "slopes in [" + detail::fmt(lowest) + ", " + detail::fmt(highest) + "], gap " + std::to_string(gap);
    return r;
  });
}

/// Deviation of the "IV-IV" terminal state from the equivalent-ODE terminal
/// state at each step count.
struct EquivalenceStudy {
  std::vector<int> steps;
  std::vector<double> deviation;
  double order = 0.0;
  double ratio_200_50 = 0.0;
};

inline EquivalenceStudy equivalence_study(const std::vector<int>& steps = {25, 50, 100, 200}, std::size_t videos = 4,
                                    int substeps = 10) {
  ExperimentConfig base = detail::desk_config(videos);
  const DeskSetup setup(base);
  const auto* idm = dynamic_cast<const AnalyticScoreModel*>(setup.idm.get());
  const auto* vdm = dynamic_cast<const AnalyticScoreModel*>(setup.vdm.get());
  if (idm == nullptr || vdm == nullptr) throw ConfigError("the ODE oracle needs analytic models");
  const LatentTensor x = initial_latent(base, base.seed);
  EquivalenceStudy s;
  std::vector<OrderSample> pts;
  for (int n : steps) {
    MixedSamplerConfig cfg = base.sampler;
    cfg.inference_steps = n;
    const LatentTensor y = iv_mixed_sample(x, cfg, setup.models(), setup.sched).latent;
    const LatentTensor z = integrate_equivalent_ode(x, equivalent_ode_config(cfg, setup.sched, substeps), *idm, *vdm,
                                                    setup.sched);
    const double dev = relative_distance(y, z);
    s.steps.push_back(n);
    s.deviation.push_back(dev);
    pts.push_back({1.0 / n, dev});
  }
  s.order = estimate_order(pts);
  double d50 = 0.0;
  double d200 = 0.0;
  for (std::size_t i = 0; i < s.steps.size(); ++i) {
    if (s.steps[i] == 50) d50 = s.deviation[i];
    if (s.steps[i] == 200) d200 = s.deviation[i];
  }
  s.ratio_200_50 = d50 > 0.0 ? d200 / d50 : std::numeric_limits<double>::quiet_NaN();
  return s;
}

/// Estimated order >= 1 and deviation(200) <= max_ratio * deviation(50).
inline CheckResult check_ode_equivalence(double min_order = 1.0, double max_ratio = 0.25) {
  return detail::timed("ode_equivalence_order", [&] {
    const EquivalenceStudy s = equivalence_study();
    CheckResult r;
    r.measured = s.order;
    r.relation = ">=";
    r.threshold = min_order;
    r.passed = s.order >= min_order && s.ratio_200_50 <= max_ratio;
    r.detail = "deviations";
    for (std::size_t i = 0; i < s.steps.size(); ++i) {
      r.detail += " n=" + std::to_string(s.steps[i]) + ":" + detail::fmt(s.deviation[i]);
    }
    r.detail += ", ratio 200/50 " + detail::fmt(s.ratio_200_50) + " (limit " + detail::fmt(max_ratio) + ")";
    return r;
  });
}

/// Karras curve: exact endpoints, rho = 1 linear, rho = 7 midpoint against a
/// long-double evaluation.  Reports the largest deviation.
inline CheckResult check_karras(double tol = 1e-10) {
  return detail::timed("karras_schedule", [&] {
    double worst = 0.0;
    const GuidanceSchedule g7{1.0, 7.0, 7.0};
    const auto seq = karras_cfg(g7, 11);
    worst = std::max({worst, std::abs(seq.front() - 1.0), std::abs(seq.back() - 7.0)});
    const GuidanceSchedule g1{2.0, 9.0, 1.0};
    for (int i = 0; i <= 20; ++i) {
      const double p = i / 20.0;
      worst = std::max(worst, std::abs(g1.evaluate(p) - (2.0 + 7.0 * p)));
    }
    const long double b = std::pow(1.0L, 1.0L / 7.0L);
    const long double e = std::pow(7.0L, 1.0L / 7.0L);
    const long double mid = std::pow(b + 0.5L * (e - b), 7.0L);
    worst = std::max(worst, static_cast<double>(std::abs(static_cast<long double>(g7.evaluate(0.5)) - mid)));
    CheckResult r;
    r.measured = worst;
    r.threshold = tol;
    r.passed = worst <= tol;
    r.detail = "endpoints, rho=1 ramp, rho=7 midpoint against long double";
    return r;
  });
}

/// One-shot inversion then a DDIM step back; order of the round-trip error as
/// the gap halves.  Reports the smallest order over timesteps and models.
inline CheckResult check_inversion_order(double min_order = 1.8) {
  return detail::timed("inversion_order", [&] {
    const ExperimentConfig base = detail::desk_config(1);
    const DeskSetup setup(base);
    NoiseStream g({31, 0});
    double lowest = std::numeric_limits<double>::infinity();
    for (int t : {100, 300, 500, 800}) {
      const LatentTensor x = g.normal_tensor(base.model.shape());
      for (const ScoreModel* m : {setup.idm.get(), setup.vdm.get()}) {
        std::vector<OrderSample> pts;
        for (int gap : {40, 20, 10, 5}) {
          const LatentTensor u = ddim_inversion_step(x, t, t + gap, *m, base.sampler.condition, setup.sched);
          pts.push_back({static_cast<double>(gap),
                         distance(ddim_step(u, t + gap, t, *m, base.sampler.condition, setup.sched), x)});
        }
        lowest = std::min(lowest, estimate_order(pts));
      }
    }
    CheckResult r;
    r.measured = lowest;
    r.relation = ">=";
    r.threshold = min_order;
    r.passed = lowest >= min_order;
    r.detail = "gaps 40,20,10,5 at t=100,300,500,800, IDM and VDM";
    return r;
  });
}

struct DeskExperiment {
  QualityReport iv;
  QualityReport vv;
};

/// "IV-IV" and "VV-VV" on the calibrated desk config (200 videos).
inline DeskExperiment desk_experiment(const ExperimentConfig& base = ExperimentConfig{}) {
  const DeskSetup setup(base);
  ExperimentConfig iv = base;
  iv.sampler = MixedSamplerConfig::from_preset("IV-IV");
  iv.sampler.inference_steps = base.sampler.inference_steps;
  iv.sampler.vanilla_cfg = base.sampler.vanilla_cfg;
  ExperimentConfig vv = iv;
  vv.sampler.layers = layers_from_preset("VV-VV");
  vv.sampler.preset_name = "VV-VV";
  return {sample_in_memory(iv, setup, base.seed).quality, sample_in_memory(vv, setup, base.seed).quality};
}

/// "IV-IV" must beat "VV-VV" on per-frame NLL and keep coherence within
/// `coherence_tol` of the target.  Measured value is NLL(IV-IV) - NLL(VV-VV).
inline CheckResult check_desk_experiment(double coherence_tol = 0.1) {
  return detail::timed("desk_iv_vs_vv", [&] {
    const DeskExperiment e = desk_experiment();
    CheckResult r;
    r.measured = e.iv.mean_nll - e.vv.mean_nll;
    r.relation = "<";
    r.threshold = 0.0;
    const double coh_gap = std::abs(e.iv.coherence - e.iv.target_rho);
    r.passed = r.measured < 0.0 && coh_gap <= coherence_tol;
    r.detail = "NLL IV-IV " + detail::fmt(e.iv.mean_nll) + " (se " + detail::fmt(e.iv.nll_stderr) + "), VV-VV " +
               detail::fmt(e.vv.mean_nll) + " (se " + detail::fmt(e.vv.nll_stderr) + "); coherence IV-IV " +
               detail::fmt(e.iv.coherence) + " vs target " + detail::fmt(e.iv.target_rho) + " (limit " +
               detail::fmt(coherence_tol) + "), VV-VV " + detail::fmt(e.vv.coherence) + "; " +
               std::to_string(e.iv.samples) + " videos";
    return r;
  });
}

/// Interval (0,0) must equal standard sampling and a 100% "VV-VV" fallback
/// must equal the "VV-VV" preset, compared as encoded bytes.  Measured value
/// is the number of mismatching comparisons.
inline CheckResult check_gating() {
  return detail::timed("gating_bytes", [&] {
    const ExperimentConfig base = detail::desk_config(16);
    const DeskSetup setup(base);
    const LatentTensor x = initial_latent(base, base.seed);
    auto run = [&](const MixedSamplerConfig& cfg) {
      return encode_tensor(iv_mixed_sample(x, cfg, setup.models(), setup.sched, {base.seed, 1}).latent);
    };
    int mismatches = 0;
    MixedSamplerConfig gated = MixedSamplerConfig::from_preset("IV-IV");
    gated.interval = {0.0, 0.0};
    mismatches += run(gated) == run(MixedSamplerConfig::from_preset("standard")) ? 0 : 1;
    const std::string vv = run(MixedSamplerConfig::from_preset("VV-VV"));
    for (FallbackPlacement place : {FallbackPlacement::kTail, FallbackPlacement::kHead}) {
      MixedSamplerConfig fb = MixedSamplerConfig::from_preset("IV-IV");
      fb.fallback = Fallback{layers_from_preset("VV-VV"), 100.0, place};
      mismatches += run(fb) == vv ? 0 : 1;
    }
    CheckResult r;
    r.measured = mismatches;
    r.relation = "==";
    r.threshold = 0.0;
    r.passed = mismatches == 0;
    r.detail = "interval (0,0) vs standard; z=100 VV-VV fallback (tail, head) vs VV-VV";
    return r;
  });
}

/// Largest |alpha^2 + sigma^2 - 1| over the default grid.
inline CheckResult check_vp_identity(double tol = 1e-12) {
  return detail::timed("vp_identity", [&] {
    const NoiseSchedule s = NoiseSchedule::make_default();
    double worst = 0.0;
    for (int i = 0; i < s.train_steps(); ++i) {
      worst = std::max(worst, std::abs(s.alpha(i) * s.alpha(i) + s.sigma(i) * s.sigma(i) - 1.0));
    }
    CheckResult r;
    r.measured = worst;
    r.threshold = tol;
    r.passed = worst <= tol;
    return r;
  });
}

/// Temporal model with kappa = 1 and rho = 0 against the framewise model on
/// single-frame videos, where the shared component makes them coincide.
inline CheckResult check_marginal_consistency(double tol = 1e-10) {
  return detail::timed("marginal_consistency", [&] {
    const ExperimentConfig base = detail::desk_config(3);
    const NoiseSchedule sched = base.schedule.build();
    const GaussianMixtureSpec mix = base.model.mixture();
    const FramewiseModel image(mix, sched);
    const TemporalModel video(TemporalModelSpec{mix, 0.0, 1.0}, sched);
    NoiseStream g({32, 0});
    double worst = 0.0;
    for (int t : {0, 250, 600, 999}) {
      const LatentTensor x = g.normal_tensor({3, base.model.channels, 1, base.model.height, base.model.width});
      for (const Condition& c : {Condition::text(0), Condition::text(1), Condition::null()}) {
        worst = std::max(worst, distance(image.predict_noise(x, t, c), video.predict_noise(x, t, c)));
      }
    }
    CheckResult r;
    r.measured = worst;
    r.threshold = tol;
    r.passed = worst <= tol;
    return r;
  });
}

/// Temporal-model noise prediction against central differences of log density.
inline CheckResult check_score_fd(double tol = 1e-5) {
  return detail::timed("score_finite_diff", [&] {
    const ExperimentConfig base = detail::desk_config(1);
    const DeskSetup setup(base);
    const auto& vdm = dynamic_cast<const TemporalModel&>(*setup.vdm);
    NoiseStream g({33, 0});
    double worst = 0.0;
    for (int t : {100, 500, 900}) {
      const NoiseLevel lv = setup.sched.level(t);
      LatentTensor x = g.normal_tensor(base.model.shape());
      const LatentTensor eps = vdm.predict_noise_at(x, lv, Condition::text(0));
      const double h = 1e-5;
      for (std::size_t i = 0; i < x.size(); i += 7) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = vdm.log_density_at(x, lv, Condition::text(0));
        x[i] = keep - h;
        const double down = vdm.log_density_at(x, lv, Condition::text(0));
        x[i] = keep;
        const double fd = -lv.sigma * (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(fd - eps[i]) / std::max(1.0, std::abs(eps[i])));
      }
    }
    CheckResult r;
    r.measured = worst;
    r.threshold = tol;
    r.passed = worst <= tol;
    return r;
  });
}

/// Unguided equivalent ODE against the Gaussian flow map at 50 substeps.
inline CheckResult check_ode_gaussian(double tol = 1e-4) {
  return detail::timed("ode_gaussian_flow", [&] {
    const NoiseSchedule sched = NoiseSchedule::make_default();
    NoiseStream g({34, 0});
    GaussianMixtureSpec spec;
    spec.dim = 16;
    std::vector<double> mu(16);
    for (double& v : mu) v = g.normal();
    spec.components.push_back({1.0, mu, 0.4, 0});
    const FramewiseModel model(spec, sched);
    const LatentTensor x_top = g.normal_tensor({2, 4, 2, 2, 2});
    OdeOracleConfig cfg;
    cfg.substeps = 50;
    const LatentTensor z = integrate_equivalent_ode(x_top, cfg, model, model, sched);
    const double err =
        relative_distance(z, gaussian_flow_map(x_top, mu, 0.4, sched.level(sched.top_index()), sched.level(0)));
    CheckResult r;
    r.measured = err;
    r.threshold = tol;
    r.passed = err <= tol;
    return r;
  });
}

/// Guided ODE: RK4 at 10 substeps against Euler at 100.
inline CheckResult check_rk4_vs_euler(double tol = 1e-4) {
  return detail::timed("rk4_vs_euler", [&] {
    const ExperimentConfig base = detail::desk_config(1);
    const DeskSetup setup(base);
    const auto& idm = dynamic_cast<const AnalyticScoreModel&>(*setup.idm);
    const auto& vdm = dynamic_cast<const AnalyticScoreModel&>(*setup.vdm);
    OdeOracleConfig cfg = equivalent_ode_config(base.sampler, setup.sched);
    const LatentTensor x = initial_latent(base, 35);
    const LatentTensor rk4 = integrate_equivalent_ode(x, cfg, idm, vdm, setup.sched);
    cfg.integrator = Integrator::kEuler;
    cfg.substeps = 100;
    const double err = relative_distance(integrate_equivalent_ode(x, cfg, idm, vdm, setup.sched), rk4);
    CheckResult r;
    r.measured = err;
    r.threshold = tol;
    r.passed = err <= tol;
    return r;
  });
}

/// Two identical runs of a stochastic preset produce identical bytes.
inline CheckResult check_determinism() {
  return detail::timed("determinism", [&] {
    const ExperimentConfig base = detail::desk_config(2);
    const DeskSetup setup(base);
    const LatentTensor x = initial_latent(base, base.seed);
    const MixedSamplerConfig cfg = MixedSamplerConfig::from_preset("RR-II");
    const auto a = encode_tensor(iv_mixed_sample(x, cfg, setup.models(), setup.sched, {9, 1}).latent);
    const auto b = encode_tensor(iv_mixed_sample(x, cfg, setup.models(), setup.sched, {9, 1}).latent);
    CheckResult r;
    r.measured = a == b ? 0.0 : 1.0;
    r.relation = "==";
    r.threshold = 0.0;
    r.passed = a == b;
    return r;
  });
}

/// Suite name -> checks.  "all" runs every suite once.
inline const std::map<std::string, std::vector<std::function<CheckResult()>>>& verify_suites() {
  static const std::map<std::string, std::vector<std::function<CheckResult()>>> suites = {
      {"core", {[] { return check_vp_identity(); }, [] { return check_karras(); }}},
      {"scoremodels", {[] { return check_marginal_consistency(); }, [] { return check_score_fd(); }}},
      {"sampler",
       {[] { return check_identity_collapse(); }, [] { return check_gating(); }, [] { return check_inversion_order(); },
        [] { return check_determinism(); }}},
      {"flow", {[] { return check_gaussian_flow(); }}},
      {"analysis", {[] { return check_ode_gaussian(); }, [] { return check_rk4_vs_euler(); }}},
      {"identity", {[] { return check_identity_collapse(); }}},
      {"taylor", {[] { return check_taylor(); }}},
      {"equivalence", {[] { return check_ode_equivalence(); }}},
      {"desk", {[] { return check_desk_experiment(); }}},
  };
  return suites;
}

inline std::vector<std::string> verify_suite_names() {
  std::vector<std::string> names;
  for (const auto& [name, checks] : verify_suites()) names.push_back(name);
  names.push_back("all");
  return names;
}

/// Runs a suite, printing one line per check.  Returns true iff all pass.
inline bool run_verify_suite(const std::string& suite, std::ostream& os) {
  const auto& suites = verify_suites();
  std::vector<std::string> order;
  if (suite == "all") {
    order = {"core", "scoremodels", "sampler", "analysis", "flow", "taylor", "equivalence", "desk"};
  } else if (suites.count(suite)) {
    order = {suite};
  } else {
    throw ConfigError("unknown verify suite '" + suite + "'");
  }
  bool ok = true;
  for (const auto& name : order) {
    for (const auto& check : suites.at(name)) {
      const CheckResult r = check();
      os << "[" << name << "] " << format_check(r) << '\n' << std::flush;
      ok = ok && r.passed;
    }
  }
  return ok;
}

}  // namespace ivmix
