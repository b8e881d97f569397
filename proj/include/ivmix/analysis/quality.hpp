// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "json.hpp"
#include "ivmix/core/error.hpp"
#include "ivmix/core/latent.hpp"
#include "ivmix/scoremodels/framewise.hpp"
#include "ivmix/scoremodels/temporal.hpp"

namespace ivmix {

/// Desk-scale quality proxies for a batch of clean videos.
struct QualityReport {
  double mean_nll = 0.0;   // per frame, under the reference framewise density
  double nll_stderr = 0.0;
  double coherence = 0.0;  // pooled lag-1 correlation of frame deviations
  double coherence_stderr = 0.0;
  double target_rho = 0.0;
  std::size_t samples = 0;
};

inline nlohmann::json to_json(const QualityReport& q) {
  return {{"mean_nll", q.mean_nll},         {"nll_stderr", q.nll_stderr},
          {"coherence", q.coherence},       {"coherence_stderr", q.coherence_stderr},
          {"target_rho", q.target_rho},     {"samples", q.samples}};
}

namespace detail {

inline double mean_and_stderr(const std::vector<double>& v, double& stderr_out) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  stderr_out = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size())) : 0.0;
  return m;
}

}  // namespace detail

/// Estimators, evaluated on clean data (alpha = 1, sigma = 0):
///  - NLL: mean over all frames of -log q_I(frame | cond).
///  - Coherence: each video's frames minus the posterior-weighted component
///    mean under the temporal reference; adjacent deviations are pooled into
///    sum <e_j, e_j+1> / sqrt(sum |e_j|^2 * sum |e_j+1|^2) over all videos.
///    The standard error is the spread of the per-video ratios over sqrt(N).
inline QualityReport evaluate_samples(const LatentTensor& samples, const FramewiseModel& image_ref,
                                      const TemporalModel& video_ref, const Condition& cond) {
  const Shape5& s = samples.shape();
  if (samples.size() == 0 || s.batch == 0) throw ConfigError("evaluate_samples needs at least one sample");
  if (!samples.all_finite()) throw NumericalError("samples contain non-finite values");
  const NoiseLevel clean{1.0, 0.0};
  const std::size_t fs = s.frame_size();

  QualityReport q;
  q.samples = s.batch;
  q.target_rho = video_ref.spec().rho_time;

  std::vector<double> per_video_nll(s.batch);
  for (std::size_t b = 0; b < s.batch; ++b) {
    double acc = 0.0;
    for (std::size_t t = 0; t < s.frames; ++t) acc -= image_ref.frame_log_density(samples.frame(b, t), clean, cond);
    per_video_nll[b] = acc / static_cast<double>(s.frames);
  }
  q.mean_nll = detail::mean_and_stderr(per_video_nll, q.nll_stderr);

  if (s.frames < 2) {
    q.coherence = 1.0;
    return q;
  }
  const auto& mix = video_ref.spec().frame_mixture;
  const std::vector<std::size_t> act = mix.active(cond);
  const auto resp = video_ref.responsibilities(samples, clean, cond);
  double num = 0.0;
  double den_a = 0.0;
  double den_b = 0.0;
  std::vector<double> per_video;
  per_video.reserve(s.batch);
  std::vector<double> centre(fs);
  std::vector<std::vector<double>> dev(s.frames);
  for (std::size_t b = 0; b < s.batch; ++b) {
    std::fill(centre.begin(), centre.end(), 0.0);
    for (std::size_t j = 0; j < act.size(); ++j) {
      const auto& mu = mix.components[act[j]].mean;
      for (std::size_t i = 0; i < fs; ++i) centre[i] += resp[b][j] * mu[i];
    }
    for (std::size_t t = 0; t < s.frames; ++t) {
      dev[t] = samples.frame(b, t);
      for (std::size_t i = 0; i < fs; ++i) dev[t][i] -= centre[i];
    }
    double n = 0.0;
    double a = 0.0;
    double c = 0.0;
    for (std::size_t t = 0; t + 1 < s.frames; ++t) {
      for (std::size_t i = 0; i < fs; ++i) {
        n += dev[t][i] * dev[t + 1][i];
        a += dev[t][i] * dev[t][i];
        c += dev[t + 1][i] * dev[t + 1][i];
      }
    }
    num += n;
    den_a += a;
    den_b += c;
    per_video.push_back(a > 0.0 && c > 0.0 ? n / std::sqrt(a * c) : 1.0);
  }
  q.coherence = den_a > 0.0 && den_b > 0.0 ? num / std::sqrt(den_a * den_b) : 1.0;
  detail::mean_and_stderr(per_video, q.coherence_stderr);
  if (!std::isfinite(q.mean_nll) || !std::isfinite(q.coherence)) throw NumericalError("quality report is not finite");
  return q;
}

}  // namespace ivmix
