// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ivmix/core/error.hpp"
#include "ivmix/core/schedule.hpp"
#include "ivmix/scoremodels/score_model.hpp"

namespace ivmix {

inline constexpr double kVarianceFloor = 1e-12;

/// One isotropic component N(mean, variance * I).
///
/// `label` ties the component to a class: a text condition with class_id k
/// keeps the components labelled k; the null condition keeps all of them.
/// Negative labels mark components that only appear unconditionally.
struct GaussianComponent {
  double weight = 1.0;
  std::vector<double> mean;
  double variance = 1.0;
  int label = 0;

  friend bool operator==(const GaussianComponent&, const GaussianComponent&) = default;
};

struct GaussianMixtureSpec {
  std::size_t dim = 0;
  std::vector<GaussianComponent> components;

  void validate() const {
    if (dim == 0) throw ConfigError("mixture dimension must be >= 1");
    if (components.empty()) throw ConfigError("mixture needs at least one component");
    double total = 0.0;
    for (std::size_t k = 0; k < components.size(); ++k) {
      const auto& c = components[k];
      if (!(c.weight > 0.0)) throw ConfigError("component " + std::to_string(k) + " weight must be positive");
      if (!(c.variance > 0.0)) throw ConfigError("component " + std::to_string(k) + " variance must be positive");
      if (c.mean.size() != dim) {
        throw ConfigError("component " + std::to_string(k) + " mean has length " + std::to_string(c.mean.size()) +
                          ", expected " + std::to_string(dim));
      }
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) throw ConfigError("mixture weights sum to " + std::to_string(total) + ", not 1");
  }

  /// Indices of the components active under `cond`.
  std::vector<std::size_t> active(const Condition& cond) const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < components.size(); ++k) {
      if (cond.is_null() || components[k].label == cond.class_id) out.push_back(k);
    }
    if (out.empty()) throw ConfigError("no mixture component carries class " + std::to_string(cond.class_id));
    return out;
  }

  friend bool operator==(const GaussianMixtureSpec&, const GaussianMixtureSpec&) = default;
};

/// Normalized responsibilities from unnormalized log weights (log-sum-exp).
inline double normalize_log_weights(std::vector<double>& logw) {
  const double mx = *std::max_element(logw.begin(), logw.end());
  double s = 0.0;
  for (double v : logw) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  for (double& v : logw) v = std::exp(v - lse);
  return lse;
}

/// Result of evaluating a noised mixture at one point.
struct MixturePoint {
  double log_density = 0.0;
  std::vector<double> responsibilities;  // over the active components
};

/// Noised mixture p_t = sum_k w_k N(alpha mu_k, (alpha^2 s_k^2 + sigma^2) I) restricted to
/// the components active under `cond`, evaluated at x.  `eps_out`, when non-empty,
/// receives sigma * sum_k r_k (x - alpha mu_k) / v_k.
inline MixturePoint evaluate_mixture(const GaussianMixtureSpec& spec, std::span<const double> x, NoiseLevel level,
                                     const Condition& cond, std::span<double> eps_out = {}) {
  const std::vector<std::size_t> act = spec.active(cond);
  double wsum = 0.0;
  for (std::size_t k : act) wsum += spec.components[k].weight;

  const double d = static_cast<double>(spec.dim);
  std::vector<double> logw(act.size());
  std::vector<double> var(act.size());
  for (std::size_t j = 0; j < act.size(); ++j) {
    const auto& c = spec.components[act[j]];
    const double v = std::max(level.alpha * level.alpha * c.variance + level.sigma * level.sigma, kVarianceFloor);
    double q = 0.0;
    for (std::size_t i = 0; i < spec.dim; ++i) {
      const double r = x[i] - level.alpha * c.mean[i];
      q += r * r;
    }
    var[j] = v;
    logw[j] = std::log(c.weight / wsum) - 0.5 * d * std::log(2.0 * std::numbers::pi * v) - 0.5 * q / v;
  }
  MixturePoint out;
  out.log_density = normalize_log_weights(logw);
  out.responsibilities = logw;

  if (!eps_out.empty()) {
    std::fill(eps_out.begin(), eps_out.end(), 0.0);
    for (std::size_t j = 0; j < act.size(); ++j) {
      const auto& c = spec.components[act[j]];
      const double coef = level.sigma * out.responsibilities[j] / var[j];
      for (std::size_t i = 0; i < spec.dim; ++i) eps_out[i] += coef * (x[i] - level.alpha * c.mean[i]);
    }
  }
  return out;
}

}  // namespace ivmix
