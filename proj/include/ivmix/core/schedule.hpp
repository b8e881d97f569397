// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "ivmix/core/error.hpp"

namespace ivmix {

enum class ScheduleKind { kVpLinearBeta, kVpCosine };

inline std::string_view to_string(ScheduleKind kind) {
  return kind == ScheduleKind::kVpCosine ? "vp-cosine" : "vp-linear-beta";
}

inline ScheduleKind schedule_kind_from_string(std::string_view name) {
  if (name == "vp-linear-beta") return ScheduleKind::kVpLinearBeta;
  if (name == "vp-cosine") return ScheduleKind::kVpCosine;
  throw ConfigError("unknown schedule kind '" + std::string(name) + "'");
}

/// Signal and noise scales at one point of the forward process.
struct NoiseLevel {
  double alpha = 1.0;
  double sigma = 0.0;
};

/// Probability-flow coefficients at one continuous time.
struct SdeCoefficients {
  NoiseLevel level;
  double drift = 0.0;
  double diffusion_sq = 0.0;
};

/// Variance-preserving forward-process tables over the integer grid 0..T-1.
///
/// Index i corresponds to normalized time t_i = i / (T - 1).  Continuous
/// accessors interpolate alpha linearly on that grid and recover sigma from
/// the VP identity, so alpha(t)^2 + sigma(t)^2 = 1 everywhere.  The drift
/// f(t) = d log alpha / dt and squared diffusion g^2(t) = d sigma^2/dt - 2 f sigma^2
/// use the one-cell difference of the alpha table, i.e. the exact derivatives
/// of the interpolant inside that cell.  They jump at grid nodes, so
/// integrators pass the cell explicitly.
class NoiseSchedule {
 public:
  static constexpr double kDefaultEtaFloor = 1e-5;

  ScheduleKind kind() const noexcept { return kind_; }
  int train_steps() const noexcept { return static_cast<int>(alpha_.size()); }
  double beta_start() const noexcept { return beta_start_; }
  double beta_end() const noexcept { return beta_end_; }
  double eta_floor() const noexcept { return eta_floor_; }

  const std::vector<double>& betas() const noexcept { return betas_; }
  const std::vector<double>& alpha_table() const noexcept { return alpha_; }
  const std::vector<double>& sigma_table() const noexcept { return sigma_; }

  double alpha(int index) const { return alpha_.at(checked(index)); }
  double sigma(int index) const { return sigma_.at(checked(index)); }
  NoiseLevel level(int index) const { return {alpha(index), sigma(index)}; }

  int top_index() const noexcept { return train_steps() - 1; }
  double time_of(int index) const { return static_cast<double>(checked(index)) / top_index(); }
  bool on_grid(int index) const noexcept { return index >= 0 && index < train_steps(); }

  double alpha_at(double t) const { return interpolate(alpha_, t); }
  double sigma_at(double t) const {
    const double a = alpha_at(t);
    return std::sqrt(std::max(0.0, 1.0 - a * a));
  }
  NoiseLevel level_at(double t) const {
    const double a = alpha_at(t);
    return {a, std::sqrt(std::max(0.0, 1.0 - a * a))};
  }

  /// Cell [i, i+1] that contains t, the lower one at interior nodes.
  int cell_of(double t) const {
    check_time(t);
    return std::min(static_cast<int>(t * top_index()), top_index() - 1);
  }

  /// Level, drift and squared diffusion at t, differentiating inside `cell`.
  /// t may sit on either boundary of the cell.
  SdeCoefficients sde_at(double t, int cell) const {
    check_time(t);
    if (cell < 0 || cell >= top_index()) throw ConfigError("cell " + std::to_string(cell) + " is off the grid");
    const double pos = t * top_index();
    if (pos < cell - 1e-9 || pos > cell + 1.0 + 1e-9) {
      throw ConfigError("time " + std::to_string(t) + " lies outside cell " + std::to_string(cell));
    }
    const double slope = (alpha_[cell + 1] - alpha_[cell]) * top_index();
    const double a = alpha_[cell] + (pos - cell) * (alpha_[cell + 1] - alpha_[cell]);
    const double var = std::max(0.0, 1.0 - a * a);
    const double f = slope / a;
    const double g2 = -2.0 * a * slope - 2.0 * f * var;
    return {{a, std::sqrt(var)}, f, g2};
  }

  double drift_at(double t) const { return sde_at(t, cell_of(t)).drift; }
  double diffusion_sq_at(double t) const { return sde_at(t, cell_of(t)).diffusion_sq; }

  static NoiseSchedule build(ScheduleKind kind, int train_steps, double beta_start, double beta_end,
                             double eta_floor = kDefaultEtaFloor) {
    if (train_steps < 2) throw ConfigError("train_steps must be >= 2, got " + std::to_string(train_steps));
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
      throw ConfigError("betas must satisfy 0 < beta_start <= beta_end < 1, got " + std::to_string(beta_start) +
                        ".." + std::to_string(beta_end));
    }
    if (!(eta_floor > 0.0 && eta_floor < 1.0)) throw ConfigError("eta_floor must lie in (0, 1)");

    NoiseSchedule s;
    s.kind_ = kind;
    s.beta_start_ = beta_start;
    s.beta_end_ = beta_end;
    s.eta_floor_ = eta_floor;
    s.betas_.resize(train_steps);

    if (kind == ScheduleKind::kVpLinearBeta) {
      for (int i = 0; i < train_steps; ++i) {
        s.betas_[i] = beta_start + (beta_end - beta_start) * i / (train_steps - 1);
      }
    } else {
      // Cosine alpha-bar curve with offset 0.008; beta endpoints only bound the clipping.
      constexpr double kOffset = 0.008;
      auto abar = [&](double u) {
        const double c = std::cos((u + kOffset) / (1.0 + kOffset) * std::numbers::pi / 2.0);
        return c * c;
      };
      for (int i = 0; i < train_steps; ++i) {
        const double b = 1.0 - abar(static_cast<double>(i + 1) / train_steps) / abar(static_cast<double>(i) / train_steps);
        s.betas_[i] = std::clamp(b, beta_start, std::min(beta_end, 0.999));
      }
    }

    s.alpha_.resize(train_steps);
    s.sigma_.resize(train_steps);
    double log_abar = 0.0;
    for (int i = 0; i < train_steps; ++i) {
      log_abar += std::log1p(-s.betas_[i]);
      const double abar = std::exp(log_abar);
      s.alpha_[i] = std::sqrt(abar);
      s.sigma_[i] = std::sqrt(-std::expm1(log_abar));
    }
    return s;
  }

  static NoiseSchedule make_default() { return build(ScheduleKind::kVpLinearBeta, 1000, 1e-4, 2e-2); }

 private:
  int checked(int index) const {
    if (!on_grid(index)) {
      throw ConfigError("timestep " + std::to_string(index) + " is off the grid [0, " + std::to_string(top_index()) + "]");
    }
    return index;
  }

  static void check_time(double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("continuous time must lie in [0, 1], got " + std::to_string(t));
  }

  double interpolate(const std::vector<double>& table, double t) const {
    check_time(t);
    const double pos = t * top_index();
    const int lo = std::min(static_cast<int>(pos), top_index() - 1);
    const double frac = pos - lo;
    return table[lo] + frac * (table[lo + 1] - table[lo]);
  }

  ScheduleKind kind_ = ScheduleKind::kVpLinearBeta;
  double beta_start_ = 0.0;
  double beta_end_ = 0.0;
  double eta_floor_ = kDefaultEtaFloor;
  std::vector<double> betas_;
  std::vector<double> alpha_;
  std::vector<double> sigma_;
};

/// Karras-shaped guidance-scale curve between two endpoint scales.
///
/// evaluate(p) = (b^(1/rho) + p (e^(1/rho) - b^(1/rho)))^rho for p in [0, 1].
/// Negative endpoints are only admissible when rho == 1 (plain linear ramp).
struct GuidanceSchedule {
  double gamma_begin = 4.0;
  double gamma_end = 4.0;
  double rho = 7.0;

  static GuidanceSchedule constant(double gamma) { return {gamma, gamma, 7.0}; }

  void validate() const {
    if (!(rho > 0.0) || !std::isfinite(rho)) throw ConfigError("guidance rho must be positive and finite");
    if (!std::isfinite(gamma_begin) || !std::isfinite(gamma_end)) throw ConfigError("guidance scales must be finite");
    if (rho != 1.0 && gamma_begin != gamma_end && (gamma_begin <= 0.0 || gamma_end <= 0.0)) {
      throw ConfigError("guidance scales must be positive when rho != 1");
    }
  }

  bool is_constant() const noexcept { return gamma_begin == gamma_end; }

  double evaluate(double p) const {
    if (p <= 0.0) return gamma_begin;
    if (p >= 1.0) return gamma_end;
    if (gamma_begin == gamma_end) return gamma_begin;
    if (rho == 1.0) return gamma_begin + p * (gamma_end - gamma_begin);
    const double b = std::pow(gamma_begin, 1.0 / rho);
    const double e = std::pow(gamma_end, 1.0 / rho);
    return std::pow(b + p * (e - b), rho);
  }

  friend bool operator==(const GuidanceSchedule&, const GuidanceSchedule&) = default;
};

/// Even position grid i / (n - 1) over n points; {0} when n == 1.
inline double step_position(int i, int n) { return n <= 1 ? 0.0 : static_cast<double>(i) / (n - 1); }

/// Per-step guidance scales over an n-step loop (linspace ramp over [0, 1]).
inline std::vector<double> karras_cfg(const GuidanceSchedule& schedule, int n) {
  schedule.validate();
  if (n < 1) throw ConfigError("karras_cfg needs n >= 1");
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) out[i] = schedule.evaluate(step_position(i, n));
  return out;
}

}  // namespace ivmix
