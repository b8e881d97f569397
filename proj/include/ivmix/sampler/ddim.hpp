// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>

#include "ivmix/core/error.hpp"
#include "ivmix/core/latent.hpp"
#include "ivmix/core/rng.hpp"
#include "ivmix/core/schedule.hpp"
#include "ivmix/scoremodels/score_model.hpp"

namespace ivmix {

inline constexpr double kAlphaFloor = 1e-8;

enum class InversionMode { kOneShot, kFixedPoint };

struct FixedPointOptions {
  int max_iters = 50;
  double tol = 1e-10;
  int anderson_depth = 10;  // 0 gives the plain fixed-point iteration
  int restarts = 32;        // perturbed Newton restarts for batch items that stall

  friend bool operator==(const FixedPointOptions&, const FixedPointOptions&) = default;
};

/// alpha_t x0 + sigma_t noise.
inline LatentTensor forward_diffuse(const LatentTensor& x0, int t, const LatentTensor& noise, const NoiseSchedule& sched) {
  x0.require_same_shape(noise);
  return LatentTensor::combine(sched.alpha(t), x0, sched.sigma(t), noise);
}

/// Draw from q(x_{t'} | x_t) = N((a'/a) x_t, (s'^2 - (a'/a)^2 s^2) I) for t' >= t.
inline LatentTensor renoise_transition(const LatentTensor& x, int t, int t_next, const NoiseSchedule& sched,
                                       NoiseStream& rng) {
  if (t_next < t) throw ConfigError("renoise_transition needs t_next >= t");
  if (t_next == t) return x;
  const double ratio = sched.alpha(t_next) / sched.alpha(t);
  const double var = sched.sigma(t_next) * sched.sigma(t_next) - ratio * ratio * sched.sigma(t) * sched.sigma(t);
  if (var < -1e-12) {
    throw NumericalError("negative transition variance " + std::to_string(var) + " between " + std::to_string(t) +
                         " and " + std::to_string(t_next));
  }
  const double sd = std::sqrt(std::max(var, 0.0));
  LatentTensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = ratio * x[i] + sd * rng.normal();
  return out;
}

/// The deterministic DDIM map from level `from` to level `to` for a fixed noise estimate.
inline LatentTensor ddim_map(const LatentTensor& x, const LatentTensor& eps, NoiseLevel from, NoiseLevel to) {
  x.require_same_shape(eps);
  const double a = to.alpha / std::max(from.alpha, kAlphaFloor);
  const double b = to.sigma - a * from.sigma;
  return LatentTensor::combine(a, x, b, eps);
}

/// (w + 1) eps(x, t, c) - w eps(x, t, null).  w = 0 and w = -1 take a single
/// model call; a null condition ignores w.
inline LatentTensor cfg_predict(const ScoreModel& model, const LatentTensor& x, int t, const Condition& cond, double w) {
  if (cond.is_null() || w == 0.0) return model.predict_noise(x, t, cond);
  if (w == -1.0) return model.predict_noise(x, t, Condition::null());
  const LatentTensor ec = model.predict_noise(x, t, cond);
  const LatentTensor eu = model.predict_noise(x, t, Condition::null());
  return LatentTensor::combine(w + 1.0, ec, -w, eu);
}

/// Denoising step from grid index s to t <= s with guidance scale w.
inline LatentTensor ddim_step(const LatentTensor& x, int s, int t, const ScoreModel& model, const Condition& cond,
                              const NoiseSchedule& sched, double w = 0.0) {
  if (t > s) throw ConfigError("ddim_step needs t <= s, got s=" + std::to_string(s) + " t=" + std::to_string(t));
  if (t == s) return x;
  const LatentTensor eps = cfg_predict(model, x, s, cond, w);
  return ddim_map(x, eps, sched.level(s), sched.level(t));
}

/// Outcome of one inversion step.
struct InversionResult {
  LatentTensor latent;
  int iterations = 0;
  double residual = 0.0;  // ||ddim_step(latent) - x||; 0 in one-shot mode
};

namespace detail {

/// Newton iteration with Levenberg-Marquardt damping for F(u) = 0, where F
/// acts on each batch item independently.  Jacobians come from forward
/// differences, one column per coordinate, perturbing all items at once.
/// Returns true once ||F(u)|| <= tol; `iters` counts every trial step.
template <typename Residual>
bool damped_newton(LatentTensor& u, const Residual& residual_of, double tol, int budget, int& iters,
                   double& residual) {
  const auto items = static_cast<Eigen::Index>(u.shape().batch);
  const auto n = static_cast<Eigen::Index>(u.size()) / items;
  LatentTensor r = residual_of(u);
  residual = r.norm();
  std::vector<double> lambda(static_cast<std::size_t>(items), 0.0);
  std::vector<Eigen::MatrixXd> jac(static_cast<std::size_t>(items), Eigen::MatrixXd(n, n));
  bool refresh = true;
  while (residual > tol && budget-- > 0) {
    if (!std::isfinite(residual)) return false;
    if (refresh) {
      for (Eigen::Index j = 0; j < n; ++j) {
        LatentTensor v = u;
        std::vector<double> h(static_cast<std::size_t>(items));
        for (Eigen::Index b = 0; b < items; ++b) {
          double& uj = v[static_cast<std::size_t>(b * n + j)];
          h[static_cast<std::size_t>(b)] = 1e-7 * (1.0 + std::abs(uj));
          uj += h[static_cast<std::size_t>(b)];
        }
        const LatentTensor rj = residual_of(v);
        for (Eigen::Index b = 0; b < items; ++b) {
          for (Eigen::Index i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(b * n + i);
            jac[static_cast<std::size_t>(b)](i, j) = (rj[k] - r[k]) / h[static_cast<std::size_t>(b)];
          }
        }
      }
    }
    LatentTensor trial = u;
    for (Eigen::Index b = 0; b < items; ++b) {
      const Eigen::Map<const Eigen::VectorXd> rb(&r[static_cast<std::size_t>(b * n)], n);
      const Eigen::MatrixXd& jb = jac[static_cast<std::size_t>(b)];
      const double lam = lambda[static_cast<std::size_t>(b)];
      Eigen::VectorXd step;
      if (lam == 0.0) {
        step = -jb.colPivHouseholderQr().solve(rb);
      } else {
        Eigen::MatrixXd normal = jb.transpose() * jb;
        normal.diagonal().array() += lam;
        step = -normal.ldlt().solve(jb.transpose() * rb);
      }
      if (!step.allFinite()) step.setZero();
      Eigen::Map<Eigen::VectorXd>(&trial[static_cast<std::size_t>(b * n)], n) += step;
    }
    ++iters;
    const LatentTensor rt = residual_of(trial);
    refresh = false;
    for (Eigen::Index b = 0; b < items; ++b) {
      const auto off = static_cast<std::size_t>(b * n);
      const Eigen::Map<const Eigen::VectorXd> old_b(&r[off], n);
      const Eigen::Map<const Eigen::VectorXd> new_b(&rt[off], n);
      double& lam = lambda[static_cast<std::size_t>(b)];
      if (new_b.allFinite() && new_b.norm() < old_b.norm()) {
        std::copy(&trial[off], &trial[off] + n, &u[off]);
        std::copy(&rt[off], &rt[off] + n, &r[off]);
        lam = lam < 1e-9 ? 0.0 : 0.1 * lam;
        refresh = true;
      } else if (old_b.norm() > 0.0) {
        const double scale = jac[static_cast<std::size_t>(b)].squaredNorm() / static_cast<double>(n);
        lam = lam == 0.0 ? 1e-6 * scale : 10.0 * lam;
      }
    }
    residual = r.norm();
  }
  return residual <= tol;
}

}  // namespace detail

/// Inversion step from grid index s to t >= s.
///
/// One-shot evaluates the noise at (x, s).  Fixed-point mode solves
/// ddim_step(u, t -> s) = x with the noise evaluated at (u, t), starting from
/// the one-shot estimate.  It first iterates G(u) = ddim_map(x, eps(u, t), s -> t)
/// with Anderson mixing over the last `anderson_depth` iterates.  Under strong
/// guidance the step map can fold, and G then stalls; the remaining budget goes
/// to damped Newton on the step residual from the best iterate so far, and
/// items that still stall get up to `restarts` perturbed Newton restarts.
/// Batch items must be independent under the model.  Throws ConvergenceError
/// when the residual stays above tol.
inline InversionResult ddim_inversion(const LatentTensor& x, int s, int t, const ScoreModel& model, const Condition& cond,
                                      const NoiseSchedule& sched, double w = 0.0,
                                      InversionMode mode = InversionMode::kOneShot, FixedPointOptions opts = {}) {
  if (t < s) throw ConfigError("ddim_inversion needs t >= s, got s=" + std::to_string(s) + " t=" + std::to_string(t));
  if (t == s) return {x, 0, 0.0};
  const NoiseLevel from = sched.level(s);
  const NoiseLevel to = sched.level(t);
  LatentTensor u = ddim_map(x, cfg_predict(model, x, s, cond, w), from, to);
  if (mode == InversionMode::kOneShot) return {std::move(u), 0, 0.0};

  // ||ddim_step(u) - x|| = (alpha_s / alpha_t) ||G(u) - u||.
  const double gain = from.alpha / std::max(to.alpha, kAlphaFloor);
  const auto n = static_cast<Eigen::Index>(u.size());
  std::deque<Eigen::VectorXd> dg;
  std::deque<Eigen::VectorXd> df;
  Eigen::VectorXd g_prev;
  Eigen::VectorXd f_prev;
  LatentTensor best = u;
  double best_residual = std::numeric_limits<double>::infinity();
  int best_at = 0;
  int it = 0;
  for (; it <= opts.max_iters; ++it) {
    const LatentTensor g = ddim_map(x, cfg_predict(model, u, t, cond, w), from, to);
    const Eigen::Map<const Eigen::VectorXd> gv(g.data().data(), n);
    const Eigen::Map<const Eigen::VectorXd> uv(u.data().data(), n);
    const Eigen::VectorXd f = gv - uv;
    const double residual = gain * f.norm();
    if (residual <= opts.tol) return {std::move(u), it, residual};
    if (residual < 0.5 * best_residual) best_at = it;
    if (residual < best_residual) {
      best_residual = residual;
      best = u;
    }
    if (!std::isfinite(residual) || it == opts.max_iters || it - best_at >= 5) break;

    Eigen::VectorXd next = gv;
    if (opts.anderson_depth > 0) {
      if (g_prev.size() == n) {
        dg.push_back(gv - g_prev);
        df.push_back(f - f_prev);
        if (static_cast<int>(dg.size()) > opts.anderson_depth) {
          dg.pop_front();
          df.pop_front();
        }
      }
      g_prev = gv;
      f_prev = f;
      if (!dg.empty()) {
        const auto m = static_cast<Eigen::Index>(df.size());
        Eigen::MatrixXd fm(n, m);
        Eigen::MatrixXd gm(n, m);
        for (Eigen::Index j = 0; j < m; ++j) {
          fm.col(j) = df[static_cast<std::size_t>(j)];
          gm.col(j) = dg[static_cast<std::size_t>(j)];
        }
        const Eigen::VectorXd gamma = fm.completeOrthogonalDecomposition().solve(f);
        if (gamma.allFinite()) next -= gm * gamma;
      }
    }
    u = LatentTensor(u.shape(), std::vector<double>(next.data(), next.data() + n));
  }

  auto step_residual = [&](const LatentTensor& v) {
    LatentTensor r = ddim_map(v, cfg_predict(model, v, t, cond, w), to, from);
    r -= x;
    return r;
  };
  double residual = best_residual;
  int used = it;
  if (detail::damped_newton(best, step_residual, opts.tol, opts.max_iters - it, used, residual)) {
    return {std::move(best), used, residual};
  }

  // A fold in the step map can leave only a distant preimage.  Restart Newton
  // from seeded perturbations of the items that stalled and keep, per item,
  // whichever iterate has the smaller residual.
  const std::size_t items = x.shape().batch;
  const std::size_t block = x.size() / items;
  auto block_norms = [&](const LatentTensor& r) {
    std::vector<double> out(items);
    for (std::size_t b = 0; b < items; ++b) {
      double acc = 0.0;
      for (std::size_t i = 0; i < block; ++i) acc += r[b * block + i] * r[b * block + i];
      out[b] = std::sqrt(acc);
    }
    return out;
  };
  std::vector<double> best_norms = block_norms(step_residual(best));
  const double item_tol = opts.tol / std::sqrt(static_cast<double>(items));
  NoiseStream jitter({0x1f0d5eedULL, static_cast<std::uint64_t>(t)});
  for (int k = 0; k < opts.restarts; ++k) {
    const double scale = 0.5 * static_cast<double>(1 << (k % 3));
    LatentTensor trial = best;
    for (std::size_t b = 0; b < items; ++b) {
      if (best_norms[b] <= item_tol) continue;
      for (std::size_t i = 0; i < block; ++i) trial[b * block + i] += scale * jitter.normal();
    }
    int trial_iters = 0;
    double trial_residual = 0.0;
    detail::damped_newton(trial, step_residual, item_tol, opts.max_iters, trial_iters, trial_residual);
    const std::vector<double> trial_norms = block_norms(step_residual(trial));
    for (std::size_t b = 0; b < items; ++b) {
      if (std::isfinite(trial_norms[b]) && trial_norms[b] < best_norms[b]) {
        std::copy(&trial[b * block], &trial[b * block] + block, &best[b * block]);
        best_norms[b] = trial_norms[b];
      }
    }
    residual = step_residual(best).norm();
    if (residual <= opts.tol) return {std::move(best), used, residual};
  }
  throw ConvergenceError(residual, opts.max_iters);
}

inline LatentTensor ddim_inversion_step(const LatentTensor& x, int s, int t, const ScoreModel& model,
                                        const Condition& cond, const NoiseSchedule& sched, double w = 0.0,
                                        InversionMode mode = InversionMode::kOneShot, FixedPointOptions opts = {}) {
  return ddim_inversion(x, s, t, model, cond, sched, w, mode, opts).latent;
}

}  // namespace ivmix
