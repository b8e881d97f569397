// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ivmix/core/latent.hpp"
#include "ivmix/scoremodels/gaussian_mixture.hpp"
#include "ivmix/scoremodels/score_model.hpp"

namespace ivmix {

/// Video-model stand-in.  Each video picks one mixture component (shared by
/// all of its frames); frame deviations from that component's mean follow a
/// stationary AR(1) chain with lag-1 correlation rho_time and marginal
/// variance kappa * s_k^2.
struct TemporalModelSpec {
  GaussianMixtureSpec frame_mixture;
  double rho_time = 0.0;
  double kappa = 1.0;

  void validate() const {
    frame_mixture.validate();
    if (!(rho_time >= 0.0 && rho_time < 1.0)) throw ConfigError("rho_time must lie in [0, 1)");
    if (!(kappa >= 1.0) || !std::isfinite(kappa)) throw ConfigError("kappa must be >= 1");
  }

  friend bool operator==(const TemporalModelSpec&, const TemporalModelSpec&) = default;
};

/// Eigendecomposition of the t x t AR(1) correlation matrix R_ij = rho^|i-j|.
struct Ar1Basis {
  Eigen::MatrixXd vectors;  // columns are eigenvectors
  Eigen::VectorXd values;
  Eigen::VectorXd projected_ones;  // Q^T 1

  static Ar1Basis make(std::size_t frames, double rho) {
    const auto n = static_cast<Eigen::Index>(frames);
    Eigen::MatrixXd r(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) r(i, j) = std::pow(rho, static_cast<double>(std::abs(i - j)));
    }
    Ar1Basis b;
    if (rho == 0.0) {
      b.vectors = Eigen::MatrixXd::Identity(n, n);
      b.values = Eigen::VectorXd::Ones(n);
    } else {
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(r);
      b.vectors = solver.eigenvectors();
      b.values = solver.eigenvalues();
    }
    b.projected_ones = b.vectors.transpose() * Eigen::VectorXd::Ones(n);
    return b;
  }
};

class TemporalModel final : public AnalyticScoreModel {
 public:
  /// `frames`, when given, precomputes the AR(1) basis for that video length.
  TemporalModel(TemporalModelSpec spec, NoiseSchedule schedule, std::string name = "VDM",
                std::optional<std::size_t> frames = std::nullopt)
      : AnalyticScoreModel(std::move(schedule)), spec_(std::move(spec)), name_(std::move(name)) {
    spec_.validate();
    if (frames) basis_ = Ar1Basis::make(*frames, spec_.rho_time);
  }

  const TemporalModelSpec& spec() const noexcept { return spec_; }
  std::string name() const override { return name_; }

  LatentTensor predict_noise_at(const LatentTensor& x, NoiseLevel level, const Condition& cond) const override {
    LatentTensor eps(x.shape());
    evaluate(x, level, cond, &eps);
    return eps;
  }

  double log_density_at(const LatentTensor& x, NoiseLevel level, const Condition& cond) const override {
    return evaluate(x, level, cond, nullptr);
  }

  /// Posterior weights of the active components, one vector per batch item.
  std::vector<std::vector<double>> responsibilities(const LatentTensor& x, NoiseLevel level,
                                                    const Condition& cond) const {
    std::vector<std::vector<double>> out;
    evaluate(x, level, cond, nullptr, &out);
    return out;
  }

 private:
  double evaluate(const LatentTensor& x, NoiseLevel level, const Condition& cond, LatentTensor* eps,
                  std::vector<std::vector<double>>* resp = nullptr) const {
    const auto& mix = spec_.frame_mixture;
    const Shape5& s = x.shape();
    if (s.frame_size() != mix.dim) {
      throw ShapeError("frame size of " + s.str() + " does not match mixture dimension " + std::to_string(mix.dim));
    }
    std::optional<Ar1Basis> local;
    if (!basis_ || static_cast<std::size_t>(basis_->values.size()) != s.frames) {
      local = Ar1Basis::make(s.frames, spec_.rho_time);
    }
    const Ar1Basis& basis = local ? *local : *basis_;

    const std::vector<std::size_t> act = mix.active(cond);
    double wsum = 0.0;
    for (std::size_t k : act) wsum += mix.components[k].weight;

    const auto t = static_cast<Eigen::Index>(s.frames);
    const auto d = static_cast<Eigen::Index>(mix.dim);
    const double a2 = level.alpha * level.alpha;
    const double s2 = level.sigma * level.sigma;

    // Per-component eigen-variances and log-normalizers do not depend on x.
    std::vector<Eigen::VectorXd> inv_var(act.size());
    std::vector<double> log_norm(act.size());
    for (std::size_t j = 0; j < act.size(); ++j) {
      const auto& c = mix.components[act[j]];
      inv_var[j].resize(t);
      double logdet = 0.0;
      for (Eigen::Index m = 0; m < t; ++m) {
        const double v = std::max(a2 * spec_.kappa * c.variance * basis.values(m) + s2, kVarianceFloor);
        inv_var[j](m) = 1.0 / v;
        logdet += std::log(2.0 * std::numbers::pi * v);
      }
      log_norm[j] = std::log(c.weight / wsum) - 0.5 * static_cast<double>(d) * logdet;
    }

    double total = 0.0;
    Eigen::MatrixXd frames(t, d);
    std::vector<Eigen::MatrixXd> residual(act.size());
    std::vector<double> logw(act.size());
    for (std::size_t b = 0; b < s.batch; ++b) {
      for (Eigen::Index j = 0; j < t; ++j) {
        const std::vector<double> f = x.frame(b, static_cast<std::size_t>(j));
        frames.row(j) = Eigen::Map<const Eigen::RowVectorXd>(f.data(), d);
      }
      const Eigen::MatrixXd z = basis.vectors.transpose() * frames;
      for (std::size_t j = 0; j < act.size(); ++j) {
        const auto& c = mix.components[act[j]];
        const Eigen::Map<const Eigen::RowVectorXd> mu(c.mean.data(), d);
        residual[j] = z - level.alpha * basis.projected_ones * mu;
        const double quad = (inv_var[j].asDiagonal() * residual[j].cwiseAbs2()).sum();
        logw[j] = log_norm[j] - 0.5 * quad;
      }
      total += normalize_log_weights(logw);
      if (resp != nullptr) resp->push_back(logw);
      if (eps != nullptr) {
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(t, d);
        for (std::size_t j = 0; j < act.size(); ++j) acc += logw[j] * (inv_var[j].asDiagonal() * residual[j]);
        const Eigen::MatrixXd e = level.sigma * (basis.vectors * acc);
        for (Eigen::Index j = 0; j < t; ++j) {
          const Eigen::RowVectorXd row = e.row(j);
          eps->set_frame(b, static_cast<std::size_t>(j), std::span<const double>(row.data(), row.size()));
        }
      }
    }
    return total;
  }

  TemporalModelSpec spec_;
  std::string name_;
  std::optional<Ar1Basis> basis_;
};

}  // namespace ivmix
