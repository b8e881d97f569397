// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include "ivmix/core/rng.hpp"
#include "ivmix/core/tensor_io.hpp"
#include "ivmix/scoremodels/file_backend.hpp"
#include "ivmix/scoremodels/framewise.hpp"
#include "ivmix/scoremodels/temporal.hpp"

namespace {

using namespace ivmix;

const NoiseSchedule& sched() {
  static const NoiseSchedule s = NoiseSchedule::make_default();
  return s;
}

std::vector<double> random_vec(std::size_t n, NoiseStream& rng, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

GaussianMixtureSpec two_class_mixture(std::size_t dim, std::uint64_t seed) {
  NoiseStream rng({seed, 0});
  GaussianMixtureSpec m;
  m.dim = dim;
  m.components = {{0.3, random_vec(dim, rng), 0.25, 0},
                  {0.2, random_vec(dim, rng), 0.5, 0},
                  {0.3, random_vec(dim, rng), 0.16, 1},
                  {0.2, random_vec(dim, rng, 0.2), 2.0, -1}};
  return m;
}

// Independent joint-Gaussian oracle for one component of the temporal model:
// covariance over the (frames x dim) vector is alpha^2 kappa s^2 (R kron I) + sigma^2 I.
Eigen::MatrixXd joint_covariance(std::size_t frames, std::size_t dim, double rho, double kappa, double var,
                                 NoiseLevel lv) {
  const auto n = static_cast<Eigen::Index>(frames * dim);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t a = 0; a < frames; ++a)
    for (std::size_t b = 0; b < frames; ++b)
      for (std::size_t i = 0; i < dim; ++i) {
        const double r = std::pow(rho, std::abs(static_cast<double>(a) - static_cast<double>(b)));
        c(static_cast<Eigen::Index>(a * dim + i), static_cast<Eigen::Index>(b * dim + i)) =
            lv.alpha * lv.alpha * kappa * var * r;
      }
  c.diagonal().array() += lv.sigma * lv.sigma;
  return c;
}

// log p and eps for the temporal mixture via dense Cholesky solves, frame-major vector layout.
struct DenseOracle {
  double logp = 0.0;
  Eigen::VectorXd eps;
};

DenseOracle dense_temporal(const TemporalModelSpec& spec, const Eigen::VectorXd& x, std::size_t frames, NoiseLevel lv,
                           const Condition& cond) {
  const auto& mix = spec.frame_mixture;
  const auto act = mix.active(cond);
  double wsum = 0.0;
  for (auto k : act) wsum += mix.components[k].weight;
  const auto n = x.size();
  std::vector<double> logw;
  std::vector<Eigen::VectorXd> grads;
  for (auto k : act) {
    const auto& c = mix.components[k];
    const Eigen::MatrixXd cov = joint_covariance(frames, mix.dim, spec.rho_time, spec.kappa, c.variance, lv);
    Eigen::VectorXd mu(n);
    for (std::size_t f = 0; f < frames; ++f)
      for (std::size_t i = 0; i < mix.dim; ++i) mu(static_cast<Eigen::Index>(f * mix.dim + i)) = lv.alpha * c.mean[i];
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    const Eigen::VectorXd r = x - mu;
    const Eigen::VectorXd sol = llt.solve(r);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    logw.push_back(std::log(c.weight / wsum) - 0.5 * (static_cast<double>(n) * std::log(2.0 * std::numbers::pi) + logdet) -
                   0.5 * r.dot(sol));
    grads.push_back(-sol);
  }
  double mx = logw[0];
  for (double v : logw) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : logw) s += std::exp(v - mx);
  DenseOracle out;
  out.logp = mx + std::log(s);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  for (std::size_t j = 0; j < logw.size(); ++j) g += std::exp(logw[j] - out.logp) * grads[j];
  out.eps = -lv.sigma * g;
  return out;
}

Eigen::VectorXd frame_major(const LatentTensor& x, std::size_t b = 0) {
  const auto& s = x.shape();
  Eigen::VectorXd v(static_cast<Eigen::Index>(s.frames * s.frame_size()));
  for (std::size_t t = 0; t < s.frames; ++t) {
    const auto f = x.frame(b, t);
    for (std::size_t i = 0; i < f.size(); ++i) v(static_cast<Eigen::Index>(t * f.size() + i)) = f[i];
  }
  return v;
}

TEST(Mixture, ValidationRejectsBadSpecs) {
  GaussianMixtureSpec m = two_class_mixture(3, 1);
  m.components[0].weight = 0.5;
  EXPECT_THROW(m.validate(), ConfigError);
  m = two_class_mixture(3, 1);
  m.components[1].variance = 0.0;
  EXPECT_THROW(m.validate(), ConfigError);
  m = two_class_mixture(3, 1);
  m.components[2].mean.pop_back();
  EXPECT_THROW(m.validate(), ConfigError);
  m = two_class_mixture(3, 1);
  EXPECT_THROW(m.active(Condition::text(7)), ConfigError);
}

TEST(Framewise, ZeroNoiseAtNoisedMean) {
  GaussianMixtureSpec m{3, {{1.0, {0.5, -1.0, 2.0}, 0.3, 0}}};
  const FramewiseModel model(m, sched());
  const int t = 420;
  const double a = sched().alpha(t);
  const LatentTensor x(Shape5{1, 3, 1, 1, 1}, {a * 0.5, -a * 1.0, a * 2.0});
  const LatentTensor eps = model.predict_noise(x, t, Condition::text(0));
  for (double v : eps.data()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Framewise, SingleGaussianClosedForm) {
  NoiseStream rng({5, 0});
  const std::vector<double> mu = random_vec(4, rng);
  const double s2 = 0.7;
  const FramewiseModel model(GaussianMixtureSpec{4, {{1.0, mu, s2, 0}}}, sched());
  for (int t : {0, 17, 500, 999}) {
    const LatentTensor x = rng.normal_tensor({1, 4, 1, 1, 1});
    const LatentTensor eps = model.predict_noise(x, t, Condition::text(0));
    const double a = sched().alpha(t);
    const double g = sched().sigma(t);
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_NEAR(eps[i], g * (x[i] - a * mu[i]) / (a * a * s2 + g * g), 1e-13) << t;
    }
  }
}

TEST(Framewise, SymmetricPairMatchesGaussianAboutMidpoint) {
  // Two equal components at m +- e1; at a point on the bisecting plane the e1
  // component of eps matches a single Gaussian centred at m.
  const std::vector<double> m{0.3, -0.2};
  GaussianMixtureSpec spec{2, {{0.5, {m[0] + 1.0, m[1]}, 0.4, 0}, {0.5, {m[0] - 1.0, m[1]}, 0.4, 0}}};
  const FramewiseModel model(spec, sched());
  const int t = 300;
  const double a = sched().alpha(t);
  const double g = sched().sigma(t);
  const LatentTensor x(Shape5{1, 2, 1, 1, 1}, {a * m[0], 1.7});
  const LatentTensor eps = model.predict_noise(x, t, Condition::text(0));
  const double v = a * a * 0.4 + g * g;
  EXPECT_NEAR(eps[0], g * (x[0] - a * m[0]) / v, 1e-14);
  EXPECT_NEAR(eps[1], g * (x[1] - a * m[1]) / v, 1e-14);
}

TEST(Framewise, ScoreMatchesFiniteDifferenceOfLogDensity) {
  const auto spec = two_class_mixture(5, 3);
  const FramewiseModel model(spec, sched());
  NoiseStream rng({8, 0});
  for (int t : {3, 250, 700}) {
    for (const Condition& c : {Condition::text(0), Condition::text(1), Condition::null()}) {
      const NoiseLevel lv = sched().level(t);
      LatentTensor x = rng.normal_tensor({1, 5, 1, 1, 1});
      const LatentTensor score = model.score_at(x, lv, c);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double h = 1e-5;
        LatentTensor xp = x;
        LatentTensor xm = x;
        xp[i] += h;
        xm[i] -= h;
        const double fd = (model.log_density_at(xp, lv, c) - model.log_density_at(xm, lv, c)) / (2 * h);
        EXPECT_NEAR(fd, score[i], 1e-5 * std::max(1.0, std::abs(score[i]))) << t << " " << i;
      }
    }
  }
}

TEST(Framewise, ResponsibilitiesSumToOne) {
  const auto spec = two_class_mixture(6, 4);
  NoiseStream rng({9, 0});
  for (int k = 0; k < 50; ++k) {
    const auto x = random_vec(6, rng, 3.0);
    const auto p = evaluate_mixture(spec, x, sched().level(k * 19), Condition::null());
    double s = 0.0;
    for (double r : p.responsibilities) s += r;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Framewise, FarPointsStayFinite) {
  const auto spec = two_class_mixture(4, 2);
  const FramewiseModel model(spec, sched());
  const LatentTensor x(Shape5{1, 4, 1, 1, 1}, 1e4);
  EXPECT_TRUE(model.predict_noise(x, 0, Condition::null()).all_finite());
}

TEST(Framewise, VideoMatchesFrameLoop) {
  const auto spec = two_class_mixture(8, 6);
  const FramewiseModel model(spec, sched());
  NoiseStream rng({10, 0});
  const LatentTensor x = rng.normal_tensor({2, 2, 16, 2, 2});
  const LatentTensor eps = model.predict_noise(x, 333, Condition::text(1));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t t = 0; t < 16; ++t) {
      LatentTensor one(Shape5{1, 2, 1, 2, 2}, x.frame(b, t));
      const LatentTensor e1 = model.predict_noise(one, 333, Condition::text(1));
      const auto got = eps.frame(b, t);
      for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i], e1[i]);
    }
}

TEST(Framewise, OneFrameVideoEqualsImageCall) {
  const auto spec = two_class_mixture(4, 6);
  const FramewiseModel model(spec, sched());
  NoiseStream rng({12, 0});
  const LatentTensor x = rng.normal_tensor({1, 4, 1, 1, 1});
  const LatentTensor a = model.predict_noise(x, 100, Condition::text(0));
  const LatentTensor b = model.predict_noise(flatten_frames(x), 100, Condition::text(0));
  EXPECT_EQ(distance(a, b), 0.0);
}

TEST(Framewise, FramePermutationEquivariance) {
  const auto spec = two_class_mixture(4, 7);
  const FramewiseModel model(spec, sched());
  NoiseStream rng({13, 0});
  const LatentTensor x = rng.normal_tensor({1, 1, 5, 2, 2});
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  LatentTensor y(x.shape());
  for (std::size_t t = 0; t < 5; ++t) y.set_frame(0, t, x.frame(0, perm[t]));
  const LatentTensor ex = model.predict_noise(x, 640, Condition::text(0));
  const LatentTensor ey = model.predict_noise(y, 640, Condition::text(0));
  for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(ey.frame(0, t), ex.frame(0, perm[t]));
}

TEST(Framewise, RejectsOffGridAndNonFinite) {
  const FramewiseModel model(two_class_mixture(2, 1), sched());
  LatentTensor x(Shape5{1, 2, 1, 1, 1});
  EXPECT_THROW(model.predict_noise(x, 1000, Condition::null()), ConfigError);
  x[0] = std::nan("");
  EXPECT_THROW(model.predict_noise(x, 10, Condition::null()), NumericalError);
  EXPECT_THROW(model.predict_noise(LatentTensor(Shape5{1, 3, 1, 1, 1}), 10, Condition::null()), ShapeError);
}

TEST(Temporal, MatchesDenseJointGaussianOracle) {
  TemporalModelSpec spec{two_class_mixture(3, 21), 0.8, 1.5};
  const TemporalModel model(spec, sched());
  NoiseStream rng({22, 0});
  for (int t : {5, 200, 800}) {
    for (const Condition& c : {Condition::text(0), Condition::null()}) {
      const NoiseLevel lv = sched().level(t);
      const LatentTensor x = rng.normal_tensor({2, 3, 6, 1, 1});
      const LatentTensor eps = model.predict_noise_at(x, lv, c);
      double logp = 0.0;
      for (std::size_t b = 0; b < 2; ++b) {
        const DenseOracle o = dense_temporal(spec, frame_major(x, b), 6, lv, c);
        logp += o.logp;
        const Eigen::VectorXd got = frame_major(eps, b);
        EXPECT_LT((got - o.eps).norm(), 1e-10 * std::max(1.0, o.eps.norm())) << t;
      }
      EXPECT_NEAR(model.log_density_at(x, lv, c), logp, 1e-9 * std::abs(logp));
    }
  }
}

TEST(Temporal, ScoreMatchesFiniteDifferenceOfLogDensity) {
  TemporalModelSpec spec{two_class_mixture(2, 31), 0.9, 1.5};
  const TemporalModel model(spec, sched(), "VDM", 4);
  NoiseStream rng({32, 0});
  for (int t : {10, 400}) {
    const NoiseLevel lv = sched().level(t);
    const LatentTensor x = rng.normal_tensor({1, 2, 4, 1, 1});
    const LatentTensor score = model.score_at(x, lv, Condition::text(1));
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double h = 1e-5;
      LatentTensor xp = x;
      LatentTensor xm = x;
      xp[i] += h;
      xm[i] -= h;
      const double fd =
          (model.log_density_at(xp, lv, Condition::text(1)) - model.log_density_at(xm, lv, Condition::text(1))) / (2 * h);
      EXPECT_NEAR(fd, score[i], 1e-5 * std::max(1.0, std::abs(score[i])));
    }
  }
}

TEST(Temporal, ReducesToFramewiseWithoutCoupling) {
  const auto mix = two_class_mixture(4, 41);
  const TemporalModel video(TemporalModelSpec{mix, 0.0, 1.0}, sched());
  const FramewiseModel image(mix, sched());
  NoiseStream rng({42, 0});
  // One frame: exact for any mixture.
  const LatentTensor x1 = rng.normal_tensor({3, 4, 1, 1, 1});
  for (int t : {0, 150, 999}) {
    EXPECT_LT(distance(video.predict_noise(x1, t, Condition::null()), image.predict_noise(x1, t, Condition::null())),
              1e-10);
  }
  // Several frames: exact when a single component is active.
  GaussianMixtureSpec single{4, {{1.0, mix.components[0].mean, 0.3, 0}}};
  const TemporalModel v1(TemporalModelSpec{single, 0.0, 1.0}, sched());
  const FramewiseModel i1(single, sched());
  const LatentTensor x = rng.normal_tensor({2, 4, 7, 1, 1});
  EXPECT_LT(distance(v1.predict_noise(x, 321, Condition::text(0)), i1.predict_noise(x, 321, Condition::text(0))), 1e-10);
}

TEST(Temporal, ResponsibilitiesSumToOne) {
  TemporalModelSpec spec{two_class_mixture(4, 51), 0.9, 1.5};
  const TemporalModel model(spec, sched());
  NoiseStream rng({52, 0});
  const LatentTensor x = rng.normal_tensor({5, 1, 8, 2, 2});
  const auto r = model.responsibilities(x, sched().level(50), Condition::null());
  ASSERT_EQ(r.size(), 5u);
  for (const auto& v : r) {
    EXPECT_EQ(v.size(), 4u);
    double s = 0.0;
    for (double p : v) s += p;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Temporal, RejectsInvalidSpec) {
  const auto mix = two_class_mixture(2, 1);
  EXPECT_THROW(TemporalModel(TemporalModelSpec{mix, 1.0, 1.5}, sched()), ConfigError);
  EXPECT_THROW(TemporalModel(TemporalModelSpec{mix, 0.5, 0.9}, sched()), ConfigError);
  EXPECT_THROW(TemporalModel(TemporalModelSpec{mix, -0.1, 1.0}, sched()), ConfigError);
}

TEST(FileBackend, RoundTripsThroughShellCommand) {
  const auto dir = std::filesystem::temp_directory_path() / "ivmix_backend_test";
  std::filesystem::remove_all(dir);
  // The stub echoes the request tensor back as the noise prediction.
  const FileBackendModel model(dir, "sh -c 'cp \"$0\" \"$2\"'", "echo");
  NoiseStream rng({61, 0});
  const LatentTensor x = rng.normal_tensor({1, 2, 3, 1, 2});
  const LatentTensor eps = model.predict_noise(x, 12, Condition::text(3));
  EXPECT_EQ(distance(eps, x), 0.0);
  std::ifstream meta(dir / "request_0.meta");
  std::string line;
  std::getline(meta, line);
  EXPECT_EQ(line, "timestep 12 condition text class 3 model echo");
  std::filesystem::remove_all(dir);
}

TEST(FileBackend, FailingCommandIsReported) {
  const auto dir = std::filesystem::temp_directory_path() / "ivmix_backend_fail";
  const FileBackendModel model(dir, "false", "broken");
  EXPECT_THROW(model.predict_noise(LatentTensor(Shape5{}), 0, Condition::null()), NumericalError);
  std::filesystem::remove_all(dir);
}

}  // namespace
