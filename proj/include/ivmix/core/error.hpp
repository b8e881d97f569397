// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace ivmix {

inline std::string format_residual(double r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", r);
  return buf;
}

/// Invalid parameters or malformed configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Tensor extents that do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values, failed solves, negative variances.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a sampling loop produces a non-finite latent.
class NonFiniteStepError : public NumericalError {
 public:
  NonFiniteStepError(int step_index, const std::string& what)
      : NumericalError(what + " (step " + std::to_string(step_index) + ")"), step_index_(step_index) {}

  int step_index() const noexcept { return step_index_; }

 private:
  int step_index_;
};

/// Fixed-point inversion that ran out of iterations.
class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(double residual, int iterations)
      : NumericalError("fixed-point inversion did not converge: residual " + format_residual(residual) +
                       " after " + std::to_string(iterations) + " iterations"),
        residual_(residual),
        iterations_(iterations) {}

  double residual() const noexcept { return residual_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

}  // namespace ivmix
