// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>

#include "ivmix/core/tensor_io.hpp"
#include "ivmix/scoremodels/score_model.hpp"

namespace ivmix {

/// Bridges an external noise predictor through files.
///
/// Each call n writes `<dir>/request_<n>.bin` (raw tensor format) and
/// `<dir>/request_<n>.meta` (one line: `timestep <i> condition <text|null> class <k> model <name>`),
/// runs `<command> <request.bin> <request.meta> <response.bin>`, and reads the
/// response tensor, which must have the request's shape.
class FileBackendModel final : public ScoreModel {
 public:
  FileBackendModel(std::filesystem::path dir, std::string command, std::string name = "external")
      : dir_(std::move(dir)), command_(std::move(command)), name_(std::move(name)) {
    std::filesystem::create_directories(dir_);
  }

  std::string name() const override { return name_; }

  LatentTensor predict_noise(const LatentTensor& x, int timestep, const Condition& cond) const override {
    if (!x.all_finite()) throw NumericalError("non-finite input to " + name_);
    const std::uint64_t n = sequence_.fetch_add(1);
    const auto stem = dir_ / ("request_" + std::to_string(n));
    const auto request = stem.string() + ".bin";
    const auto meta = stem.string() + ".meta";
    const auto response = (dir_ / ("response_" + std::to_string(n) + ".bin")).string();

    write_tensor(request, x);
    {
      std::ofstream m(meta, std::ios::trunc);
      m << "timestep " << timestep << " condition " << (cond.is_null() ? "null" : "text") << " class "
        << cond.class_id << " model " << name_ << "\n";
    }
    const std::string cmd = command_ + " '" + request + "' '" + meta + "' '" + response + "'";
    if (const int rc = std::system(cmd.c_str()); rc != 0) {
      throw NumericalError("external backend exited with status " + std::to_string(rc));
    }
    LatentTensor out = read_tensor(response);
    if (out.shape() != x.shape()) {
      throw ShapeError("backend response shape " + out.shape().str() + " differs from request " + x.shape().str());
    }
    return out;
  }

 private:
  std::filesystem::path dir_;
  std::string command_;
  std::string name_;
  mutable std::atomic<std::uint64_t> sequence_{0};
};

}  // namespace ivmix
