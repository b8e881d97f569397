// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "ivmix/analysis/quality.hpp"
#include "ivmix/cli/experiment.hpp"
#include "ivmix/core/tensor_io.hpp"
#include "ivmix/sampler/mixed_sampler.hpp"
#include "json.hpp"

namespace ivmix {

/// x_T for a run: standard normal from stream (seed, 0).  RANDOM layers draw
/// from stream (seed, 1).
inline LatentTensor initial_latent(const ExperimentConfig& c, std::uint64_t seed) {
  NoiseStream g({seed, 0});
  return g.normal_tensor(c.model.shape());
}

struct RunOutcome {
  LatentTensor latent;
  TrajectoryRecord trajectory;
  QualityReport quality;
  std::filesystem::path dir;
  double wall_ms = 0.0;
  bool resumed = false;
};

/// Samples one batch in memory.
inline RunOutcome sample_in_memory(const ExperimentConfig& c, const DeskSetup& setup, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  SampleResult r = iv_mixed_sample(initial_latent(c, seed), c.sampler, setup.models(), setup.sched, {seed, 1});
  RunOutcome out;
  out.quality = evaluate_samples(r.latent, setup.image_ref, setup.video_ref, c.sampler.condition);
  out.latent = std::move(r.latent);
  out.trajectory = std::move(r.trajectory);
  out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

inline QualityReport quality_from_json(const nlohmann::json& j) {
  QualityReport q;
  q.mean_nll = j.at("mean_nll").get<double>();
  q.nll_stderr = j.at("nll_stderr").get<double>();
  q.coherence = j.at("coherence").get<double>();
  q.coherence_stderr = j.at("coherence_stderr").get<double>();
  q.target_rho = j.at("target_rho").get<double>();
  q.samples = j.at("samples").get<std::size_t>();
  return q;
}

/// Runs (or resumes) one seed of a config under <output_dir>/<hash>-s<seed>/:
///   config.json       the run's config with this seed
///   latents.bin       terminal latents (raw tensor format)
///   trajectory.jsonl  one record per inference step
///   quality.json      QualityReport; written last and used as the completion marker
inline RunOutcome execute_run(const ExperimentConfig& c, std::uint64_t seed) {
  ExperimentConfig run = c;
  run.seed = seed;
  run.sweep.reset();
  const std::filesystem::path dir = std::filesystem::path(c.output_dir) / run_dir_name(run, seed);
  const std::filesystem::path marker = dir / "quality.json";
  if (std::filesystem::exists(marker) && std::filesystem::exists(dir / "latents.bin")) {
    RunOutcome out;
    std::ifstream in(marker);
    out.quality = quality_from_json(nlohmann::json::parse(in));
    out.latent = read_tensor(dir / "latents.bin");
    out.dir = dir;
    out.resumed = true;
    return out;
  }
  std::filesystem::create_directories(dir);
  const DeskSetup setup(run, dir / "backend");
  RunOutcome out = sample_in_memory(run, setup, seed);
  out.dir = dir;
  {
    std::ofstream cfg(dir / "config.json", std::ios::trunc);
    cfg << to_json(run).dump(2) << '\n';
  }
  write_tensor(dir / "latents.bin", out.latent);
  {
    std::ofstream traj(dir / "trajectory.jsonl", std::ios::trunc);
    write_jsonl(traj, out.trajectory);
  }
  const std::filesystem::path tmp = dir / "quality.json.tmp";
  {
    std::ofstream q(tmp, std::ios::trunc);
    q << to_json(out.quality).dump(2) << '\n';
  }
  std::filesystem::rename(tmp, marker);
  return out;
}

// CSV ---------------------------------------------------------------------------

inline std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline void write_csv(std::ostream& os, const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << csv_field(cells[i]);
    os << '\n';
  };
  line(header);
  for (const auto& r : rows) {
    if (r.size() != header.size()) throw ConfigError("CSV row width does not match the header");
    line(r);
  }
}

/// karras_cfg sequence as step,position,scale rows.
inline void write_schedule_csv(std::ostream& os, const GuidanceSchedule& g, int steps) {
  const std::vector<double> scales = karras_cfg(g, steps);
  std::vector<std::vector<std::string>> rows;
  for (int i = 0; i < steps; ++i) {
    rows.push_back({std::to_string(i), csv_number(step_position(i, steps)), csv_number(scales[static_cast<std::size_t>(i)])});
  }
  write_csv(os, {"step", "position", "scale"}, rows);
}

// ablate ------------------------------------------------------------------------

inline const std::vector<std::string>& ablation_columns() {
  static const std::vector<std::string> cols = {
      "index",          "axis",       "value",           "repetition", "seed",     "preset",
      "interval_begin", "interval_end", "fallback_z",    "inference_steps", "vanilla_cfg", "mean_nll",
      "nll_stderr",     "coherence",  "coherence_stderr", "target_rho", "samples",  "wall_ms",
      "run_dir"};
  return cols;
}

/// Worker count from IVMIX_WORKERS, else the hardware concurrency.
inline unsigned worker_count() {
  if (const char* env = std::getenv("IVMIX_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) throw ConfigError("IVMIX_WORKERS must be a positive integer");
    return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs every (value, repetition) pair on a bounded pool.  Rows come back in
/// value order, then repetition order, whatever order the workers finish in.
/// Repetition r uses seed config.seed + r.
inline std::vector<std::vector<std::string>> run_ablation(const ExperimentConfig& base, const std::string& axis,
                                                          const std::vector<std::string>& values, unsigned workers) {
  struct Job {
    std::size_t value_index;
    int repetition;
    ExperimentConfig config;
  };
  std::vector<Job> jobs;
  for (std::size_t v = 0; v < values.size(); ++v) {
    const ExperimentConfig c = apply_axis(base, axis, values[v]);
    for (int r = 0; r < c.repetitions; ++r) jobs.push_back({v, r, c});
  }
  std::vector<std::vector<std::string>> rows(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        const Job& job = jobs[i];
        const ExperimentConfig& c = job.config;
        const std::uint64_t seed = c.seed + static_cast<std::uint64_t>(job.repetition);
        const RunOutcome out = execute_run(c, seed);
        const auto& s = c.sampler;
        rows[i] = {std::to_string(i),
                   axis,
                   values[job.value_index],
                   std::to_string(job.repetition),
                   std::to_string(seed),
                   s.preset_name,
                   csv_number(s.interval.begin_pct),
                   csv_number(s.interval.end_pct),
                   s.fallback ? csv_number(s.fallback->z_pct) : "",
                   std::to_string(s.inference_steps),
                   csv_number(s.vanilla_cfg),
                   csv_number(out.quality.mean_nll),
                   csv_number(out.quality.nll_stderr),
                   csv_number(out.quality.coherence),
                   csv_number(out.quality.coherence_stderr),
                   csv_number(out.quality.target_rho),
                   std::to_string(out.quality.samples),
                   csv_number(out.wall_ms),
                   out.dir.string()};
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = jobs.size();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(jobs.size())));
  std::vector<std::thread> pool;
  for (unsigned k = 0; k < n; ++k) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return rows;
}

}  // namespace ivmix
