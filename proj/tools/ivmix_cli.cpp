// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ivmix/cli/checks.hpp"
#include "ivmix/cli/experiment.hpp"
#include "ivmix/cli/runner.hpp"

namespace {

std::vector<std::string> split_values(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_sample(const std::string& config_path, std::optional<std::uint64_t> seed, const std::string& out) {
  ivmix::ExperimentConfig c = ivmix::load_experiment(config_path);
  if (!out.empty()) c.output_dir = out;
  const std::uint64_t s = seed.value_or(c.seed);
  for (int r = 0; r < c.repetitions; ++r) {
    const auto run = ivmix::execute_run(c, s + static_cast<std::uint64_t>(r));
    std::cout << run.dir.string() << (run.resumed ? " (resumed)" : "") << "  nll=" << run.quality.mean_nll
              << "  coherence=" << run.quality.coherence << '\n';
  }
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& axis, const std::string& values) {
  const ivmix::ExperimentConfig c = ivmix::load_experiment(config_path);
  std::string ax = axis;
  std::vector<std::string> vals = split_values(values);
  if (ax.empty() && c.sweep) {
    ax = c.sweep->axis;
    vals = c.sweep->values;
  }
  if (ax.empty()) throw ivmix::ConfigError("ablate needs --axis or a sweep block in the config");
  if (vals.empty()) throw ivmix::ConfigError("ablate needs at least one value for axis '" + ax + "'");
  const auto rows = ivmix::run_ablation(c, ax, vals, ivmix::worker_count());
  ivmix::write_csv(std::cout, ivmix::ablation_columns(), rows);
  std::filesystem::create_directories(c.output_dir);
  std::ofstream f(std::filesystem::path(c.output_dir) / ("ablate_" + ax + ".csv"));
  ivmix::write_csv(f, ivmix::ablation_columns(), rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IV-mixed sampler toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  auto* sample = app.add_subcommand("sample", "run one experiment config");
  sample->add_option("--config", config_path, "experiment JSON")->required()->check(CLI::ExistingFile);
  sample->add_option("--seed", seed, "override the config seed");
  sample->add_option("--out", out_dir, "override output_dir");

  std::string suite = "all";
  auto* verify = app.add_subcommand("verify", "run property checks; exit code 0 iff all pass");
  verify->add_option("--suite", suite, "suite name")->check(CLI::IsMember(ivmix::verify_suite_names()));

  double begin = 1.0;
  double end = 7.0;
  double rho = 7.0;
  int steps = 50;
  auto* schedule = app.add_subcommand("schedule", "print a guidance curve as CSV");
  schedule->add_option("--begin", begin, "scale at the first step");
  schedule->add_option("--end", end, "scale at the last step");
  schedule->add_option("--rho", rho, "curvature (1 is linear)");
  schedule->add_option("--steps", steps, "number of sampling steps")->check(CLI::PositiveNumber);

  std::string axis;
  std::string values;
  auto* ablate = app.add_subcommand("ablate", "sweep one axis; CSV to stdout and output_dir");
  ablate->add_option("--config", config_path, "experiment JSON")->required()->check(CLI::ExistingFile);
  ablate->add_option("--axis", axis, "axis name")->check(CLI::IsMember(ivmix::sweep_axes()));
  ablate->add_option("--values", values, "comma-separated values");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sample) return cmd_sample(config_path, seed, out_dir);
    if (*verify) return ivmix::run_verify_suite(suite, std::cout) ? 0 : 1;
    if (*schedule) {
      const ivmix::GuidanceSchedule g{begin, end, rho};
      g.validate();
      ivmix::write_schedule_csv(std::cout, g, steps);
      return 0;
    }
    if (*ablate) return cmd_ablate(config_path, axis, values);
  } catch (const ivmix::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
