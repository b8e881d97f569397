// Copyright (C) 2026 ivmix contributors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "ivmix/cli/checks.hpp"
#include "ivmix/cli/experiment.hpp"
#include "ivmix/cli/runner.hpp"

namespace fs = std::filesystem;
using namespace ivmix;

namespace {

struct CommandResult {
  int exit_code = 0;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("ivmix_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& name, const std::string& text) const {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  CommandResult run(const std::string& args) const {
    const fs::path out = dir_ / "stdout.txt";
    const fs::path err = dir_ / "stderr.txt";
    const std::string cmd = "cd '" + dir_.string() + "' && '" + std::string(IVMIX_CLI_PATH) + "' " + args + " >'" +
                            out.string() + "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    CommandResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  fs::path dir_;
};

// A small batch and few steps keep each run well under a second.
constexpr const char* kSmall = R"({
  "model": {"videos": 2},
  "sampler": {"preset": "IV-IV", "go_guidance": 4, "back_guidance": 4, "inference_steps": 10},
  "output_dir": "out"
})";

ExperimentConfig small_config() { return parse_experiment(std::string(kSmall)); }

fs::path only_run_dir(const fs::path& root) {
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) dirs.push_back(e.path());
  }
  EXPECT_EQ(dirs.size(), 1u);
  return dirs.empty() ? fs::path{} : dirs.front();
}

void expect_config_error_naming(const std::string& text, const std::string& field) {
  try {
    parse_experiment(text);
    ADD_FAILURE() << "no error for " << text;
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(field), std::string::npos) << e.what();
  }
}

}  // namespace

// Config parsing -----------------------------------------------------------------

TEST(ExperimentConfig, DefaultsAreTheCalibratedDeskConfig) {
  const ExperimentConfig c = parse_experiment(std::string("{}"));
  EXPECT_EQ(c.model.dim(), 16u);
  EXPECT_EQ(c.model.frames, 8u);
  EXPECT_EQ(c.model.videos, 200u);
  EXPECT_DOUBLE_EQ(c.model.kappa, 1.5);
  EXPECT_EQ(c.sampler.preset_name, "IV-IV");
  EXPECT_EQ(c.sampler.inference_steps, 50);
  EXPECT_DOUBLE_EQ(c.sampler.vanilla_cfg, 6.5);
  EXPECT_EQ(c.seed, 77u);
}

TEST(ExperimentConfig, SerializationIsAFixedPoint) {
  ExperimentConfig c = small_config();
  c.sampler.fallback = Fallback{layers_from_preset("VV-VV"), 30.0, FallbackPlacement::kHead};
  c.sampler.layers[0].go_guidance = GuidanceSchedule{2.0, 6.0, 3.0};
  c.sampler.inversion = InversionMode::kFixedPoint;
  c.sampler.interval = {10.0, 90.0};
  c.sweep = SweepBlock{"vanilla_cfg", {"4", "6.5"}};
  const std::string once = to_json(c).dump();
  const std::string twice = to_json(parse_experiment(once)).dump();
  EXPECT_EQ(once, twice);
  const ExperimentConfig back = parse_experiment(once);
  EXPECT_EQ(back.sampler.layers, c.sampler.layers);
  EXPECT_EQ(back.sampler.fallback->z_pct, 30.0);
  EXPECT_EQ(back.sweep->values, c.sweep->values);
}

TEST(ExperimentConfig, PresetFormMatchesExplicitLayers) {
  const ExperimentConfig a = parse_experiment(std::string(R"({"sampler": {"preset": "IV-II", "go_guidance": 3,
      "back_guidance": {"begin": 2, "end": 5, "rho": 7}}})"));
  EXPECT_EQ(a.sampler.layers,
            layers_from_preset("IV-II", GuidanceSchedule::constant(3.0), GuidanceSchedule{2.0, 5.0, 7.0}));
  const ExperimentConfig b = parse_experiment(to_json(a).dump());
  EXPECT_EQ(b.sampler.layers, a.sampler.layers);
  EXPECT_EQ(b.sampler.preset_name, "IV-II");
}

TEST(ExperimentConfig, UnknownFieldsAreNamed) {
  expect_config_error_naming(R"({"sampler": {"foo": 1}})", "sampler.foo");
  expect_config_error_naming(R"({"modle": {}})", "modle");
  expect_config_error_naming(R"({"sampler": {"inversion": {"mode": "one_shot", "tolerance": 1}}})",
                             "sampler.inversion.tolerance");
}

TEST(ExperimentConfig, TypeAndRangeErrorsNameTheField) {
  expect_config_error_naming(R"({"model": {"videos": "many"}})", "model.videos");
  expect_config_error_naming(R"({"sampler": {"vanilla_cfg": "high"}})", "sampler.vanilla_cfg");
  expect_config_error_naming(R"({"sampler": {"interval": {"begin": 80, "end": 20}}})", "sampler.interval");
  expect_config_error_naming(R"({"sampler": {"inversion": {"mode": "exact"}}})", "sampler.inversion.mode");
  expect_config_error_naming(R"({"schedule": {"kind": "cosine-ish"}})", "schedule.kind");
  EXPECT_THROW(parse_experiment(std::string("{not json")), ConfigError);
}

TEST(ExperimentConfig, ApplyAxisSetsTheNamedField) {
  const ExperimentConfig base = small_config();
  EXPECT_EQ(apply_axis(base, "interval", "20-60").sampler.interval, (Interval{20.0, 60.0}));
  EXPECT_EQ(apply_axis(base, "inference_steps", "25").sampler.inference_steps, 25);
  EXPECT_EQ(apply_axis(base, "seed", "9").seed, 9u);
  EXPECT_DOUBLE_EQ(apply_axis(base, "kappa", "2").model.kappa, 2.0);
  const ExperimentConfig g = apply_axis(base, "guidance", "2:6");
  for (const auto& l : g.sampler.layers) {
    EXPECT_EQ(l.go_guidance, (GuidanceSchedule{2.0, 6.0, 7.0}));
    EXPECT_EQ(l.back_guidance, (GuidanceSchedule{2.0, 6.0, 7.0}));
  }
  const ExperimentConfig f = apply_axis(base, "fallback_z", "30");
  ASSERT_TRUE(f.sampler.fallback.has_value());
  EXPECT_DOUBLE_EQ(f.sampler.fallback->z_pct, 30.0);
  EXPECT_EQ(apply_axis(base, "preset", "VV-VV").sampler.layers, layers_from_preset("VV-VV"));
  EXPECT_THROW(apply_axis(base, "interval", "60"), ConfigError);
  EXPECT_THROW(apply_axis(base, "vanilla_cfg", "x"), ConfigError);
  EXPECT_THROW(apply_axis(base, "colour", "1"), ConfigError);
}

TEST(ExperimentConfig, HashIgnoresSeedAndOutputLocation) {
  ExperimentConfig a = small_config();
  ExperimentConfig b = a;
  b.seed = 5;
  b.output_dir = "elsewhere";
  b.repetitions = 3;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.sampler.vanilla_cfg = 5.0;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(run_dir_name(a, 12), config_hash(a) + "-s12");
}

// Runner --------------------------------------------------------------------------

TEST(Runner, CsvQuotesOnlyWhenNeeded) {
  std::ostringstream os;
  write_csv(os, {"a", "b"}, {{"x,y", "plain"}, {"say \"hi\"", "1"}});
  EXPECT_EQ(os.str(), "a,b\n\"x,y\",plain\n\"say \"\"hi\"\"\",1\n");
  EXPECT_EQ(csv_number(0.1), "0.1");
}

TEST(Runner, QualityJsonRoundTrips) {
  QualityReport q{-2.5, 0.01, 0.9, 0.002, 0.9, 17};
  const QualityReport back = quality_from_json(to_json(q));
  EXPECT_EQ(back.mean_nll, q.mean_nll);
  EXPECT_EQ(back.coherence_stderr, q.coherence_stderr);
  EXPECT_EQ(back.samples, q.samples);
}

TEST(Runner, AblationIsIndependentOfWorkerCount) {
  ExperimentConfig c = small_config();
  c.output_dir = (fs::temp_directory_path() / "ivmix_ablation_workers").string();
  fs::remove_all(c.output_dir);
  const std::vector<std::string> values = {"4", "6.5", "8"};
  const auto serial = run_ablation(c, "vanilla_cfg", values, 1);
  fs::remove_all(c.output_dir);
  const auto parallel = run_ablation(c, "vanilla_cfg", values, 3);
  fs::remove_all(c.output_dir);
  ASSERT_EQ(serial.size(), 3u);
  const auto cols = ablation_columns();
  const auto wall = static_cast<std::size_t>(std::find(cols.begin(), cols.end(), "wall_ms") - cols.begin());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (k != wall) {
        EXPECT_EQ(serial[i][k], parallel[i][k]) << cols[k];
      }
    }
  }
  EXPECT_EQ(serial[1][2], "6.5");
}

// Command line ----------------------------------------------------------------------

TEST_F(CliTest, SampleWritesOneTrajectoryRowPerStep) {
  const fs::path cfg = write_config("small.json", kSmall);
  const CommandResult r = run("sample --config '" + cfg.string() + "'");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const fs::path run_dir = only_run_dir(dir_ / "out");
  const auto rows = lines_of(slurp(run_dir / "trajectory.jsonl"));
  ASSERT_EQ(rows.size(), 10u);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto j = nlohmann::json::parse(rows[i]);
    EXPECT_EQ(j.at("step_index").get<int>(), static_cast<int>(i));
    EXPECT_EQ(j.at("combo").get<std::string>(), "main");
    EXPECT_TRUE(j.contains("cfg_scales") && j.contains("latent_norm") && j.contains("timestep"));
  }
  const LatentTensor x = read_tensor(run_dir / "latents.bin");
  EXPECT_EQ(x.shape(), (Shape5{2, 4, 8, 2, 2}));
  const auto q = nlohmann::json::parse(slurp(run_dir / "quality.json"));
  EXPECT_EQ(q.at("samples").get<int>(), 2);
  EXPECT_EQ(parse_experiment(slurp(run_dir / "config.json")).seed, 77u);
}

TEST_F(CliTest, ZeroIntervalRunMatchesStandardBytes) {
  const fs::path gated = write_config("gated.json", R"({"model": {"videos": 2},
      "sampler": {"preset": "IV-IV", "interval": {"begin": 0, "end": 0}, "inference_steps": 10},
      "output_dir": "gated"})");
  const fs::path plain = write_config("plain.json", R"({"model": {"videos": 2},
      "sampler": {"preset": "standard", "inference_steps": 10}, "output_dir": "plain"})");
  ASSERT_EQ(run("sample --config '" + gated.string() + "'").exit_code, 0);
  ASSERT_EQ(run("sample --config '" + plain.string() + "'").exit_code, 0);
  const std::string a = slurp(only_run_dir(dir_ / "gated") / "latents.bin");
  const std::string b = slurp(only_run_dir(dir_ / "plain") / "latents.bin");
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, b);
}

TEST_F(CliTest, SecondRunResumesFromTheMarker) {
  const fs::path cfg = write_config("small.json", kSmall);
  ASSERT_EQ(run("sample --config '" + cfg.string() + "'").exit_code, 0);
  const fs::path run_dir = only_run_dir(dir_ / "out");
  const std::string first = slurp(run_dir / "latents.bin");
  const CommandResult again = run("sample --config '" + cfg.string() + "'");
  EXPECT_NE(again.out.find("(resumed)"), std::string::npos) << again.out;
  fs::remove(run_dir / "quality.json");
  const CommandResult redo = run("sample --config '" + cfg.string() + "'");
  EXPECT_EQ(redo.out.find("(resumed)"), std::string::npos) << redo.out;
  EXPECT_EQ(slurp(run_dir / "latents.bin"), first);
}

TEST_F(CliTest, SeedOverrideChangesTheRunDirectory) {
  const fs::path cfg = write_config("small.json", kSmall);
  ASSERT_EQ(run("sample --config '" + cfg.string() + "' --seed 5 --out alt").exit_code, 0);
  const fs::path run_dir = only_run_dir(dir_ / "alt");
  EXPECT_EQ(run_dir.filename().string(), config_hash(small_config()) + "-s5");
}

TEST_F(CliTest, IntervalSweepWritesOneRowPerValue) {
  const fs::path cfg = write_config("small.json", kSmall);
  const CommandResult r = run("ablate --config '" + cfg.string() + "' --axis interval --values 0-100,0-50,50-100,0-0");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto rows = lines_of(r.out);
  ASSERT_EQ(rows.size(), 5u);
  std::string header;
  for (const auto& c : ablation_columns()) header += (header.empty() ? "" : ",") + c;
  EXPECT_EQ(rows[0], header);
  EXPECT_EQ(rows[2].substr(0, 17), "1,interval,0-50,0");
  EXPECT_EQ(slurp(dir_ / "out" / "ablate_interval.csv"), r.out);
}

TEST_F(CliTest, AblateFallsBackToTheConfigSweep) {
  const fs::path cfg = write_config("sweep.json", R"({"model": {"videos": 2},
      "sampler": {"inference_steps": 10}, "output_dir": "out", "repetitions": 2,
      "sweep": {"axis": "vanilla_cfg", "values": ["4", "6.5"]}})");
  const CommandResult r = run("ablate --config '" + cfg.string() + "'");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_EQ(lines_of(r.out).size(), 5u);
}

TEST_F(CliTest, VerifyIdentityPasses) {
  const CommandResult r = run("verify --suite identity");
  EXPECT_EQ(r.exit_code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("PASS  identity_collapse"), std::string::npos) << r.out;
}

TEST_F(CliTest, VerifyRejectsUnknownSuite) { EXPECT_NE(run("verify --suite nothing").exit_code, 0); }

TEST_F(CliTest, ScheduleCsvSpansBeginToEnd) {
  const CommandResult r = run("schedule --begin 1 --end 7 --rho 7 --steps 5");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  const auto rows = lines_of(r.out);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0], "step,position,scale");
  EXPECT_EQ(rows[1], "0,0,1");
  EXPECT_EQ(rows[5], "4,1,7");
  EXPECT_EQ(rows[3].substr(0, 6), "2,0.5,");
}

TEST_F(CliTest, ScheduleRejectsNonPositiveCurvedEndpoints) {
  EXPECT_NE(run("schedule --begin 0 --end 7 --rho 7 --steps 5").exit_code, 0);
}

TEST_F(CliTest, ConfigErrorsExitNonzeroAndNameTheField) {
  const fs::path bad = write_config("bad.json", R"({"model": {"videos": "many"}})");
  const CommandResult r = run("sample --config '" + bad.string() + "'");
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.err.find("model.videos"), std::string::npos) << r.err;
  const fs::path unknown = write_config("unknown.json", R"({"sampler": {"interval": {"start": 0}}})");
  const CommandResult u = run("sample --config '" + unknown.string() + "'");
  EXPECT_NE(u.exit_code, 0);
  EXPECT_NE(u.err.find("sampler.interval.start"), std::string::npos) << u.err;
}

TEST_F(CliTest, ShippedConfigsParse) {
  const fs::path configs = fs::path(IVMIX_SOURCE_DIR) / "configs";
  int count = 0;
  for (const auto& e : fs::directory_iterator(configs)) {
    if (e.path().extension() != ".json") continue;
    EXPECT_NO_THROW(load_experiment(e.path())) << e.path();
    ++count;
  }
  EXPECT_GE(count, 2);
  const ExperimentConfig desk = load_experiment(configs / "desk.json");
  EXPECT_EQ(to_json(desk).at("model").dump(), to_json(ExperimentConfig{}).at("model").dump());
  EXPECT_EQ(desk.sampler.layers, ExperimentConfig{}.sampler.layers);
}
