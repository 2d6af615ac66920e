// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "mflow/config.hpp"
#include "mflow_cli/cli.hpp"
#include "test_util.hpp"

namespace mflow {
namespace {

namespace fs = std::filesystem;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "mflow");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

const std::vector<std::string> kTiny = {
    "--set", "net.hidden=8", "net.depth=2", "net.embed_dim=4", "net.time_features=4",
    "train.batch_size=16", "train.teacher_steps=6", "train.student_steps=4",
    "train.checkpoint_every=0", "cfg.mode=teacher_null", "sample.n_samples=3"};

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

TEST(Cli, NoArgumentsPrintsUsage) {
  const Result r = run_cli({});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("train-teacher"), std::string::npos);
}

TEST(Cli, UnknownSubcommandIsUsageError) {
  EXPECT_EQ(run_cli({"fly"}).code, 1);
}

TEST(Cli, UnknownConfigKeyRejectedBeforeCompute) {
  const auto dir = testing::scratch_dir("cli_badkey");
  const Result r = run_cli({"train-teacher", "--out", dir.string(), "--set", "train.warp=9"});
  EXPECT_EQ(r.code, 1);
  EXPECT_FALSE(fs::exists(dir / "teacher.ckpt"));
  EXPECT_FALSE(fs::exists(dir / "train-teacher.config.json"));
}

TEST(Cli, VerifyOnDefaultsPasses) {
  const auto dir = testing::scratch_dir("cli_verify");
  const Result r = run_cli({"verify", "--grid", "8", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto text = slurp(dir / "residual.csv");
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "t,s,max_resid,mean_resid");
  std::size_t cells = 0, evaluated = 0;
  while (std::getline(is, line)) {
    ++cells;
    const auto f = split_csv_line(line);
    if (f[2] == "skipped") continue;
    ++evaluated;
    EXPECT_LT(std::stod(f[2]), 1e-3);
  }
  EXPECT_EQ(cells, 64u);
  EXPECT_EQ(evaluated, 28u);
  EXPECT_TRUE(fs::exists(dir / "verify.config.json"));
}

TEST(Cli, MissingCheckpointIsIoError) {
  const auto dir = testing::scratch_dir("cli_missing");
  EXPECT_EQ(run_cli({"sample", "--out", dir.string()}).code, 3);
  EXPECT_EQ(run_cli({"distill", "--out", dir.string()}).code, 3);
}

TEST(Cli, MissingConfigFileIsUsageError) {
  EXPECT_EQ(run_cli({"verify", "--config", "/nonexistent/config.json"}).code, 1);
}

TEST(Cli, TrainDistillSampleWritesOneFilePerSample) {
  const auto dir = testing::scratch_dir("cli_pipeline");
  ASSERT_EQ(run_cli(with({"train-teacher", "--out", dir.string()}, kTiny)).code, 0);
  ASSERT_EQ(run_cli(with({"distill", "--out", dir.string()}, kTiny)).code, 0);
  const Result r = run_cli(with({"sample", "--steps", "1", "--out", dir.string()}, kTiny));
  ASSERT_EQ(r.code, 0) << r.err;
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(fs::exists(dir / "samples" / ("sample_" + std::to_string(i) + ".csv")));
  EXPECT_FALSE(fs::exists(dir / "samples" / "sample_3.csv"));
  // Every command persists the config it resolved.
  for (const char* cmd : {"train-teacher", "distill", "sample"}) {
    const RunConfig c = load_config(dir / (std::string(cmd) + ".config.json"));
    EXPECT_EQ(c.train.teacher_steps, 6u);
    EXPECT_EQ(c.out, dir.string());
  }
  EXPECT_EQ(load_config(dir / "sample.config.json").sample.steps, 1u);
}

TEST(Cli, ResolvedConfigReproducesRun) {
  const auto a = testing::scratch_dir("cli_repro_a");
  const auto keep = testing::scratch_dir("cli_repro_keep");
  ASSERT_EQ(run_cli(with({"train-teacher", "--out", a.string()}, kTiny)).code, 0);
  fs::copy_file(a / "train-teacher.config.json", keep / "c.json");
  fs::rename(a / "teacher.ckpt", keep / "teacher.ckpt");
  ASSERT_EQ(run_cli({"train-teacher", "--config", (keep / "c.json").string()}).code, 0);
  EXPECT_EQ(slurp(a / "teacher.ckpt"), slurp(keep / "teacher.ckpt"));
}

TEST(Cli, SeedOverrideChangesOutputs) {
  const auto a = testing::scratch_dir("cli_seed_a");
  const auto b = testing::scratch_dir("cli_seed_b");
  ASSERT_EQ(run_cli(with({"gen-data", "--out", a.string()}, kTiny)).code, 0);
  ASSERT_EQ(run_cli(with({"gen-data", "--seed", "17", "--out", b.string()}, kTiny)).code, 0);
  EXPECT_NE(slurp(a / "data" / "points.csv"), slurp(b / "data" / "points.csv"));
  const auto c = testing::scratch_dir("cli_seed_c");
  ASSERT_EQ(run_cli(with({"gen-data", "--out", c.string()}, kTiny)).code, 0);
  EXPECT_EQ(slurp(a / "data" / "points.csv"), slurp(c / "data" / "points.csv"));
}

TEST(Cli, GenDataWritesSrPairsAndManifest) {
  const auto dir = testing::scratch_dir("cli_gendata_sr");
  const Result r = run_cli(
      {"gen-data", "--out", dir.string(), "--set", "task.kind=toysr", "task.hr_size=16", "sample.n_samples=2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "data" / "pair_1_hr.pgm"));
  EXPECT_TRUE(fs::exists(dir / "data" / "pair_1_lr.pgm"));
  std::ifstream is(dir / "data" / "manifest.csv");
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header, "seed,class,blur_sigma,scale,noise_sigma,quant_levels");
}

TEST(Cli, NumericalAbortExitCode) {
  const auto dir = testing::scratch_dir("cli_nan");
  const Result r = run_cli(with({"train-teacher", "--out", dir.string()}, with(kTiny, {"task.mu=[1e300,1e300]"})));
  EXPECT_EQ(r.code, 2) << r.err;
}

}  // namespace
}  // namespace mflow
