// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mflow/field_net.hpp"
#include "mflow/flow_core.hpp"
#include "mflow/toy_data.hpp"

namespace mflow {

enum class LrSchedule { constant, cosine };
const char* to_string(LrSchedule schedule);
LrSchedule parse_lr_schedule(const std::string& name);

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t teacher_steps = 4000;
  std::size_t student_steps = 4000;
  double lr = 1e-3;
  double reference_lr = 5e-5;  // recorded only; `lr` drives the optimizer
  LrSchedule schedule = LrSchedule::cosine;
  double lr_final_fraction = 0.05;  // cosine floor as a fraction of lr
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 10.0;  // 0 disables
  std::size_t log_every = 50;
  std::size_t checkpoint_every = 1000;  // 0 = final checkpoint only

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct SampleConfig {
  std::size_t steps = 1;  // student sampler steps
  std::size_t teacher_steps = 256;
  std::size_t n_samples = 16;
  std::vector<double> grid;  // optional custom time grid, overrides `steps`

  void validate() const;
  bool operator==(const SampleConfig&) const = default;
};

struct EvalConfig {
  std::size_t n_samples = 10000;  // gaussian / gen2d
  std::size_t n_pairs = 200;      // toysr
  std::vector<std::size_t> steps_list = {1, 2, 4, 8};
  std::uint64_t held_out_seed = 0x5eedULL;

  void validate() const;
  bool operator==(const EvalConfig&) const = default;
};

struct VerifyConfig {
  std::size_t grid = 8;
  std::size_t integrator_steps = 1024;
  double fd_step = 1e-4;
  std::size_t probes = 16;

  void validate() const;
  bool operator==(const VerifyConfig&) const = default;
};

/// Network hyper-parameters that are not implied by the task.
struct NetShape {
  std::size_t hidden = 128;
  std::size_t depth = 3;
  std::size_t embed_dim = 64;
  std::size_t time_features = 64;
  double teacher_c_noise = 1000.0;
  double time_rate_min = 1.0;
  double time_rate_max = 32.0;

  bool operator==(const NetShape&) const = default;
};

/// Everything a run needs. Serialized next to every output.
struct RunConfig {
  TaskConfig task;
  NetShape net;
  TrainConfig train;
  CfgConfig cfg;
  LossConfig loss;
  SampleConfig sample;
  EvalConfig eval;
  VerifyConfig verify;
  std::uint64_t seed = 0;
  std::string out = "runs/default";
  std::string teacher_checkpoint;  // distill/sample/eval input; empty = <out>/teacher.ckpt

  void validate() const;
  /// Net config with data/lr/class dimensions resolved from the task.
  NetConfig net_config() const;
  bool operator==(const RunConfig&) const = default;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Canonical JSON (sorted keys, 2-space indent).
std::string to_json(const RunConfig& config);
/// Strict parse: unknown keys and wrong types raise ConfigError. Missing keys
/// keep their defaults.
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& config);

/// Applies `a.b.c=value` overrides; the value is parsed as JSON when possible
/// and as a bare string otherwise. Unknown keys raise ConfigError.
RunConfig apply_overrides(const RunConfig& config, const std::vector<std::string>& overrides);

/// FNV-1a over the canonical JSON.
std::uint64_t config_digest(const RunConfig& config);

/// Fields that must agree between a teacher checkpoint and a distillation run.
bool compatible_teacher(const RunConfig& teacher, const RunConfig& run);

}  // namespace mflow
