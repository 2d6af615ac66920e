// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mflow/checkpoint.hpp"
#include "mflow/config.hpp"
#include "mflow/field_net.hpp"
#include "mflow/rng.hpp"
#include "mflow/toy_data.hpp"

namespace mflow {

/// Non-finite loss or gradient. The CLI maps it to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- optimizer ---------------------------------------------------------

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState init(std::span<const Param> params, const TrainConfig& train);
};

/// Bias-corrected Adam update at the state's current lr. Raises
/// NumericalError naming the first parameter with a non-finite gradient.
void adam_step(std::vector<Param>& params, std::span<const Tensor> grads, AdamState& state);

double global_norm(std::span<const Tensor> grads);
/// Rescales in place so the global norm is at most `max_norm` (0 = off).
/// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> grads, double max_norm);

/// Learning rate for step `step` of `total` under the configured schedule.
double lr_at(const TrainConfig& train, std::uint64_t step, std::uint64_t total);

// ---- training state ----------------------------------------------------

struct LogRow {
  std::uint64_t step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

struct ClipEvent {
  std::uint64_t step = 0;
  double grad_norm = 0.0;
};

struct TrainState {
  FieldNet net;
  AdamState adam;
  Rng rng;
  std::uint64_t step = 0;
  std::uint64_t teacher_digest = 0;  // students only
  std::vector<LogRow> log;
  std::vector<ClipEvent> clips;
};

TrainState init_teacher_state(const RunConfig& config);
TrainState init_student_state(const RunConfig& config, const FieldNet& teacher);

Checkpoint to_checkpoint(const TrainState& state, const RunConfig& config);
TrainState from_checkpoint(const Checkpoint& ckpt);

/// One optimizer step; returns the loss before the update.
double teacher_step(TrainState& state, const Task& task, const RunConfig& config);
double student_step(TrainState& state, const FieldNet& teacher, const Task& task,
                    const RunConfig& config);

/// Called after every step with the state (for periodic checkpoints).
using StepHook = std::function<void(const TrainState&)>;

/// Runs teacher steps until state.step == until.
void run_teacher_steps(TrainState& state, const Task& task, const RunConfig& config,
                       std::uint64_t until, const StepHook& hook = {});
void run_student_steps(TrainState& state, const FieldNet& teacher, const Task& task,
                       const RunConfig& config, std::uint64_t until,
                       const StepHook& hook = {});

// ---- pipelines ---------------------------------------------------------

struct TrainOutput {
  Checkpoint checkpoint;
  std::filesystem::path checkpoint_path;
  std::filesystem::path log_path;
};

/// Trains the teacher to config.train.teacher_steps. Writes teacher.ckpt,
/// periodic teacher_step<N>.ckpt, teacher_log.csv and teacher_clip.csv under
/// `out_dir`. When `resume` is given, continues from it.
TrainOutput train_teacher(const RunConfig& config, const std::filesystem::path& out_dir,
                          const std::optional<Checkpoint>& resume = std::nullopt);

/// Distils a student from a frozen teacher checkpoint. Raises ConfigError when
/// the teacher's task or network differ from `config`, and std::logic_error if
/// the teacher parameters change during the run. Writes student.ckpt,
/// student_log.csv and student_clip.csv.
TrainOutput distill_student(const RunConfig& config, const Checkpoint& teacher,
                            const std::filesystem::path& out_dir);

void write_log_csv(const std::filesystem::path& path, std::span<const LogRow> rows);

}  // namespace mflow
