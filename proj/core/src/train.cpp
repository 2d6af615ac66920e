// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mflow/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>

#include "mflow/csv.hpp"
#include "mflow/flow_core.hpp"

namespace mflow {

// ---- optimizer ---------------------------------------------------------

AdamState AdamState::init(std::span<const Param> params, const TrainConfig& train) {
  AdamState s;
  s.lr = train.lr;
  s.beta1 = train.beta1;
  s.beta2 = train.beta2;
  s.eps = train.eps;
  for (const Param& p : params) {
    s.m.emplace_back(p.value.shape());
    s.v.emplace_back(p.value.shape());
  }
  return s;
}

void adam_step(std::vector<Param>& params, std::span<const Tensor> grads, AdamState& state) {
  if (grads.size() != params.size() || state.m.size() != params.size() ||
      state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and moment counts differ");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].value.shape() || state.m[i].shape() != grads[i].shape()) {
      throw ShapeError("adam_step: shape mismatch for " + params[i].name);
    }
    if (!grads[i].all_finite()) {
      throw NumericalError("non-finite gradient for parameter " + params[i].name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].value.data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    const auto g = grads[i].data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      p[k] -= state.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + state.eps);
    }
  }
}

double global_norm(std::span<const Tensor> grads) {
  double acc = 0.0;
  for (const Tensor& g : grads) acc += squared_norm(g);
  return std::sqrt(acc);
}

double clip_grad_norm(std::span<Tensor> grads, double max_norm) {
  const double norm = global_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double k = max_norm / norm;
    for (Tensor& g : grads)
      for (double& x : g.data()) x *= k;
  }
  return norm;
}

double lr_at(const TrainConfig& train, std::uint64_t step, std::uint64_t total) {
  if (train.schedule == LrSchedule::constant || total <= 1) return train.lr;
  const double floor = train.lr * train.lr_final_fraction;
  const double p = std::min(1.0, static_cast<double>(step) / static_cast<double>(total - 1));
  return floor + 0.5 * (train.lr - floor) * (1.0 + std::cos(std::numbers::pi * p));
}

// ---- state -------------------------------------------------------------

TrainState init_teacher_state(const RunConfig& config) {
  config.validate();
  TrainState s;
  Rng init(Rng::derive(config.seed, 0));
  s.net = FieldNet::make_teacher(config.net_config(), init);
  s.adam = AdamState::init(s.net.params(), config.train);
  s.rng = Rng(Rng::derive(config.seed, 1));
  return s;
}

TrainState init_student_state(const RunConfig& config, const FieldNet& teacher) {
  config.validate();
  if (!(teacher.config() == config.net_config())) {
    throw ConfigError("teacher network does not match the run's network config");
  }
  TrainState s;
  s.net = init_student_from_teacher(teacher);
  s.adam = AdamState::init(s.net.params(), config.train);
  s.rng = Rng(Rng::derive(config.seed, 2));
  s.teacher_digest = teacher.digest();
  return s;
}

Checkpoint to_checkpoint(const TrainState& state, const RunConfig& config) {
  Checkpoint c;
  c.kind = state.net.kind();
  c.config = config;
  c.step = state.step;
  c.rng_state = state.rng.state();
  c.adam_step = state.adam.step;
  c.teacher_digest = state.teacher_digest;
  c.params = state.net.params();
  for (std::size_t i = 0; i < c.params.size(); ++i) {
    c.adam_m.push_back({c.params[i].name, state.adam.m[i]});
    c.adam_v.push_back({c.params[i].name, state.adam.v[i]});
  }
  return c;
}

TrainState from_checkpoint(const Checkpoint& ckpt) {
  TrainState s;
  s.net = ckpt.net();
  s.adam = AdamState::init(s.net.params(), ckpt.config.train);
  s.adam.step = ckpt.adam_step;
  if (!ckpt.adam_m.empty()) {
    for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
      if (ckpt.adam_m[i].name != ckpt.params[i].name || ckpt.adam_v[i].name != ckpt.params[i].name ||
          ckpt.adam_m[i].value.shape() != ckpt.params[i].value.shape() ||
          ckpt.adam_v[i].value.shape() != ckpt.params[i].value.shape()) {
        throw CheckpointError("optimizer moments do not match parameter " + ckpt.params[i].name);
      }
      s.adam.m[i] = ckpt.adam_m[i].value;
      s.adam.v[i] = ckpt.adam_v[i].value;
    }
  }
  s.rng.restore(ckpt.rng_state);
  s.step = ckpt.step;
  s.teacher_digest = ckpt.teacher_digest;
  return s;
}

// ---- steps -------------------------------------------------------------

namespace {

using Clock = std::chrono::steady_clock;

double finish_step(TrainState& state, Graph& graph, const Var& loss, std::span<const Var> params,
                   const TrainConfig& train, std::uint64_t total, Clock::time_point start) {
  const double value = loss.value().item();
  if (!std::isfinite(value)) {
    throw NumericalError("non-finite loss at step " + std::to_string(state.step));
  }
  graph.backward(loss);
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const Var& p : params) grads.push_back(graph.grad(p));
  const double norm = clip_grad_norm(grads, train.grad_clip);
  if (train.grad_clip > 0.0 && norm > train.grad_clip) state.clips.push_back({state.step, norm});
  state.adam.lr = lr_at(train, state.step, total);
  adam_step(state.net.params(), grads, state.adam);

  if (state.step % train.log_every == 0 || state.step + 1 == total) {
    const double ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    state.log.push_back({state.step, value, norm, ms});
  }
  ++state.step;
  return value;
}

}  // namespace

double teacher_step(TrainState& state, const Task& task, const RunConfig& config) {
  const auto start = Clock::now();
  const FlowBatch batch = task.make_teacher_batch(config.train.batch_size, state.rng);
  Graph g;
  const std::vector<Var> params = state.net.bind(g, true);
  const Var loss = rf_loss(g, traced_teacher(state.net, params), batch);
  return finish_step(state, g, loss, params, config.train, config.train.teacher_steps, start);
}

double student_step(TrainState& state, const FieldNet& teacher, const Task& task,
                    const RunConfig& config) {
  const auto start = Clock::now();
  const FlowBatch batch = task.make_batch(config.train.batch_size, state.rng, config.loss.ratio_r);
  Graph g;
  const std::vector<Var> params = state.net.bind(g, true);
  const MfdLoss l = mfd_loss(g, traced_student(state.net, params), traced_teacher(teacher), batch,
                             task.conditions(), config.cfg, config.loss);
  return finish_step(state, g, l.loss, params, config.train, config.train.student_steps, start);
}

void run_teacher_steps(TrainState& state, const Task& task, const RunConfig& config,
                       std::uint64_t until, const StepHook& hook) {
  while (state.step < until) {
    teacher_step(state, task, config);
    if (hook) hook(state);
  }
}

void run_student_steps(TrainState& state, const FieldNet& teacher, const Task& task,
                       const RunConfig& config, std::uint64_t until, const StepHook& hook) {
  while (state.step < until) {
    student_step(state, teacher, task, config);
    if (hook) hook(state);
  }
}

// ---- pipelines ---------------------------------------------------------

void write_log_csv(const std::filesystem::path& path, std::span<const LogRow> rows) {
  std::ofstream os(path);
  if (!os) throw std::ios_base::failure("cannot write " + path.string());
  CsvWriter csv(os, {"step", "loss", "grad_norm", "wall_ms"});
  for (const LogRow& r : rows) csv.row(r.step, r.loss, r.grad_norm, r.wall_ms);
}

namespace {

void write_clip_csv(const std::filesystem::path& path, std::span<const ClipEvent> events,
                    double max_norm) {
  std::ofstream os(path);
  if (!os) throw std::ios_base::failure("cannot write " + path.string());
  CsvWriter csv(os, {"step", "grad_norm", "clip"});
  for (const ClipEvent& e : events) csv.row(e.step, e.grad_norm, max_norm);
}

StepHook periodic_saver(const RunConfig& config, const std::filesystem::path& out_dir,
                        const char* prefix) {
  const std::size_t every = config.train.checkpoint_every;
  if (every == 0) return {};
  return [=](const TrainState& s) {
    if (s.step % every == 0) {
      save_checkpoint(out_dir / (std::string(prefix) + "_step" + std::to_string(s.step) + ".ckpt"),
                      to_checkpoint(s, config));
    }
  };
}

TrainOutput finish_run(const TrainState& state, const RunConfig& config,
                       const std::filesystem::path& out_dir, const char* prefix) {
  TrainOutput out;
  out.checkpoint = to_checkpoint(state, config);
  out.checkpoint_path = out_dir / (std::string(prefix) + ".ckpt");
  out.log_path = out_dir / (std::string(prefix) + "_log.csv");
  save_checkpoint(out.checkpoint_path, out.checkpoint);
  write_log_csv(out.log_path, state.log);
  write_clip_csv(out_dir / (std::string(prefix) + "_clip.csv"), state.clips, config.train.grad_clip);
  return out;
}

}  // namespace

TrainOutput train_teacher(const RunConfig& config, const std::filesystem::path& out_dir,
                          const std::optional<Checkpoint>& resume) {
  config.validate();
  std::filesystem::create_directories(out_dir);
  const Task task(config.task);
  TrainState state = resume ? from_checkpoint(*resume) : init_teacher_state(config);
  if (state.net.kind() != NetKind::teacher) throw ConfigError("resume checkpoint is not a teacher");
  if (resume && !(resume->config == config)) {
    throw ConfigError("resume checkpoint was written by a different config");
  }
  try {
    run_teacher_steps(state, task, config, config.train.teacher_steps,
                      periodic_saver(config, out_dir, "teacher"));
  } catch (const NumericalError&) {
    write_log_csv(out_dir / "teacher_log.csv", state.log);
    throw;
  }
  return finish_run(state, config, out_dir, "teacher");
}

TrainOutput distill_student(const RunConfig& config, const Checkpoint& teacher_ckpt,
                            const std::filesystem::path& out_dir) {
  config.validate();
  if (teacher_ckpt.kind != NetKind::teacher) throw ConfigError("distill needs a teacher checkpoint");
  if (!compatible_teacher(teacher_ckpt.config, config)) {
    throw ConfigError("teacher checkpoint task/net config does not match the distillation config");
  }
  std::filesystem::create_directories(out_dir);
  const Task task(config.task);
  const FieldNet teacher = teacher_ckpt.net();
  TrainState state = init_student_state(config, teacher);
  const std::uint64_t before = teacher.digest();
  try {
    run_student_steps(state, teacher, task, config, config.train.student_steps,
                      periodic_saver(config, out_dir, "student"));
  } catch (const NumericalError&) {
    write_log_csv(out_dir / "student_log.csv", state.log);
    throw;
  }
  if (teacher.digest() != before) throw std::logic_error("teacher parameters changed during distillation");
  return finish_run(state, config, out_dir, "student");
}

}  // namespace mflow
