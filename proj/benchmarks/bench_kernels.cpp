// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include <vector>

#include "mflow/autodiff.hpp"
#include "mflow/config.hpp"
#include "mflow/field_net.hpp"
#include "mflow/rng.hpp"
#include "mflow/tensor.hpp"
#include "mflow/toy_data.hpp"
#include "mflow/train.hpp"

namespace mflow {
namespace {

// Square matmul at the trunk width.
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = rng.normal_tensor({256, n});
  const Tensor b = rng.normal_tensor({n, n});
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * 256 * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(512);

RunConfig bench_config(TaskKind kind) {
  RunConfig c;
  c.task.kind = kind;
  c.task.null_prob = 0.1;
  c.task.negative_prob = 0.1;
  c.cfg = {CfgMode::teacher_neg, 6.0, 0.0};
  return c;
}

// One student forward with its tangent channel, as used by the distillation target.
void BM_StudentJvp(benchmark::State& state) {
  const RunConfig c = bench_config(TaskKind::gaussian);
  Rng rng(2);
  const FieldNet student = init_student_from_teacher(FieldNet::make_teacher(c.net_config(), rng));
  const std::size_t b = c.train.batch_size;
  const std::vector<int> labels(b, 0);
  const Tensor z_lr({b, c.task.lr_dim()});
  const TracedFn f = [&](Graph& g, std::span<const Var> in) {
    const auto params = student.bind(g, false);
    return student.forward(params, in[0], in[1], &in[2], g.constant(z_lr), labels);
  };
  const std::vector<Tensor> inputs = {rng.normal_tensor({b, 2}), rng.uniform_tensor({b, 1}, 0, 1),
                                      Tensor::ones({b, 1})};
  const std::vector<Tensor> tangents = {rng.normal_tensor({b, 2}), Tensor::ones({b, 1}),
                                        Tensor({b, 1})};
  for (auto _ : state) benchmark::DoNotOptimize(jvp(f, inputs, tangents));
}
BENCHMARK(BM_StudentJvp)->Unit(benchmark::kMillisecond);

void BM_TeacherStep(benchmark::State& state) {
  const RunConfig c = bench_config(static_cast<TaskKind>(state.range(0)));
  const Task task(c.task);
  TrainState s = init_teacher_state(c);
  for (auto _ : state) benchmark::DoNotOptimize(teacher_step(s, task, c));
}
BENCHMARK(BM_TeacherStep)
    ->Arg(static_cast<int>(TaskKind::gaussian))
    ->Arg(static_cast<int>(TaskKind::toysr))
    ->Unit(benchmark::kMillisecond);

void BM_StudentStep(benchmark::State& state) {
  const RunConfig c = bench_config(static_cast<TaskKind>(state.range(0)));
  const Task task(c.task);
  const TrainState teacher = init_teacher_state(c);
  TrainState s = init_student_state(c, teacher.net);
  for (auto _ : state) benchmark::DoNotOptimize(student_step(s, teacher.net, task, c));
}
BENCHMARK(BM_StudentStep)
    ->Arg(static_cast<int>(TaskKind::gaussian))
    ->Arg(static_cast<int>(TaskKind::toysr))
    ->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace mflow

BENCHMARK_MAIN();
