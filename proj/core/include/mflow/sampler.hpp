// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mflow/analytic_flow.hpp"
#include "mflow/config.hpp"
#include "mflow/field_net.hpp"
#include "mflow/flow_core.hpp"
#include "mflow/tensor.hpp"
#include "mflow/toy_data.hpp"

namespace mflow {

// ---- samplers ----------------------------------------------------------

/// N + 1 points 0 = tau_0 < ... < tau_N = 1.
std::vector<double> uniform_grid(std::size_t steps);

/// u(z, t, s) on a [B,D] batch.
using AverageFn = std::function<Tensor(const Tensor& z, double t, double s)>;
/// v(z, t) on a [B,D] batch.
using VelocityFn = std::function<Tensor(const Tensor& z, double t)>;

/// z <- z + (tau_{n+1} - tau_n) u(z, tau_n, tau_{n+1}) over the grid.
Tensor sample_average(const AverageFn& u, const Tensor& z0, std::span<const double> grid);
Tensor sample_average(const AverageFn& u, const Tensor& z0, std::size_t steps);

/// Forward Euler on a uniform grid of `steps` steps.
Tensor sample_euler(const VelocityFn& v, const Tensor& z0, std::size_t steps);

Tensor sample_student(const FieldNet& student, const Tensor& z0, const Tensor& z_lr,
                      std::span<const int> labels, std::size_t steps);
Tensor sample_student(const FieldNet& student, const Tensor& z0, const Tensor& z_lr,
                      std::span<const int> labels, std::span<const double> grid);

/// Euler on the teacher field. With `cfg` set, the field is the guided
/// combination of mode teacher_null or teacher_neg; nullopt samples unguided.
Tensor sample_teacher_euler(const FieldNet& teacher, const Tensor& z0, const Tensor& z_lr,
                            std::span<const int> labels, std::size_t steps,
                            const std::optional<CfgConfig>& cfg = std::nullopt);

// ---- metrics -----------------------------------------------------------

/// 10 log10(1 / MSE); +inf when the images are identical.
double psnr(const Tensor& a, const Tensor& b);

struct MomentDistance {
  double mean_err = 0.0;  // || mean - mu ||
  double cov_err = 0.0;   // || cov - sigma^2 I ||_F, unbiased covariance
};
MomentDistance moment_distance(const Tensor& samples, const AnalyticFlow& flow);

/// 2 E|X-Y| - E|X-X'| - E|Y-Y'| over all pairs (V-statistic).
double energy_distance(const Tensor& x, const Tensor& y);

/// Mean squared high-pass residual img - blur(img, 1) of an [H,W] image.
double hf_energy(const Tensor& img);

// ---- evaluation --------------------------------------------------------

struct SrEval {
  double psnr = 0.0;           // mean over pairs, dB
  double baseline_psnr = 0.0;  // nearest upsample of the LR input
  double hf_gap = 0.0;         // mean |hf_energy(sr) - hf_energy(hr)|
  std::size_t n_pairs = 0;
};

/// Held-out SR pairs and noise used by every SR evaluation of a config.
struct SrProbe {
  std::vector<SrPair> pairs;
  Tensor z0;
  Tensor z_lr;
  std::vector<int> labels;
};
SrProbe make_sr_probe(const Task& task, std::size_t n, std::uint64_t seed);

SrEval evaluate_sr(const SrProbe& probe, const Tensor& samples, std::size_t hr_size);
SrEval evaluate_sr_student(const FieldNet& student, const SrProbe& probe, std::size_t steps,
                           std::size_t hr_size);

struct GenEval {
  std::optional<MomentDistance> moments;  // gaussian task only
  double energy = 0.0;
  std::size_t n_samples = 0;
};
/// Compares samples with fresh data draws from the task. Energy distance uses
/// at most 2000 samples per side.
GenEval evaluate_gen(const Task& task, const Tensor& samples, std::uint64_t seed);

struct SweepRow {
  std::size_t steps = 0;
  std::string metric;
  double value = 0.0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
};

/// Runs the student sampler for each N and records task metrics.
std::vector<SweepRow> steps_sweep(const FieldNet& student, const Task& task,
                                  std::span<const std::size_t> steps_list,
                                  std::size_t n_samples, std::uint64_t seed);

/// Columns N,metric_name,value,n_samples,seed.
void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows);

/// Unconditional noise/conditioning inputs for gen tasks.
struct GenProbe {
  Tensor z0;
  Tensor z_lr;
  std::vector<int> labels;
};
GenProbe make_gen_probe(const Task& task, std::size_t n, std::uint64_t seed);

}  // namespace mflow
