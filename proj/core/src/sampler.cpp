// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mflow/sampler.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "mflow/csv.hpp"
#include "mflow/parallel.hpp"

namespace mflow {

std::vector<double> uniform_grid(std::size_t steps) {
  if (steps == 0) throw std::invalid_argument("sampler needs steps >= 1");
  std::vector<double> grid(steps + 1);
  for (std::size_t n = 0; n <= steps; ++n) {
    grid[n] = static_cast<double>(n) / static_cast<double>(steps);
  }
  return grid;
}

Tensor sample_average(const AverageFn& u, const Tensor& z0, std::span<const double> grid) {
  if (grid.size() < 2) throw std::invalid_argument("sampler grid needs at least two points");
  Tensor z = z0;
  for (std::size_t n = 0; n + 1 < grid.size(); ++n) {
    z = axpy(z, grid[n + 1] - grid[n], u(z, grid[n], grid[n + 1]));
  }
  return z;
}

Tensor sample_average(const AverageFn& u, const Tensor& z0, std::size_t steps) {
  const std::vector<double> grid = uniform_grid(steps);
  return sample_average(u, z0, grid);
}

Tensor sample_euler(const VelocityFn& v, const Tensor& z0, std::size_t steps) {
  const std::vector<double> grid = uniform_grid(steps);
  Tensor z = z0;
  for (std::size_t n = 0; n < steps; ++n) z = axpy(z, grid[n + 1] - grid[n], v(z, grid[n]));
  return z;
}

Tensor sample_student(const FieldNet& student, const Tensor& z0, const Tensor& z_lr,
                      std::span<const int> labels, std::span<const double> grid) {
  if (student.kind() != NetKind::student) throw std::invalid_argument("sample_student needs a student");
  const AverageFn u = [&](const Tensor& z, double t, double s) {
    return student.student_forward(z, t, s, z_lr, labels);
  };
  return sample_average(u, z0, grid);
}

Tensor sample_student(const FieldNet& student, const Tensor& z0, const Tensor& z_lr,
                      std::span<const int> labels, std::size_t steps) {
  const std::vector<double> grid = uniform_grid(steps);
  return sample_student(student, z0, z_lr, labels, grid);
}

Tensor sample_teacher_euler(const FieldNet& teacher, const Tensor& z0, const Tensor& z_lr,
                            std::span<const int> labels, std::size_t steps,
                            const std::optional<CfgConfig>& cfg) {
  if (teacher.kind() != NetKind::teacher) {
    throw std::invalid_argument("sample_teacher_euler needs a teacher");
  }
  if (cfg && cfg->mode != CfgMode::teacher_null && cfg->mode != CfgMode::teacher_neg) {
    throw std::invalid_argument(std::string("cfg mode ") + to_string(cfg->mode) +
                                " has no teacher-only inference form");
  }
  const VelocityFn v = [&](const Tensor& z, double t) {
    if (!cfg) return teacher.teacher_forward(z, t, z_lr, labels);
    return cfg_velocity(teacher, nullptr, z, time_column(t, z.dim(0)), z_lr, labels, *cfg);
  };
  return sample_euler(v, z0, steps);
}

// ---- metrics -----------------------------------------------------------

double psnr(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("psnr: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  if (a.numel() == 0) throw std::invalid_argument("psnr of empty images");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

MomentDistance moment_distance(const Tensor& samples, const AnalyticFlow& flow) {
  flow.validate();
  if (samples.rank() != 2 || samples.dim(1) != flow.dim()) {
    throw ShapeError("moment_distance: samples " + shape_str(samples.shape()) + " vs dim " +
                     std::to_string(flow.dim()));
  }
  const std::size_t n = samples.dim(0), d = flow.dim();
  if (n < 2) throw std::invalid_argument("moment_distance needs at least 2 samples");
  std::vector<double> m(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) m[j] += samples.at(i, j);
  for (double& x : m) x /= static_cast<double>(n);

  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        cov[a * d + b] += (samples.at(i, a) - m[a]) * (samples.at(i, b) - m[b]);

  MomentDistance out;
  double me = 0.0, ce = 0.0;
  const double var = flow.sigma * flow.sigma;
  for (std::size_t a = 0; a < d; ++a) {
    me += (m[a] - flow.mu[a]) * (m[a] - flow.mu[a]);
    for (std::size_t b = 0; b < d; ++b) {
      const double c = cov[a * d + b] / static_cast<double>(n - 1) - (a == b ? var : 0.0);
      ce += c * c;
    }
  }
  out.mean_err = std::sqrt(me);
  out.cov_err = std::sqrt(ce);
  return out;
}

namespace {

double mean_pair_distance(const Tensor& x, const Tensor& y) {
  const std::size_t nx = x.dim(0), ny = y.dim(0), d = x.dim(1);
  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(nx, 64));
  std::vector<double> partial(chunks, 0.0);
  parallel_for(chunks, 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      double acc = 0.0;
      for (std::size_t i = c * nx / chunks; i < (c + 1) * nx / chunks; ++i)
        for (std::size_t j = 0; j < ny; ++j) {
          double s = 0.0;
          for (std::size_t k = 0; k < d; ++k) {
            const double diff = x.at(i, k) - y.at(j, k);
            s += diff * diff;
          }
          acc += std::sqrt(s);
        }
      partial[c] = acc;
    }
  });
  double total = 0.0;
  for (double p : partial) total += p;
  return total / static_cast<double>(nx * ny);
}

}  // namespace

double energy_distance(const Tensor& x, const Tensor& y) {
  if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(1) || x.dim(0) == 0 || y.dim(0) == 0) {
    throw ShapeError("energy_distance: shapes " + shape_str(x.shape()) + " and " + shape_str(y.shape()));
  }
  return 2.0 * mean_pair_distance(x, y) - mean_pair_distance(x, x) - mean_pair_distance(y, y);
}

double hf_energy(const Tensor& img) {
  const Tensor low = gaussian_blur(img, 1.0);
  return squared_norm(img - low) / static_cast<double>(img.numel());
}

// ---- evaluation --------------------------------------------------------

SrProbe make_sr_probe(const Task& task, std::size_t n, std::uint64_t seed) {
  SrProbe p;
  p.pairs = task.sr_pairs(n, seed);
  Rng noise(Rng::derive(seed, 0x9e3779b9ULL));
  p.z0 = noise.normal_tensor({n, task.config().data_dim()});
  std::vector<Tensor> lr;
  for (const SrPair& pair : p.pairs) {
    lr.push_back(pixels_to_latent(pair.lr).reshape({pair.lr.numel()}));
    p.labels.push_back(pair.label);
  }
  p.z_lr = stack(lr);
  return p;
}

SrEval evaluate_sr(const SrProbe& probe, const Tensor& samples, std::size_t hr_size) {
  const std::size_t n = probe.pairs.size();
  if (samples.rank() != 2 || samples.dim(0) != n || samples.dim(1) != hr_size * hr_size) {
    throw ShapeError("evaluate_sr: samples " + shape_str(samples.shape()));
  }
  SrEval e;
  e.n_pairs = n;
  for (std::size_t i = 0; i < n; ++i) {
    const SrPair& pair = probe.pairs[i];
    const Tensor sr = latent_to_pixels(samples.rows(i, i + 1).reshape({hr_size, hr_size}));
    const std::size_t k = hr_size / pair.lr.dim(0);
    e.psnr += psnr(sr, pair.hr);
    e.baseline_psnr += psnr(upsample_nearest(pair.lr, k), pair.hr);
    e.hf_gap += std::abs(hf_energy(sr) - hf_energy(pair.hr));
  }
  const double inv = 1.0 / static_cast<double>(n);
  e.psnr *= inv;
  e.baseline_psnr *= inv;
  e.hf_gap *= inv;
  return e;
}

SrEval evaluate_sr_student(const FieldNet& student, const SrProbe& probe, std::size_t steps,
                           std::size_t hr_size) {
  return evaluate_sr(probe, sample_student(student, probe.z0, probe.z_lr, probe.labels, steps),
                     hr_size);
}

GenProbe make_gen_probe(const Task& task, std::size_t n, std::uint64_t seed) {
  GenProbe p;
  Rng noise(Rng::derive(seed, 0x9e3779b9ULL));
  p.z0 = noise.normal_tensor({n, task.config().data_dim()});
  p.z_lr = Tensor({n, task.config().lr_dim()});
  p.labels.assign(n, 0);
  return p;
}

GenEval evaluate_gen(const Task& task, const Tensor& samples, std::uint64_t seed) {
  GenEval e;
  e.n_samples = samples.dim(0);
  if (task.config().kind == TaskKind::gaussian) {
    e.moments = moment_distance(samples, task.config().analytic());
  }
  const std::size_t m = std::min<std::size_t>(samples.dim(0), 2000);
  Rng data_rng(Rng::derive(seed, 0xda7aULL));
  e.energy = energy_distance(samples.rows(0, m), task.sample_data(m, data_rng));
  return e;
}

std::vector<SweepRow> steps_sweep(const FieldNet& student, const Task& task,
                                  std::span<const std::size_t> steps_list, std::size_t n_samples,
                                  std::uint64_t seed) {
  std::vector<SweepRow> rows;
  const TaskConfig& tc = task.config();
  if (tc.kind == TaskKind::toysr) {
    const SrProbe probe = make_sr_probe(task, n_samples, seed);
    for (std::size_t n : steps_list) {
      const SrEval e = evaluate_sr_student(student, probe, n, tc.hr_size);
      rows.push_back({n, "psnr", e.psnr, n_samples, seed});
      rows.push_back({n, "hf_gap", e.hf_gap, n_samples, seed});
    }
    return rows;
  }
  const GenProbe probe = make_gen_probe(task, n_samples, seed);
  for (std::size_t n : steps_list) {
    const Tensor x = sample_student(student, probe.z0, probe.z_lr, probe.labels, n);
    const GenEval e = evaluate_gen(task, x, seed);
    if (e.moments) {
      rows.push_back({n, "mean_err", e.moments->mean_err, n_samples, seed});
      rows.push_back({n, "cov_err", e.moments->cov_err, n_samples, seed});
    }
    rows.push_back({n, "energy_distance", e.energy, n_samples, seed});
  }
  return rows;
}

void write_sweep_csv(std::ostream& os, std::span<const SweepRow> rows) {
  CsvWriter csv(os, {"N", "metric_name", "value", "n_samples", "seed"});
  for (const SweepRow& r : rows) csv.row(r.steps, r.metric, r.value, r.n_samples, r.seed);
}

}  // namespace mflow
