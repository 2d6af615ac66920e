// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mflow/analytic_flow.hpp"
#include "mflow/field_net.hpp"
#include "mflow/flow_core.hpp"
#include "mflow/rng.hpp"
#include "mflow/tensor.hpp"

namespace mflow {

// ---- 2-D point clouds --------------------------------------------------

/// Radial noise std of the ring and two_moons generators.
inline constexpr double kPointNoise = 0.05;
inline constexpr double kRingRadius = 1.0;

/// n x 2 samples from checkerboard | two_moons | ring.
Tensor gen_2d(const std::string& name, std::size_t n, Rng& rng);
const std::vector<std::string>& gen_2d_names();

/// Checkerboard support: 4x4 cells of side 1 on [-2,2]^2, occupied where
/// floor(x) + floor(y) is even.
bool checkerboard_cell_occupied(double x, double y);

// ---- miniature super-resolution ------------------------------------------

struct DegradeParams {
  double blur_sigma = 1.0;
  std::size_t scale = 4;
  double noise_sigma = 0.02;
  std::size_t quant_levels = 0;  // 0 = off

  void validate() const;
  bool operator==(const DegradeParams&) const = default;
};

struct SrPair {
  Tensor hr;  // [H,W] in [0,1]
  Tensor lr;  // [H/k, W/k] in [0,1]
  int label = 0;
  std::uint64_t seed = 0;
};

/// Procedural grayscale pattern in [0,1]. Class 0: oriented stripes,
/// class 1: checker texture, class 2: radial gradient with dots.
Tensor gen_pattern(int label, const ConditionSpace& conditions, std::size_t height,
                   std::size_t width, Rng& rng);

/// Stripe wave parameters; gen_pattern draws these first for class 0.
struct StripeWave {
  double angle = 0.0;   // radians in [0, pi), wave-vector direction
  double period = 8.0;  // pixels, in [H/4, H/2]
  double phase = 0.0;
};
StripeWave draw_stripe_wave(std::size_t height, Rng& rng);

/// Separable Gaussian blur, half-sample symmetric padding (edge repeated).
Tensor gaussian_blur(const Tensor& img, double sigma);
/// k x k block means.
Tensor block_mean_downsample(const Tensor& img, std::size_t k);
/// Nearest (block-replicating) upsample, the inverse layout of block means.
Tensor upsample_nearest(const Tensor& img, std::size_t k);

/// blur -> block-mean downsample -> optional quantization -> additive noise,
/// clamped to [0,1].
Tensor degrade(const Tensor& hr, const DegradeParams& params, Rng& rng);

SrPair make_sr_pair(int label, std::size_t hr_size, const DegradeParams& params,
                    const ConditionSpace& conditions, std::uint64_t seed);

/// Pixel <-> latent affine map: z = 2 x - 1.
Tensor pixels_to_latent(const Tensor& img);
Tensor latent_to_pixels(const Tensor& z);  // clamped to [0,1]

void write_pgm(const std::filesystem::path& path, const Tensor& img);
Tensor read_pgm(const std::filesystem::path& path);

// ---- tasks ------------------------------------------------------------

enum class TaskKind { gaussian, gen2d, toysr };
const char* to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& name);

struct TaskConfig {
  TaskKind kind = TaskKind::gaussian;
  // gaussian
  std::vector<double> mu = {2.0, -1.0};
  double sigma = 0.5;
  // gen2d
  std::string dist = "two_moons";
  // toysr
  std::size_t hr_size = 32;
  std::size_t num_classes = 3;
  DegradeParams degrade;
  double negative_blur_sigma = 0.3;
  // conditioning used while training the teacher
  double null_prob = 0.0;
  double negative_prob = 0.0;

  void validate() const;
  std::size_t data_dim() const;
  std::size_t lr_dim() const;
  std::size_t num_content() const;
  AnalyticFlow analytic() const;  // gaussian only
  bool operator==(const TaskConfig&) const = default;
};

/// Dataset front-end shared by training and evaluation.
class Task {
 public:
  explicit Task(TaskConfig config);

  const TaskConfig& config() const noexcept { return config_; }
  ConditionSpace conditions() const { return {config_.num_content()}; }

  /// Bundles noise, data, low-res condition, labels and (t, s) per sample.
  FlowBatch make_batch(std::size_t batch_size, Rng& rng, double ratio_r) const;
  /// As make_batch with s = t, plus label dropout to null and, for toysr,
  /// negative-label pairs whose target is the extra-blurred HR image.
  FlowBatch make_teacher_batch(std::size_t batch_size, Rng& rng) const;

  /// Data samples only, [n, data_dim].
  Tensor sample_data(std::size_t n, Rng& rng) const;

  /// Held-out SR pairs keyed by seeds derived from `base_seed`.
  std::vector<SrPair> sr_pairs(std::size_t n, std::uint64_t base_seed) const;

 private:
  TaskConfig config_;
};

/// Dataset manifest: seed,class,blur_sigma,scale,noise_sigma,quant_levels.
void write_sr_manifest(std::ostream& os, const std::vector<SrPair>& pairs,
                       const DegradeParams& params);

}  // namespace mflow
