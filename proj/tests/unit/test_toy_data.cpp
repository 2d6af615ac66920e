// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include "mflow/rng.hpp"
#include "mflow/toy_data.hpp"
#include "test_util.hpp"

namespace mflow {
namespace {

const ConditionSpace kThree{3};

// ---- point clouds ------------------------------------------------------

TEST(Gen2d, RingStaysWithinThreeNoiseWidths) {
  Rng rng(1);
  const Tensor x = gen_2d("ring", 5000, rng);
  for (std::size_t i = 0; i < 5000; ++i) {
    const double r = std::hypot(x.at(i, 0), x.at(i, 1));
    EXPECT_GE(r, kRingRadius - 3.0 * kPointNoise);
    EXPECT_LE(r, kRingRadius + 3.0 * kPointNoise);
  }
}

TEST(Gen2d, CheckerboardUsesOnlyOccupiedCells) {
  Rng rng(2);
  const Tensor x = gen_2d("checkerboard", 5000, rng);
  std::size_t seen[4][4] = {};
  for (std::size_t i = 0; i < 5000; ++i) {
    EXPECT_TRUE(checkerboard_cell_occupied(x.at(i, 0), x.at(i, 1)));
    EXPECT_GE(x.at(i, 0), -2.0);
    EXPECT_LT(x.at(i, 0), 2.0);
    ++seen[static_cast<int>(std::floor(x.at(i, 1))) + 2][static_cast<int>(std::floor(x.at(i, 0))) + 2];
  }
  std::size_t occupied = 0;
  for (auto& row : seen)
    for (std::size_t c : row) occupied += c > 0;
  EXPECT_EQ(occupied, 8u);
}

TEST(Gen2d, TwoMoonsFixture) {
  const auto rows = testing::read_fixture_rows("two_moons_seed7.csv");
  ASSERT_EQ(rows.size(), 4u);
  Rng rng(7);
  const Tensor x = gen_2d("two_moons", 4, rng);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(x.at(i, 0), std::stod(rows[i][0]));
    EXPECT_EQ(x.at(i, 1), std::stod(rows[i][1]));
  }
}

TEST(Gen2d, DeterministicUnderSeed) {
  for (const std::string& name : gen_2d_names()) {
    Rng a(9), b(9);
    EXPECT_EQ(gen_2d(name, 64, a), gen_2d(name, 64, b)) << name;
  }
}

TEST(Gen2d, UnknownNameListsValidNames) {
  Rng rng(3);
  try {
    gen_2d("spiral", 4, rng);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    const std::string what = e.what();
    for (const std::string& name : gen_2d_names()) EXPECT_NE(what.find(name), std::string::npos);
  }
}

// ---- patterns ----------------------------------------------------------

TEST(Pattern, ValuesInUnitInterval) {
  Rng rng(4);
  for (int label = 0; label < 3; ++label)
    for (int trial = 0; trial < 10; ++trial) {
      const Tensor img = gen_pattern(label, kThree, 32, 32, rng);
      for (double v : img.data()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
}

TEST(Pattern, SameSeedIsBitIdentical) {
  for (int label = 0; label < 3; ++label) {
    Rng a(5), b(5);
    EXPECT_EQ(gen_pattern(label, kThree, 32, 32, a), gen_pattern(label, kThree, 32, 32, b));
  }
}

TEST(Pattern, ConditioningLabelsRejected) {
  Rng rng(6);
  EXPECT_THROW(gen_pattern(kThree.null_id(), kThree, 8, 8, rng), std::invalid_argument);
  EXPECT_THROW(gen_pattern(kThree.negative_id(), kThree, 8, 8, rng), std::invalid_argument);
}

TEST(Pattern, StripeSpectralPeakLiesOnStripeAxis) {
  const std::size_t n = 32;
  Rng rng(3);
  const Tensor img = gen_pattern(0, kThree, n, n, rng);
  Rng replay(3);
  const StripeWave wave = draw_stripe_wave(n, replay);
  // True frequency in cycles per image along x and y.
  const double fx = std::cos(wave.angle) * static_cast<double>(n) / wave.period;
  const double fy = std::sin(wave.angle) * static_cast<double>(n) / wave.period;

  double mean = 0.0;
  for (double v : img.data()) mean += v;
  mean /= static_cast<double>(img.numel());
  double best = -1.0;
  int bx = 0, by = 0;
  const int half = static_cast<int>(n) / 2;
  for (int ky = -half + 1; ky < half; ++ky)
    for (int kx = -half + 1; kx < half; ++kx) {
      if (kx == 0 && ky == 0) continue;
      std::complex<double> acc = 0.0;
      for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
          const double phase = -2.0 * std::numbers::pi * (kx * static_cast<double>(x) + ky * static_cast<double>(y)) /
                               static_cast<double>(n);
          acc += (img.at(y, x) - mean) * std::polar(1.0, phase);
        }
      if (std::abs(acc) > best) {
        best = std::abs(acc);
        bx = kx;
        by = ky;
      }
    }
  // The peak and its conjugate are equivalent.
  const double direct = std::hypot(bx - fx, by - fy);
  const double mirrored = std::hypot(bx + fx, by + fy);
  EXPECT_LE(std::min(direct, mirrored), std::sqrt(2.0)) << "peak (" << bx << "," << by << ") vs ("
                                                         << fx << "," << fy << ")";
}

// ---- degradation -------------------------------------------------------

TEST(Degrade, TrivialParametersAreIdentity) {
  Rng rng(7);
  const Tensor hr = gen_pattern(2, kThree, 16, 16, rng);
  Rng noise(8);
  EXPECT_EQ(degrade(hr, {0.0, 1, 0.0, 0}, noise), hr);
}

TEST(Degrade, ConstantImageStaysConstant) {
  const Tensor hr = Tensor::full({16, 16}, 0.37);
  for (double sigma : {0.0, 0.7, 2.0})
    for (std::size_t k : {1u, 2u, 4u}) {
      Rng rng(9);
      const Tensor lr = degrade(hr, {sigma, k, 0.0, 0}, rng);
      EXPECT_EQ(lr.dim(0), 16 / k);
      for (double v : lr.data()) EXPECT_NEAR(v, 0.37, 1e-15);
    }
}

TEST(Degrade, RampBlockMeans) {
  Tensor ramp({8, 8});
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) ramp.at(y, x) = static_cast<double>(8 * y + x) / 63.0;
  Rng rng(10);
  const Tensor lr = degrade(ramp, {0.0, 4, 0.0, 0}, rng);
  ASSERT_EQ(lr.shape(), (Shape{2, 2}));
  // Block (by,bx) averages 8y+x over y in [4by,4by+4), x in [4bx,4bx+4): 8(4by+1.5) + 4bx+1.5.
  for (std::size_t by = 0; by < 2; ++by)
    for (std::size_t bx = 0; bx < 2; ++bx) {
      const double expected = (8.0 * (4.0 * by + 1.5) + 4.0 * bx + 1.5) / 63.0;
      EXPECT_NEAR(lr.at(by, bx), expected, 1e-15);
    }
}

TEST(Degrade, NonDivisibleScaleRejected) {
  Rng rng(11);
  EXPECT_THROW(degrade(Tensor({10, 10}), {0.0, 4, 0.0, 0}, rng), std::invalid_argument);
}

TEST(Degrade, SingleQuantizationLevelRejected) {
  EXPECT_THROW((DegradeParams{1.0, 4, 0.0, 1}).validate(), std::invalid_argument);
}

TEST(Degrade, IsNonExpansiveWithoutNoise) {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor a = gen_pattern(static_cast<int>(rng.index(3)), kThree, 16, 16, rng);
    const Tensor b = gen_pattern(static_cast<int>(rng.index(3)), kThree, 16, 16, rng);
    Rng r1(0), r2(0);
    const DegradeParams p{1.2, 4, 0.0, 0};
    EXPECT_LE(max_abs(degrade(a, p, r1) - degrade(b, p, r2)), max_abs(a - b) + 1e-15);
  }
}

TEST(Degrade, BlurAndBlockMeanPreserveMean) {
  Rng rng(13);
  for (int label = 0; label < 3; ++label) {
    const Tensor hr = gen_pattern(label, kThree, 32, 32, rng);
    Rng noise(0);
    const Tensor lr = degrade(hr, {1.5, 4, 0.0, 0}, noise);
    EXPECT_NEAR(mean(lr), mean(hr), 1e-12 * mean(hr));
  }
}

TEST(Degrade, NoiseOutputStaysClamped) {
  Rng rng(14);
  const Tensor hr = gen_pattern(1, kThree, 16, 16, rng);
  const Tensor lr = degrade(hr, {1.0, 4, 0.5, 0}, rng);
  for (double v : lr.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(SrPair, ReproducibleFromSeed) {
  const DegradeParams p;
  const SrPair a = make_sr_pair(1, 32, p, kThree, 99);
  const SrPair b = make_sr_pair(1, 32, p, kThree, 99);
  EXPECT_EQ(a.hr, b.hr);
  EXPECT_EQ(a.lr, b.lr);
  EXPECT_EQ(a.lr.shape(), (Shape{8, 8}));
  EXPECT_EQ(a.seed, 99u);
}

TEST(Latent, PixelRoundTrip) {
  Rng rng(15);
  const Tensor img = gen_pattern(2, kThree, 8, 8, rng);
  EXPECT_TRUE(testing::AllClose(latent_to_pixels(pixels_to_latent(img)), img, 0.0, 1e-15));
}

// ---- PGM -------------------------------------------------------------------

TEST(Pgm, RoundTripWithinQuantization) {
  const auto dir = testing::scratch_dir("pgm");
  Rng rng(16);
  const Tensor img = gen_pattern(0, kThree, 12, 20, rng);
  write_pgm(dir / "a.pgm", img);
  const Tensor back = read_pgm(dir / "a.pgm");
  ASSERT_EQ(back.shape(), img.shape());
  EXPECT_LE(max_abs(back - img), 0.5 / 255.0 + 1e-12);
}

// ---- tasks -------------------------------------------------------------

TEST(Task, Gen2dBatchIsUnconditional) {
  TaskConfig c;
  c.kind = TaskKind::gen2d;
  const Task task(c);
  Rng rng(17);
  const FlowBatch b = task.make_batch(32, rng, 0.5);
  EXPECT_EQ(b.size(), 32u);
  EXPECT_EQ(b.z0.shape(), b.z1.shape());
  EXPECT_EQ(b.z_lr, Tensor({32, 1}));
  for (int l : b.labels) EXPECT_EQ(l, 0);
}

TEST(Task, SrBatchShapes) {
  TaskConfig c;
  c.kind = TaskKind::toysr;
  c.hr_size = 16;
  const Task task(c);
  Rng rng(18);
  const FlowBatch b = task.make_batch(5, rng, 0.5);
  EXPECT_EQ(b.z1.shape(), (Shape{5, 256}));
  EXPECT_EQ(b.z0.shape(), b.z1.shape());
  EXPECT_EQ(b.z_lr.shape(), (Shape{5, 16}));
  for (int l : b.labels) EXPECT_EQ(kThree.role(l), LabelRole::content);
}

TEST(Task, TeacherBatchUsesReservedLabels) {
  TaskConfig c;
  c.kind = TaskKind::toysr;
  c.hr_size = 8;
  c.null_prob = 0.3;
  c.negative_prob = 0.3;
  const Task task(c);
  Rng rng(19);
  const FlowBatch b = task.make_teacher_batch(400, rng);
  std::size_t nulls = 0, negatives = 0;
  for (int l : b.labels) {
    nulls += l == kThree.null_id();
    negatives += l == kThree.negative_id();
  }
  EXPECT_GT(nulls, 80u);
  EXPECT_GT(negatives, 80u);
  for (const TimestepPair& p : b.times) EXPECT_EQ(p.s, p.t);
}

TEST(Task, SeededBatchFixture) {
  const auto rows = testing::read_fixture_rows("batch_seed11.csv");
  ASSERT_EQ(rows.size(), 2u);
  const Task task{TaskConfig{}};
  Rng rng(11);
  const FlowBatch b = task.make_batch(2, rng, 0.5);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(b.z0.at(i, 0), std::stod(rows[i][0]));
    EXPECT_EQ(b.z0.at(i, 1), std::stod(rows[i][1]));
    EXPECT_EQ(b.z1.at(i, 0), std::stod(rows[i][2]));
    EXPECT_EQ(b.z1.at(i, 1), std::stod(rows[i][3]));
    EXPECT_EQ(b.labels[i], std::stoi(rows[i][4]));
    EXPECT_EQ(b.times[i].t, std::stod(rows[i][5]));
    EXPECT_EQ(b.times[i].s, std::stod(rows[i][6]));
  }
}

TEST(Task, SrPairsUsePerIndexSeeds) {
  TaskConfig c;
  c.kind = TaskKind::toysr;
  c.hr_size = 8;
  const Task task(c);
  const auto pairs = task.sr_pairs(6, 1234);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_EQ(pairs[i].seed, Rng::derive(1234, i));
    const SrPair alone = make_sr_pair(pairs[i].label, 8, c.degrade, kThree, pairs[i].seed);
    EXPECT_EQ(alone.lr, pairs[i].lr);
  }
}

TEST(Task, ManifestHeader) {
  std::ostringstream os;
  write_sr_manifest(os, {}, DegradeParams{});
  EXPECT_EQ(os.str(), "seed,class,blur_sigma,scale,noise_sigma,quant_levels\n");
}

TEST(Task, InvalidConfigsRejected) {
  TaskConfig c;
  c.kind = TaskKind::toysr;
  c.hr_size = 30;
  EXPECT_THROW(Task{c}, std::invalid_argument);
  TaskConfig d;
  d.kind = TaskKind::gen2d;
  d.dist = "spiral";
  EXPECT_THROW(Task{d}, std::invalid_argument);
  EXPECT_THROW(parse_task_kind("images"), std::invalid_argument);
}

}  // namespace
}  // namespace mflow
