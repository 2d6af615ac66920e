// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "mflow/analytic_flow.hpp"
#include "mflow/csv.hpp"
#include "mflow/sampler.hpp"
#include "test_util.hpp"

namespace mflow {
namespace {

const AnalyticFlow kShifted{{2.0, -1.0}, 0.5};
const AnalyticFlow kStandard{{0.0}, 1.0};

AverageFn oracle_average(const AnalyticFlow& flow) {
  return [flow](const Tensor& z, double t, double s) { return exact_avg_velocity(flow, z, t, s, 1024); };
}

VelocityFn oracle_velocity(const AnalyticFlow& flow) {
  return [flow](const Tensor& z, double t) { return exact_velocity(flow, z, t); };
}

NetConfig tiny_net() {
  NetConfig c;
  c.data_dim = 2;
  c.lr_dim = 1;
  c.num_content = 1;
  c.hidden = 8;
  c.depth = 2;
  c.embed_dim = 4;
  c.time_features = 4;
  return c;
}

FieldNet random_teacher(std::uint64_t seed) {
  Rng rng(seed);
  FieldNet t = FieldNet::make_teacher(tiny_net(), rng);
  for (Param& p : t.params())
    for (double& v : p.value.data()) v += 0.3 * rng.normal();
  return t;
}

// ---- grid and samplers -----------------------------------------------------

TEST(Grid, UniformIncludesEndpoints) {
  EXPECT_EQ(uniform_grid(1), (std::vector<double>{0.0, 1.0}));
  EXPECT_EQ(uniform_grid(4), (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}));
  EXPECT_THROW(uniform_grid(0), std::invalid_argument);
}

TEST(SampleAverage, ExactAverageVelocityTelescopes) {
  Rng rng(1);
  const Tensor z0 = rng.normal_tensor({64, 2});
  const Tensor reference = flow_map(kShifted, z0, 0.0, 1.0, 1024);
  for (std::size_t n : {1u, 2u, 4u, 8u}) {
    EXPECT_LT(max_abs(sample_average(oracle_average(kShifted), z0, n) - reference), 1e-6) << "N=" << n;
  }
}

TEST(SampleAverage, CustomGridTelescopes) {
  Rng rng(2);
  const Tensor z0 = rng.normal_tensor({8, 2});
  const std::vector<double> grid = {0.0, 0.1, 0.55, 0.6, 1.0};
  EXPECT_LT(max_abs(sample_average(oracle_average(kShifted), z0, grid) -
                    flow_map(kShifted, z0, 0.0, 1.0, 1024)),
            1e-6);
}

TEST(SampleAverage, ZeroFieldReturnsStart) {
  Rng rng(3);
  const Tensor z0 = rng.normal_tensor({5, 3});
  const AverageFn zero = [](const Tensor& z, double, double) { return Tensor(z.shape()); };
  for (std::size_t n : {1u, 2u, 7u}) EXPECT_EQ(sample_average(zero, z0, n), z0);
}

TEST(SampleAverage, OneStepIsSingleJump) {
  Rng rng(4);
  const Tensor z0 = rng.normal_tensor({3, 2});
  const Tensor u = exact_avg_velocity(kShifted, z0, 0.0, 1.0, 1024);
  EXPECT_EQ(sample_average(oracle_average(kShifted), z0, 1), z0 + u);
}

TEST(SampleEuler, FineGridMatchesFlowMap) {
  Rng rng(5);
  const Tensor z0 = rng.normal_tensor({16, 2});
  EXPECT_LT(max_abs(sample_euler(oracle_velocity(kShifted), z0, 512) -
                    flow_map(kShifted, z0, 0.0, 1.0, 1024)),
            1e-2);
}

TEST(SampleEuler, FirstOrderConvergence) {
  Rng rng(6);
  const Tensor z0 = rng.normal_tensor({4, 2});
  const Tensor reference = flow_map(kShifted, z0, 0.0, 1.0, 4096);
  std::vector<double> hs, errs;
  for (std::size_t n : {16u, 64u, 256u}) {
    hs.push_back(1.0 / static_cast<double>(n));
    errs.push_back(max_abs(sample_euler(oracle_velocity(kShifted), z0, n) - reference));
  }
  const double slope = loglog_slope(hs, errs);
  EXPECT_GE(slope, 0.8);
  EXPECT_LE(slope, 1.2);
}

TEST(SampleEuler, OneStepCollapsesSymmetricTask) {
  Rng rng(7);
  const Tensor z0 = rng.normal_tensor({10, 1});
  EXPECT_EQ(sample_euler(oracle_velocity(kStandard), z0, 1), Tensor({10, 1}));
}

TEST(SampleTeacher, ZeroGuidanceMatchesUnguided) {
  const FieldNet teacher = random_teacher(8);
  Rng rng(9);
  const Tensor z0 = rng.normal_tensor({6, 2});
  const std::vector<int> labels(6, 0);
  const Tensor plain = sample_teacher_euler(teacher, z0, Tensor({6, 1}), labels, 16);
  for (CfgMode mode : {CfgMode::teacher_null, CfgMode::teacher_neg}) {
    EXPECT_EQ(sample_teacher_euler(teacher, z0, Tensor({6, 1}), labels, 16, CfgConfig{mode, 0.0, 0.0}), plain);
  }
}

TEST(SampleTeacher, ModesWithoutTeacherFormRejected) {
  const FieldNet teacher = random_teacher(10);
  const std::vector<int> labels(1, 0);
  EXPECT_THROW(sample_teacher_euler(teacher, Tensor({1, 2}), Tensor({1, 1}), labels, 2,
                                    CfgConfig{CfgMode::original_mf, 1.0, 0.0}),
               std::invalid_argument);
  EXPECT_THROW(sample_student(teacher, Tensor({1, 2}), Tensor({1, 1}), labels, 1), std::invalid_argument);
}

TEST(SampleStudent, FreshStudentOneStepEqualsTeacherEulerOneStep) {
  const FieldNet teacher = random_teacher(11);
  const FieldNet student = init_student_from_teacher(teacher);
  Rng rng(12);
  const Tensor z0 = rng.normal_tensor({5, 2});
  const std::vector<int> labels(5, 0);
  EXPECT_TRUE(testing::AllClose(sample_student(student, z0, Tensor({5, 1}), labels, 1),
                                sample_teacher_euler(teacher, z0, Tensor({5, 1}), labels, 1), 1e-10,
                                1e-12));
}

// ---- metrics ---------------------------------------------------------------

TEST(Psnr, IdenticalImagesGiveInfinity) {
  const Tensor a = Tensor::full({4, 4}, 0.3);
  EXPECT_EQ(psnr(a, a), std::numeric_limits<double>::infinity());
  EXPECT_EQ(format_double(psnr(a, a)), "inf");
}

TEST(Psnr, UniformOffsetOfOneTenthIsTwentyDecibels) {
  const Tensor a = Tensor::full({4, 4}, 0.3);
  const Tensor b = Tensor::full({4, 4}, 0.4);
  EXPECT_NEAR(psnr(a, b), 20.0, 1e-12);
}

TEST(Psnr, Symmetric) {
  Rng rng(13);
  const Tensor a = rng.uniform_tensor({8, 8}, 0.0, 1.0);
  const Tensor b = rng.uniform_tensor({8, 8}, 0.0, 1.0);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
}

TEST(Psnr, MatchesNumpyFixture) {
  const auto rows = testing::read_fixture_rows("psnr_pair.csv");
  ASSERT_EQ(rows.size(), 16u);
  Tensor a({4, 4}), b({4, 4});
  for (std::size_t i = 0; i < 16; ++i) {
    a[i] = std::stod(rows[i][0]);
    b[i] = std::stod(rows[i][1]);
  }
  EXPECT_NEAR(psnr(a, b), std::stod(rows[0][2]), 1e-10);
}

TEST(Psnr, ShapeMismatchRaises) {
  EXPECT_THROW(psnr(Tensor({2, 2}), Tensor({4})), ShapeError);
}

TEST(MomentDistance, ExactSamplesAreClose) {
  Rng rng(14);
  const std::size_t n = 10000;
  Tensor x = rng.normal_tensor({n, 2});
  for (std::size_t i = 0; i < x.numel(); ++i) x[i] = kShifted.mu[i % 2] + kShifted.sigma * x[i];
  const MomentDistance d = moment_distance(x, kShifted);
  EXPECT_LT(d.mean_err, 0.05);
  EXPECT_LT(d.cov_err, 0.1 * kShifted.sigma * kShifted.sigma);
}

TEST(MomentDistance, RepeatedPointHasZeroCovariance) {
  const Tensor x({5, 2}, {1, 2, 1, 2, 1, 2, 1, 2, 1, 2});
  const MomentDistance d = moment_distance(x, kShifted);
  const double var = kShifted.sigma * kShifted.sigma;
  EXPECT_EQ(d.cov_err, std::sqrt(2.0 * var * var));
  EXPECT_DOUBLE_EQ(d.mean_err, std::hypot(1.0 - 2.0, 2.0 + 1.0));
}

TEST(MomentDistance, StandardNormalMatchesStandardFlow) {
  Rng rng(15);
  const MomentDistance d = moment_distance(rng.normal_tensor({20000, 1}), kStandard);
  EXPECT_LT(d.mean_err, 0.03);
  EXPECT_LT(d.cov_err, 0.03);
}

TEST(MomentDistance, NeedsTwoSamples) {
  EXPECT_THROW(moment_distance(Tensor({1, 2}), kShifted), std::invalid_argument);
  EXPECT_THROW(moment_distance(Tensor({4, 3}), kShifted), ShapeError);
}

TEST(EnergyDistance, KnownValues) {
  EXPECT_DOUBLE_EQ(energy_distance(Tensor({1, 1}, {0.0}), Tensor({1, 1}, {1.0})), 2.0);
  Rng rng(16);
  const Tensor x = rng.normal_tensor({50, 2});
  EXPECT_NEAR(energy_distance(x, x), 0.0, 1e-12);
  EXPECT_GT(energy_distance(x, x + Tensor::full({50, 2}, 1.0)), 0.5);
}

TEST(HfEnergy, ConstantImageHasNone) {
  EXPECT_NEAR(hf_energy(Tensor::full({8, 8}, 0.6)), 0.0, 1e-30);
  Tensor checker({8, 8});
  for (std::size_t i = 0; i < 64; ++i) checker[i] = ((i / 8 + i % 8) % 2) ? 1.0 : 0.0;
  EXPECT_GT(hf_energy(checker), hf_energy(gaussian_blur(checker, 1.0)));
}

TEST(EvaluateSr, UpsampledInputScoresAsBaseline) {
  TaskConfig tc;
  tc.kind = TaskKind::toysr;
  tc.hr_size = 16;
  const Task task(tc);
  const SrProbe probe = make_sr_probe(task, 6, 77);
  std::vector<Tensor> rows;
  for (const SrPair& p : probe.pairs) {
    rows.push_back(pixels_to_latent(upsample_nearest(p.lr, 4)).reshape({256}));
  }
  const SrEval e = evaluate_sr(probe, stack(rows), 16);
  EXPECT_EQ(e.n_pairs, 6u);
  EXPECT_NEAR(e.psnr, e.baseline_psnr, 1e-9);
}

// ---- sweep -------------------------------------------------------------------

TEST(Sweep, SingleStepCountGivesOneEvaluation) {
  const Task task{TaskConfig{}};
  const FieldNet student = init_student_from_teacher(random_teacher(17));
  const std::vector<std::size_t> steps = {1};
  const auto rows = steps_sweep(student, task, steps, 200, 5);
  ASSERT_EQ(rows.size(), 3u);
  for (const SweepRow& r : rows) {
    EXPECT_EQ(r.steps, 1u);
    EXPECT_EQ(r.n_samples, 200u);
    EXPECT_EQ(r.seed, 5u);
  }
  EXPECT_EQ(rows[0].metric, "mean_err");
  EXPECT_EQ(rows[1].metric, "cov_err");
  EXPECT_EQ(rows[2].metric, "energy_distance");
}

TEST(Sweep, ExactOracleMetricsConstantAcrossSteps) {
  const Task task{TaskConfig{}};
  const GenProbe probe = make_gen_probe(task, 2000, 21);
  const AnalyticFlow flow = task.config().analytic();
  std::vector<GenEval> evals;
  for (std::size_t n : {1u, 2u, 4u, 8u}) {
    evals.push_back(evaluate_gen(task, sample_average(oracle_average(flow), probe.z0, n), 21));
  }
  for (const GenEval& e : evals) {
    EXPECT_NEAR(e.moments->mean_err, evals[0].moments->mean_err, 1e-6);
    EXPECT_NEAR(e.moments->cov_err, evals[0].moments->cov_err, 1e-6);
    EXPECT_NEAR(e.energy, evals[0].energy, 1e-6);
  }
}

TEST(Sweep, CsvHeaderMatchesGolden) {
  std::ostringstream os;
  const std::vector<SweepRow> rows = {{2, "psnr", 24.5, 200, 9}};
  write_sweep_csv(os, rows);
  std::ifstream golden(testing::fixture_path("sweep_header.csv"));
  std::string expected;
  std::getline(golden, expected);
  const std::string text = os.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), expected);
  EXPECT_EQ(text.substr(text.find('\n') + 1), "2,psnr,24.5,200,9\n");
}

}  // namespace
}  // namespace mflow
