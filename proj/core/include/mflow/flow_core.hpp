// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mflow/autodiff.hpp"
#include "mflow/field_net.hpp"
#include "mflow/rng.hpp"
#include "mflow/tensor.hpp"

namespace mflow {

// ---- configuration -----------------------------------------------------

enum class CfgMode { gt, original_mf, teacher_null, teacher_neg };
enum class Metric { squared_l2, pseudo_huber };

const char* to_string(CfgMode mode);
CfgMode parse_cfg_mode(const std::string& name);
const char* to_string(Metric metric);
Metric parse_metric(const std::string& name);

/// How the instantaneous velocity used in the distillation target is built.
struct CfgConfig {
  CfgMode mode = CfgMode::teacher_neg;
  double w = 6.0;
  double kappa = 0.0;  // original_mf only

  /// w / (1 - kappa)
  double effective_scale() const { return w / (1.0 - kappa); }
  void validate() const;
  bool operator==(const CfgConfig&) const = default;
};

struct LossConfig {
  Metric metric = Metric::pseudo_huber;
  std::optional<double> huber_c;  // default 0.03 * sqrt(dim)
  double ratio_r = 0.5;           // fraction of pairs with s != t

  double huber_c_for(std::size_t dim) const;
  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

struct TimestepPair {
  double t = 0.0;
  double s = 0.0;
};

/// One training batch. z0 is noise, z1 data, both [B,D]; z_lr is [B,L].
struct FlowBatch {
  Tensor z0;
  Tensor z1;
  Tensor z_lr;
  std::vector<int> labels;
  std::vector<TimestepPair> times;

  std::size_t size() const { return labels.size(); }
  Tensor t_column() const;
  Tensor s_column() const;
};

// ---- model adapters ----------------------------------------------------
//
// Traced callables compute on the graph their inputs live on.

using TracedVelocity =
    std::function<Var(const Var& z, const Var& t, const Var& z_lr, std::span<const int> labels)>;
using TracedAverage = std::function<Var(const Var& z, const Var& t, const Var& s,
                                        const Var& z_lr, std::span<const int> labels)>;

/// Teacher bound to already-placed parameter nodes.
TracedVelocity traced_teacher(const FieldNet& net, std::span<const Var> params);
/// Teacher that places frozen parameters on the input's graph per call.
TracedVelocity traced_teacher(const FieldNet& net);
TracedAverage traced_student(const FieldNet& net, std::span<const Var> params);
TracedAverage traced_student(const FieldNet& net);

// ---- operations --------------------------------------------------------

/// (1 - t) z0 + t z1
Tensor interpolate(const Tensor& z0, const Tensor& z1, double t);
/// Row-wise interpolation with t given as a [B,1] column.
Tensor interpolate_rows(const Tensor& z0, const Tensor& z1, const Tensor& t);
/// x[i,:] * col[i] for a [B,D] tensor and a [B,1] column.
Tensor scale_rows(const Tensor& x, const Tensor& col);

/// mean_b || v(z_t, t | z_lr, c) - (z1 - z0) ||^2 with z_t interpolated at
/// batch.times[b].t.
Var rf_loss(Graph& graph, const TracedVelocity& velocity, const FlowBatch& batch);
double rf_loss(const FieldNet& teacher, const FlowBatch& batch);

/// t ~ U[0,1]; with probability ratio_r, s ~ U[t,1], otherwise s = t.
TimestepPair sample_timesteps(Rng& rng, double ratio_r);

/// Everything cfg_velocity may need. Only the members the mode reads have to
/// be set; a missing one raises std::invalid_argument.
struct CfgInputs {
  TracedVelocity teacher;
  TracedAverage student;
  Var z;
  Var t;
  Var z_lr;
  std::span<const int> labels;
  ConditionSpace conditions;
  std::optional<Var> z0;
  std::optional<Var> z1;
};

/// gt:           z1 - z0
/// teacher_null: v(c) + w (v(c) - v(null))
/// teacher_neg:  v(c) + w (v(c) - v(neg))
/// original_mf:  w (z1 - z0) + kappa u(z,t,t|c) + (1 - w - kappa) u(z,t,t|null)
Var cfg_velocity(const CfgInputs& in, const CfgConfig& cfg);

/// Tensor-level convenience wrapper (teacher/student frozen).
Tensor cfg_velocity(const FieldNet& teacher, const FieldNet* student, const Tensor& z,
                    const Tensor& t, const Tensor& z_lr, std::span<const int> labels,
                    const CfgConfig& cfg, const Tensor* z0 = nullptr,
                    const Tensor* z1 = nullptr);

/// v_inst + (s - t) * du/dt where du/dt is the JVP of the student at (z,t,s)
/// along the tangent (v_inst, 1, 0). The result is a constant (stop-gradient).
Tensor mfd_target(const TracedAverage& student, const Tensor& v_inst, const Tensor& z,
                  const Tensor& t, const Tensor& s, const Tensor& z_lr,
                  std::span<const int> labels);

/// Combines a forward-mode tangent of u with v_inst into the regression target.
Tensor mfd_target_from_tangent(const Tensor& v_inst, const Tensor& du_dt, const Tensor& t,
                               const Tensor& s);

/// Per-row distance under `metric`, returned as [B,1].
Var row_distance(const Var& a, const Var& b, Metric metric, double huber_c);

struct MfdLoss {
  Var loss;        // scalar, differentiable w.r.t. student parameters only
  Var prediction;  // u(z_t, t, s | z_lr, c)
  Tensor z_t;
  Tensor v_inst;
  Tensor target;
};

/// Distillation loss for one batch. A single student forward produces both
/// the prediction (recorded for backward) and du/dt (tangent channel).
/// `teacher` may be empty for modes gt and original_mf.
MfdLoss mfd_loss(Graph& graph, const TracedAverage& student, const TracedVelocity& teacher,
                 const FlowBatch& batch, const ConditionSpace& conditions,
                 const CfgConfig& cfg, const LossConfig& loss);

/// sqrt(||a - b||^2 + c^2) - c over all elements.
double pseudo_huber(const Tensor& a, const Tensor& b, double huber_c);

}  // namespace mflow
