// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mflow/flow_core.hpp"

#include <cmath>
#include <stdexcept>

namespace mflow {

// ---- configuration -----------------------------------------------------

const char* to_string(CfgMode mode) {
  switch (mode) {
    case CfgMode::gt: return "gt";
    case CfgMode::original_mf: return "original_mf";
    case CfgMode::teacher_null: return "teacher_null";
    case CfgMode::teacher_neg: return "teacher_neg";
  }
  return "?";
}

CfgMode parse_cfg_mode(const std::string& name) {
  if (name == "gt") return CfgMode::gt;
  if (name == "original_mf") return CfgMode::original_mf;
  if (name == "teacher_null") return CfgMode::teacher_null;
  if (name == "teacher_neg") return CfgMode::teacher_neg;
  throw std::invalid_argument("unknown cfg mode '" + name +
                              "' (expected gt | original_mf | teacher_null | teacher_neg)");
}

const char* to_string(Metric metric) {
  return metric == Metric::squared_l2 ? "squared_l2" : "pseudo_huber";
}

Metric parse_metric(const std::string& name) {
  if (name == "squared_l2") return Metric::squared_l2;
  if (name == "pseudo_huber") return Metric::pseudo_huber;
  throw std::invalid_argument("unknown metric '" + name + "' (expected squared_l2 | pseudo_huber)");
}

void CfgConfig::validate() const {
  if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("cfg.w must be finite and >= 0");
  if (!(kappa >= 0.0 && kappa < 1.0)) throw std::invalid_argument("cfg.kappa must lie in [0,1)");
  if (!std::isfinite(effective_scale())) throw std::invalid_argument("cfg effective scale not finite");
}

double LossConfig::huber_c_for(std::size_t dim) const {
  return huber_c ? *huber_c : 0.03 * std::sqrt(static_cast<double>(dim));
}

void LossConfig::validate() const {
  if (huber_c && !(*huber_c > 0.0)) throw std::invalid_argument("loss.huber_c must be > 0");
  if (!(ratio_r >= 0.0 && ratio_r <= 1.0)) throw std::invalid_argument("loss.ratio_r must lie in [0,1]");
}

Tensor FlowBatch::t_column() const {
  Tensor col({times.size(), 1});
  for (std::size_t i = 0; i < times.size(); ++i) col[i] = times[i].t;
  return col;
}

Tensor FlowBatch::s_column() const {
  Tensor col({times.size(), 1});
  for (std::size_t i = 0; i < times.size(); ++i) col[i] = times[i].s;
  return col;
}

// ---- adapters ----------------------------------------------------------

TracedVelocity traced_teacher(const FieldNet& net, std::span<const Var> params) {
  return [&net, params](const Var& z, const Var& t, const Var& z_lr, std::span<const int> labels) {
    return net.forward(params, z, t, nullptr, z_lr, labels);
  };
}

TracedVelocity traced_teacher(const FieldNet& net) {
  return [&net](const Var& z, const Var& t, const Var& z_lr, std::span<const int> labels) {
    const auto params = net.bind(z.graph(), false);
    return net.forward(params, z, t, nullptr, z_lr, labels);
  };
}

TracedAverage traced_student(const FieldNet& net, std::span<const Var> params) {
  return [&net, params](const Var& z, const Var& t, const Var& s, const Var& z_lr,
                        std::span<const int> labels) {
    return net.forward(params, z, t, &s, z_lr, labels);
  };
}

TracedAverage traced_student(const FieldNet& net) {
  return [&net](const Var& z, const Var& t, const Var& s, const Var& z_lr,
                std::span<const int> labels) {
    const auto params = net.bind(z.graph(), false);
    return net.forward(params, z, t, &s, z_lr, labels);
  };
}

// ---- interpolation -----------------------------------------------------

Tensor interpolate(const Tensor& z0, const Tensor& z1, double t) {
  if (z0.shape() != z1.shape()) {
    throw ShapeError("interpolate: shape mismatch " + shape_str(z0.shape()) + " vs " +
                     shape_str(z1.shape()));
  }
  Tensor out(z0.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (1.0 - t) * z0[i] + t * z1[i];
  return out;
}

Tensor interpolate_rows(const Tensor& z0, const Tensor& z1, const Tensor& t) {
  if (z0.shape() != z1.shape() || z0.rank() != 2 || t.shape() != Shape{z0.dim(0), 1}) {
    throw ShapeError("interpolate_rows: shapes " + shape_str(z0.shape()) + ", " +
                     shape_str(z1.shape()) + ", t " + shape_str(t.shape()));
  }
  const std::size_t d = z0.dim(1);
  Tensor out(z0.shape());
  for (std::size_t i = 0; i < z0.dim(0); ++i) {
    const double ti = t[i];
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t k = i * d + j;
      out[k] = (1.0 - ti) * z0[k] + ti * z1[k];
    }
  }
  return out;
}

Tensor scale_rows(const Tensor& x, const Tensor& col) {
  if (x.rank() != 2 || col.shape() != Shape{x.dim(0), 1}) {
    throw ShapeError("scale_rows: shapes " + shape_str(x.shape()) + " and " + shape_str(col.shape()));
  }
  const std::size_t d = x.dim(1);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.dim(0); ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = col[i] * x[i * d + j];
  return out;
}

// ---- rectified-flow loss -----------------------------------------------

Var rf_loss(Graph& graph, const TracedVelocity& velocity, const FlowBatch& batch) {
  const Tensor t = batch.t_column();
  const Var z_t = graph.constant(interpolate_rows(batch.z0, batch.z1, t));
  const Var target = graph.constant(batch.z1 - batch.z0);
  const Var v = velocity(z_t, graph.constant(t), graph.constant(batch.z_lr), batch.labels);
  return mean(row_sum(square(sub(v, target))));
}

double rf_loss(const FieldNet& teacher, const FlowBatch& batch) {
  Graph g;
  return rf_loss(g, traced_teacher(teacher), batch).value().item();
}

TimestepPair sample_timesteps(Rng& rng, double ratio_r) {
  if (!(ratio_r >= 0.0 && ratio_r <= 1.0)) {
    throw std::invalid_argument("ratio_r must lie in [0,1]");
  }
  TimestepPair p;
  p.t = rng.uniform();
  p.s = p.t;
  if (rng.uniform() < ratio_r) p.s = rng.uniform(p.t, 1.0);
  return p;
}

// ---- guidance ----------------------------------------------------------

Var cfg_velocity(const CfgInputs& in, const CfgConfig& cfg) {
  cfg.validate();
  auto need = [&](bool ok, const char* what) {
    if (!ok) {
      throw std::invalid_argument(std::string("cfg mode ") + to_string(cfg.mode) + " needs " + what);
    }
  };
  const std::size_t b = in.labels.size();
  switch (cfg.mode) {
    case CfgMode::gt: {
      need(in.z0 && in.z1, "z0 and z1");
      return sub(*in.z1, *in.z0);
    }
    case CfgMode::teacher_null:
    case CfgMode::teacher_neg: {
      need(static_cast<bool>(in.teacher), "a teacher");
      const int other = cfg.mode == CfgMode::teacher_null ? in.conditions.null_id()
                                                          : in.conditions.negative_id();
      const std::vector<int> other_labels(b, other);
      const Var vc = in.teacher(in.z, in.t, in.z_lr, in.labels);
      const Var vo = in.teacher(in.z, in.t, in.z_lr, other_labels);
      return add(vc, scale(sub(vc, vo), cfg.w));
    }
    case CfgMode::original_mf: {
      need(static_cast<bool>(in.student), "the student");
      need(in.z0 && in.z1, "z0 and z1");
      const std::vector<int> null_labels(b, in.conditions.null_id());
      const Var uc = in.student(in.z, in.t, in.t, in.z_lr, in.labels);
      const Var un = in.student(in.z, in.t, in.t, in.z_lr, null_labels);
      const Var gt = sub(*in.z1, *in.z0);
      return add(add(scale(gt, cfg.w), scale(uc, cfg.kappa)), scale(un, 1.0 - cfg.w - cfg.kappa));
    }
  }
  throw std::logic_error("unreachable cfg mode");
}

Tensor cfg_velocity(const FieldNet& teacher, const FieldNet* student, const Tensor& z,
                    const Tensor& t, const Tensor& z_lr, std::span<const int> labels,
                    const CfgConfig& cfg, const Tensor* z0, const Tensor* z1) {
  Graph g;
  CfgInputs in;
  in.teacher = traced_teacher(teacher);
  if (student) in.student = traced_student(*student);
  in.z = g.constant(z);
  in.t = g.constant(t);
  in.z_lr = g.constant(z_lr);
  in.labels = labels;
  in.conditions = teacher.config().conditions();
  if (z0) in.z0 = g.constant(*z0);
  if (z1) in.z1 = g.constant(*z1);
  return cfg_velocity(in, cfg).value();
}

// ---- distillation target and loss ----------------------------------------

Tensor mfd_target_from_tangent(const Tensor& v_inst, const Tensor& du_dt, const Tensor& t,
                               const Tensor& s) {
  return v_inst + scale_rows(du_dt, s - t);
}

Tensor mfd_target(const TracedAverage& student, const Tensor& v_inst, const Tensor& z,
                  const Tensor& t, const Tensor& s, const Tensor& z_lr,
                  std::span<const int> labels) {
  Graph g;
  const Var zv = g.constant(z, v_inst);
  const Var tv = g.constant(t, Tensor::ones(t.shape()));
  const Var sv = g.constant(s);
  const Var u = student(zv, tv, sv, g.constant(z_lr), labels);
  return mfd_target_from_tangent(v_inst, u.tangent_or_zero(), t, s);
}

Var row_distance(const Var& a, const Var& b, Metric metric, double huber_c) {
  const Var sq = row_sum(square(sub(a, b)));
  if (metric == Metric::squared_l2) return sq;
  return add_scalar(sqrt(add_scalar(sq, huber_c * huber_c)), -huber_c);
}

MfdLoss mfd_loss(Graph& graph, const TracedAverage& student, const TracedVelocity& teacher,
                 const FlowBatch& batch, const ConditionSpace& conditions, const CfgConfig& cfg,
                 const LossConfig& loss) {
  loss.validate();
  const Tensor t = batch.t_column();
  const Tensor s = batch.s_column();
  MfdLoss out;
  out.z_t = interpolate_rows(batch.z0, batch.z1, t);

  const Var z_lr = graph.constant(batch.z_lr);
  CfgInputs in;
  in.teacher = teacher;
  in.student = student;
  in.z = graph.constant(out.z_t);
  in.t = graph.constant(t);
  in.z_lr = z_lr;
  in.labels = batch.labels;
  in.conditions = conditions;
  in.z0 = graph.constant(batch.z0);
  in.z1 = graph.constant(batch.z1);
  out.v_inst = stop_gradient(cfg_velocity(in, cfg)).value();

  // Tangent (v_inst, 1, 0) over (z, t, s).
  const Var z = graph.constant(out.z_t, out.v_inst);
  const Var tv = graph.constant(t, Tensor::ones(t.shape()));
  const Var sv = graph.constant(s);
  out.prediction = student(z, tv, sv, z_lr, batch.labels);
  out.target = mfd_target_from_tangent(out.v_inst, out.prediction.tangent_or_zero(), t, s);

  const double c = loss.huber_c_for(batch.z1.dim(1));
  out.loss = mean(row_distance(out.prediction, graph.constant(out.target), loss.metric, c));
  return out;
}

double pseudo_huber(const Tensor& a, const Tensor& b, double huber_c) {
  if (!(huber_c > 0.0)) throw std::invalid_argument("pseudo_huber needs huber_c > 0");
  const double sq = squared_norm(a - b);
  return std::sqrt(sq + huber_c * huber_c) - huber_c;
}

}  // namespace mflow
