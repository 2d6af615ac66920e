// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mflow/field_net.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_map>

namespace mflow {

const char* to_string(NetKind kind) {
  return kind == NetKind::teacher ? "teacher" : "student";
}

LabelRole ConditionSpace::role(int id) const {
  if (id >= 0 && static_cast<std::size_t>(id) < num_content) return LabelRole::content;
  if (id == null_id()) return LabelRole::null;
  if (id == negative_id()) return LabelRole::negative;
  throw std::out_of_range("unknown condition id " + std::to_string(id));
}

void NetConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("net config: " + m); };
  if (data_dim == 0) fail("data_dim must be positive");
  if (num_content == 0) fail("num_content must be positive");
  if (hidden == 0 || depth == 0 || embed_dim == 0) fail("hidden, depth, embed_dim must be positive");
  if (time_features < 2 || time_features % 2 != 0) fail("time_features must be even and >= 2");
  if (!(teacher_c_noise > 0.0)) fail("teacher_c_noise must be positive");
  if (!(time_rate_min > 0.0) || !(time_rate_max >= time_rate_min)) {
    fail("need 0 < time_rate_min <= time_rate_max");
  }
}

Tensor time_column(double t, std::size_t rows) { return Tensor::full({rows, 1}, t); }

// ---- TimeEmbedder ------------------------------------------------------

Var TimeEmbedder::raw_features(const Var& t) const {
  Graph& g = t.graph();
  const Var freq = g.constant(Tensor({1, frequencies.size()}, frequencies));
  const Var arg = matmul(scale(t, c_noise), freq);
  return concat({sin(arg), cos(arg)}, 1);
}

Var TimeEmbedder::forward(const Var& t, std::span<const Var> params) const {
  const Var h = silu(add_bias(matmul(raw_features(t), params[hidden.weight]), params[hidden.bias]));
  return add_bias(matmul(h, params[out.weight]), params[out.bias]);
}

// ---- FieldNet construction ----------------------------------------------

std::size_t FieldNet::add_param(std::string name, Tensor value) {
  params_.push_back({std::move(name), std::move(value)});
  return params_.size() - 1;
}

LinearRef FieldNet::add_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                               bool zero) {
  Tensor w({in, out});
  if (!zero) {
    const double std = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w.data()) v = std * rng.normal();
  }
  LinearRef ref;
  ref.weight = add_param(name + ".weight", std::move(w));
  ref.bias = add_param(name + ".bias", Tensor({out}));
  return ref;
}

namespace {

std::vector<double> base_frequencies(const NetConfig& c) {
  // Geometric rates in [rate_min, rate_max], expressed per unit of c_noise * t.
  const std::size_t k = c.time_features / 2;
  std::vector<double> f(k);
  for (std::size_t j = 0; j < k; ++j) {
    const double frac = k == 1 ? 0.0 : static_cast<double>(j) / static_cast<double>(k - 1);
    const double rate = c.time_rate_min * std::pow(c.time_rate_max / c.time_rate_min, frac);
    f[j] = rate / c.teacher_c_noise;
  }
  return f;
}

}  // namespace

FieldNet FieldNet::make_teacher(const NetConfig& config, Rng& rng) {
  config.validate();
  FieldNet net;
  net.kind_ = NetKind::teacher;
  net.config_ = config;
  const std::size_t e = config.embed_dim;

  net.t_embedder_.c_noise = config.teacher_c_noise;
  net.t_embedder_.frequencies = base_frequencies(config);
  net.t_embedder_.hidden = net.add_linear("t_embed.hidden", config.time_features, e, rng, false);
  net.t_embedder_.out = net.add_linear("t_embed.out", e, e, rng, false);

  Tensor table({config.conditions().table_rows(), e});
  for (double& v : table.data()) v = rng.normal();
  net.cond_table_ = net.add_param("cond_table", std::move(table));

  net.input_ = net.add_linear("trunk.in", config.data_dim + config.lr_dim + e, config.hidden, rng,
                              false);
  for (std::size_t l = 1; l < config.depth; ++l) {
    const std::string name = "trunk.h" + std::to_string(l);
    net.hidden_.push_back(net.add_linear(name, config.hidden, config.hidden, rng, false));
    Tensor inject({e, config.hidden});
    const double std = 1.0 / std::sqrt(static_cast<double>(e));
    for (double& v : inject.data()) v = std * rng.normal();
    net.emb_inject_.push_back(net.add_param(name + ".emb", std::move(inject)));
  }
  net.output_ = net.add_linear("trunk.out", config.hidden, config.data_dim, rng, true);
  net.skip_ = net.add_linear("trunk.skip", e, 1, rng, true);
  return net;
}

void FieldNet::add_student_time_branch() {
  kind_ = NetKind::student;
  // c_noise(t) = t; the old scale moves into the frequencies.
  for (double& f : t_embedder_.frequencies) f *= t_embedder_.c_noise;
  t_embedder_.c_noise = 1.0;

  TimeEmbedder s = t_embedder_;
  s.hidden.weight = add_param("s_embed.hidden.weight", params_[t_embedder_.hidden.weight].value);
  s.hidden.bias = add_param("s_embed.hidden.bias", params_[t_embedder_.hidden.bias].value);
  s.out.weight = add_param("s_embed.out.weight", Tensor(params_[t_embedder_.out.weight].value.shape()));
  s.out.bias = add_param("s_embed.out.bias", Tensor(params_[t_embedder_.out.bias].value.shape()));
  s_embedder_ = std::move(s);
}

FieldNet init_student_from_teacher(const FieldNet& teacher) {
  if (teacher.kind() != NetKind::teacher) {
    throw std::invalid_argument("init_student_from_teacher needs a teacher network");
  }
  FieldNet student = teacher;
  student.add_student_time_branch();
  return student;
}

FieldNet FieldNet::restore(NetKind kind, const NetConfig& config, std::vector<Param> params) {
  Rng scratch(0);
  FieldNet net = make_teacher(config, scratch);
  if (kind == NetKind::student) net.add_student_time_branch();
  std::unordered_map<std::string, Tensor*> slots;
  for (Param& p : net.params_) slots[p.name] = &p.value;
  if (params.size() != slots.size()) {
    throw std::invalid_argument("checkpoint has " + std::to_string(params.size()) +
                                " tensors, " + to_string(kind) + " expects " +
                                std::to_string(slots.size()));
  }
  for (Param& p : params) {
    auto it = slots.find(p.name);
    if (it == slots.end()) throw std::invalid_argument("unexpected parameter " + p.name);
    if (it->second->shape() != p.value.shape()) {
      throw ShapeError("parameter " + p.name + ": expected " + shape_str(it->second->shape()) +
                       ", got " + shape_str(p.value.shape()));
    }
    *it->second = std::move(p.value);
  }
  return net;
}

// ---- accessors ---------------------------------------------------------

std::size_t FieldNet::parameter_count() const {
  std::size_t n = 0;
  for (const Param& p : params_) n += p.value.numel();
  return n;
}

std::size_t FieldNet::embedder_parameter_count(const TimeEmbedder& e) const {
  return params_[e.hidden.weight].value.numel() + params_[e.hidden.bias].value.numel() +
         params_[e.out.weight].value.numel() + params_[e.out.bias].value.numel();
}

const Tensor& FieldNet::param(const std::string& name) const {
  for (const Param& p : params_)
    if (p.name == name) return p.value;
  throw std::out_of_range("no parameter named " + name);
}

Tensor& FieldNet::param(const std::string& name) {
  return const_cast<Tensor&>(static_cast<const FieldNet&>(*this).param(name));
}

std::vector<Var> FieldNet::bind(Graph& graph, bool trainable) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const Param& p : params_) vars.push_back(trainable ? graph.parameter(p.value) : graph.frozen(p.value));
  return vars;
}

std::uint64_t FieldNet::digest() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const Param& p : params_) {
    mix(p.name.data(), p.name.size());
    for (std::size_t d : p.value.shape()) mix(&d, sizeof d);
    mix(p.value.data().data(), p.value.numel() * sizeof(double));
  }
  return h;
}

// ---- forward -----------------------------------------------------------

Var FieldNet::forward(std::span<const Var> params, const Var& z, const Var& t, const Var* s,
                      const Var& z_lr, std::span<const int> labels) const {
  if ((s != nullptr) != (kind_ == NetKind::student)) {
    throw std::invalid_argument(std::string(to_string(kind_)) +
                                (s ? " takes no end time s" : " needs an end time s"));
  }
  Var emb = t_embedder_.forward(t, params);
  if (s) emb = add(emb, s_embedder_->forward(*s, params));
  emb = add(emb, embedding(params[cond_table_], labels));

  Var h = silu(add_bias(matmul(concat({z, z_lr, emb}, 1), params[input_.weight]), params[input_.bias]));
  for (std::size_t l = 0; l < hidden_.size(); ++l) {
    const Var pre = add_bias(matmul(h, params[hidden_[l].weight]), params[hidden_[l].bias]);
    h = silu(add(pre, matmul(emb, params[emb_inject_[l]])));
  }
  const Var out = add_bias(matmul(h, params[output_.weight]), params[output_.bias]);
  const Var gain = add_bias(matmul(emb, params[skip_.weight]), params[skip_.bias]);
  const Var ones = z.graph().constant(Tensor::ones({1, config_.data_dim}));
  return add(out, mul(matmul(gain, ones), z));
}

void FieldNet::check_inputs(const Tensor& z, const Tensor& t, const Tensor& z_lr,
                            std::span<const int> labels) const {
  if (z.rank() != 2 || z.dim(1) != config_.data_dim) {
    throw ShapeError("z must be [B," + std::to_string(config_.data_dim) + "], got " +
                     shape_str(z.shape()));
  }
  const std::size_t b = z.dim(0);
  if (t.shape() != Shape{b, 1}) {
    throw ShapeError("t must be " + shape_str({b, 1}) + ", got " + shape_str(t.shape()));
  }
  if (z_lr.shape() != Shape{b, config_.lr_dim}) {
    throw ShapeError("z_lr must be " + shape_str({b, config_.lr_dim}) + ", got " +
                     shape_str(z_lr.shape()));
  }
  if (labels.size() != b) {
    throw ShapeError("expected " + std::to_string(b) + " labels, got " +
                     std::to_string(labels.size()));
  }
  for (double v : t.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("t outside [0,1]: " + std::to_string(v));
  }
  const ConditionSpace cs = config_.conditions();
  for (int c : labels) cs.role(c);
}

Tensor FieldNet::teacher_forward(const Tensor& z, const Tensor& t, const Tensor& z_lr,
                                 std::span<const int> labels) const {
  if (kind_ != NetKind::teacher) throw std::invalid_argument("teacher_forward on a student network");
  check_inputs(z, t, z_lr, labels);
  Graph g;
  const auto p = bind(g, false);
  return forward(p, g.constant(z), g.constant(t), nullptr, g.constant(z_lr), labels).value();
}

Tensor FieldNet::teacher_forward(const Tensor& z, double t, const Tensor& z_lr,
                                 std::span<const int> labels) const {
  return teacher_forward(z, time_column(t, z.rank() == 2 ? z.dim(0) : 0), z_lr, labels);
}

Tensor FieldNet::student_forward(const Tensor& z, const Tensor& t, const Tensor& s,
                                 const Tensor& z_lr, std::span<const int> labels) const {
  if (kind_ != NetKind::student) throw std::invalid_argument("student_forward on a teacher network");
  check_inputs(z, t, z_lr, labels);
  if (s.shape() != t.shape()) {
    throw ShapeError("s must match t: " + shape_str(s.shape()) + " vs " + shape_str(t.shape()));
  }
  for (std::size_t i = 0; i < t.numel(); ++i) {
    if (!(s[i] >= t[i] && s[i] <= 1.0)) {
      throw std::invalid_argument("student needs t <= s <= 1, got t=" + std::to_string(t[i]) +
                                  " s=" + std::to_string(s[i]));
    }
  }
  Graph g;
  const auto p = bind(g, false);
  const Var sv = g.constant(s);
  return forward(p, g.constant(z), g.constant(t), &sv, g.constant(z_lr), labels).value();
}

Tensor FieldNet::student_forward(const Tensor& z, double t, double s, const Tensor& z_lr,
                                 std::span<const int> labels) const {
  const std::size_t b = z.rank() == 2 ? z.dim(0) : 0;
  return student_forward(z, time_column(t, b), time_column(s, b), z_lr, labels);
}

}  // namespace mflow
