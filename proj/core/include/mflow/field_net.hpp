// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mflow/autodiff.hpp"
#include "mflow/rng.hpp"
#include "mflow/tensor.hpp"

namespace mflow {

enum class NetKind { teacher, student };
enum class LabelRole { content, null, negative };

const char* to_string(NetKind kind);

/// Label layout: content ids are 0..num_content-1, followed by one null id
/// and one negative id.
struct ConditionSpace {
  std::size_t num_content = 1;

  int null_id() const { return static_cast<int>(num_content); }
  int negative_id() const { return static_cast<int>(num_content) + 1; }
  std::size_t table_rows() const { return num_content + 2; }
  LabelRole role(int id) const;  // throws std::out_of_range for unknown ids
};

struct NetConfig {
  std::size_t data_dim = 2;
  std::size_t lr_dim = 1;
  std::size_t num_content = 1;
  std::size_t hidden = 128;
  std::size_t depth = 3;
  std::size_t embed_dim = 64;
  std::size_t time_features = 64;  // sinusoid width, must be even
  double teacher_c_noise = 1000.0;
  // Angular rates (radians per unit t) of the slowest and fastest sinusoid.
  double time_rate_min = 1.0;
  double time_rate_max = 32.0;

  ConditionSpace conditions() const { return {num_content}; }
  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

struct Param {
  std::string name;
  Tensor value;
};

/// Index pair into a FieldNet's parameter list.
struct LinearRef {
  std::size_t weight = 0;  // [in, out]
  std::size_t bias = 0;    // [out]
};

/// Sinusoidal features of c_noise * t followed by a two-layer projection.
struct TimeEmbedder {
  double c_noise = 1.0;
  std::vector<double> frequencies;  // per unit of c_noise * t
  LinearRef hidden;
  LinearRef out;

  std::size_t feature_width() const { return 2 * frequencies.size(); }
  /// [B,1] -> [B, 2K] as [sin(c t f_k) ..., cos(c t f_k) ...].
  Var raw_features(const Var& t) const;
  Var forward(const Var& t, std::span<const Var> params) const;
};

/// Teacher v(z, t | z_lr, c) or student u(z, t, s | z_lr, c).
///
/// Trunk: e = time_emb(t) [+ s_emb(s)] + cond_emb(c);
///        h = silu(W0 [z, z_lr, e] + b0);
///        h = silu(Wl h + bl + Pl e) for each further layer;
///        out = Wout h + bout + (ws . e + bs) z
/// The output layer and the scalar skip gain are zero-initialized.
class FieldNet {
 public:
  static FieldNet make_teacher(const NetConfig& config, Rng& rng);
  /// Rebuilds the structure for `kind` and fills it from named tensors.
  static FieldNet restore(NetKind kind, const NetConfig& config, std::vector<Param> params);

  NetKind kind() const noexcept { return kind_; }
  const NetConfig& config() const noexcept { return config_; }
  const TimeEmbedder& t_embedder() const noexcept { return t_embedder_; }
  const std::optional<TimeEmbedder>& s_embedder() const noexcept { return s_embedder_; }

  std::vector<Param>& params() noexcept { return params_; }
  const std::vector<Param>& params() const noexcept { return params_; }
  std::size_t parameter_count() const;
  std::size_t embedder_parameter_count(const TimeEmbedder& e) const;
  const Tensor& param(const std::string& name) const;
  Tensor& param(const std::string& name);

  /// Puts every parameter on `graph`, trainable or frozen.
  std::vector<Var> bind(Graph& graph, bool trainable) const;

  /// Traced forward. `s` must be present exactly for students. z: [B,D],
  /// t and s: [B,1], z_lr: [B,L], one label per row.
  Var forward(std::span<const Var> params, const Var& z, const Var& t, const Var* s,
              const Var& z_lr, std::span<const int> labels) const;

  Tensor teacher_forward(const Tensor& z, const Tensor& t, const Tensor& z_lr,
                         std::span<const int> labels) const;
  Tensor teacher_forward(const Tensor& z, double t, const Tensor& z_lr,
                         std::span<const int> labels) const;
  Tensor student_forward(const Tensor& z, const Tensor& t, const Tensor& s,
                         const Tensor& z_lr, std::span<const int> labels) const;
  Tensor student_forward(const Tensor& z, double t, double s, const Tensor& z_lr,
                         std::span<const int> labels) const;

  /// FNV-1a over names, shapes and raw parameter bytes.
  std::uint64_t digest() const;

 private:
  friend FieldNet init_student_from_teacher(const FieldNet& teacher);

  void add_student_time_branch();

  std::size_t add_param(std::string name, Tensor value);
  LinearRef add_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                       bool zero);
  void check_inputs(const Tensor& z, const Tensor& t, const Tensor& z_lr,
                    std::span<const int> labels) const;

  NetKind kind_ = NetKind::teacher;
  NetConfig config_;
  std::vector<Param> params_;
  TimeEmbedder t_embedder_;
  std::optional<TimeEmbedder> s_embedder_;
  std::size_t cond_table_ = 0;
  LinearRef input_;
  std::vector<LinearRef> hidden_;
  std::vector<std::size_t> emb_inject_;
  LinearRef skip_;
  LinearRef output_;
};

/// Copies all teacher weights, adds an s-embedder with the t-embedder's
/// structure whose output projection is zero, and moves the time scale into
/// the frequencies so the student's c_noise is 1 while u(z,t,s) == v(z,t).
FieldNet init_student_from_teacher(const FieldNet& teacher);

/// Column of `t` repeated for a batch of `rows`.
Tensor time_column(double t, std::size_t rows);

}  // namespace mflow
