// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mflow {

using Shape = std::vector<std::size_t>;

/// Thrown when operand shapes do not conform. The message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of 64-bit floats.
///
/// The shape is fixed at construction. Element storage may be written through
/// `data()` while a tensor is being built (optimizer updates, generators); once
/// handed to a Graph it is treated as an immutable value.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double value);
  static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }
  static Tensor scalar(double value);
  static Tensor from(std::initializer_list<double> values);  // rank-1
  static Tensor eye(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& vec() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t row, std::size_t col) const;
  double& at(std::size_t row, std::size_t col);

  /// Value of a single-element tensor of any rank.
  double item() const;

  Tensor reshape(Shape shape) const&;
  Tensor reshape(Shape shape) &&;

  /// Rows [begin, end) of a rank-2 tensor.
  Tensor rows(std::size_t begin, std::size_t end) const;

  bool all_finite() const noexcept;
  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Plain value arithmetic, used outside of recorded graphs.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator*(double k, const Tensor& a);
Tensor operator*(const Tensor& a, double k);

/// a + k * b, elementwise, shapes must match.
Tensor axpy(const Tensor& a, double k, const Tensor& b);
double dot(const Tensor& a, const Tensor& b);
double squared_norm(const Tensor& a);
double max_abs(const Tensor& a);
double sum(const Tensor& a);
double mean(const Tensor& a);

/// Stack equally-shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);

namespace kernels {

// out[m,n] = a[m,k] * b[k,n]
void matmul(std::span<const double> a, std::span<const double> b,
            std::span<double> out, std::size_t m, std::size_t k, std::size_t n);
// out[m,k] += g[m,n] * b[k,n]^T
void matmul_nt_acc(std::span<const double> g, std::span<const double> b,
                   std::span<double> out, std::size_t m, std::size_t k,
                   std::size_t n);
// out[k,n] += a[m,k]^T * g[m,n]
void matmul_tn_acc(std::span<const double> a, std::span<const double> g,
                   std::span<double> out, std::size_t m, std::size_t k,
                   std::size_t n);

}  // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b);

}  // namespace mflow
