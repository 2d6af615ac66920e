// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mflow/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "mflow/parallel.hpp"

#ifdef MFLOW_HAVE_EIGEN
#include <Eigen/Core>
#endif

namespace mflow {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("tensor shape " + shape_str(shape_) + " holds " +
                     std::to_string(shape_numel(shape_)) + " values, got " +
                     std::to_string(data_.size()));
  }
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::from(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::eye(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape_));
  }
  return shape_[axis];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return data_[row * shape_.back() + col];
}

double& Tensor::at(std::size_t row, std::size_t col) {
  return data_[row * shape_.back() + col];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() needs a single-element tensor, got " + shape_str(shape_));
  }
  return data_[0];
}

Tensor Tensor::reshape(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshape(std::move(shape));
}

Tensor Tensor::reshape(Shape shape) && {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

Tensor Tensor::rows(std::size_t begin, std::size_t end) const {
  if (rank() != 2 || begin > end || end > shape_[0]) {
    throw ShapeError("rows(" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for shape " + shape_str(shape_));
  }
  const std::size_t cols = shape_[1];
  return Tensor({end - begin, cols},
                std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * cols),
                                    data_.begin() + static_cast<std::ptrdiff_t>(end * cols)));
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  }
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_same(a, b, op);
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(x[i], y[i]);
  return out;
}

}  // namespace

Tensor operator+(const Tensor& a, const Tensor& b) {
  return zip(a, b, "add", [](double x, double y) { return x + y; });
}
Tensor operator-(const Tensor& a, const Tensor& b) {
  return zip(a, b, "sub", [](double x, double y) { return x - y; });
}
Tensor operator*(const Tensor& a, const Tensor& b) {
  return zip(a, b, "mul", [](double x, double y) { return x * y; });
}
Tensor operator*(double k, const Tensor& a) {
  Tensor out = a;
  for (double& v : out.data()) v *= k;
  return out;
}
Tensor operator*(const Tensor& a, double k) { return k * a; }

Tensor axpy(const Tensor& a, double k, const Tensor& b) {
  return zip(a, b, "axpy", [k](double x, double y) { return x + k * y; });
}

double dot(const Tensor& a, const Tensor& b) {
  require_same(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) acc += a[i] * b[i];
  return acc;
}

double squared_norm(const Tensor& a) { return dot(a, a); }

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return acc;
}

double mean(const Tensor& a) {
  return a.numel() == 0 ? 0.0 : sum(a) / static_cast<double>(a.numel());
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack of zero tensors");
  Shape shape = items.front().shape();
  std::vector<double> data;
  data.reserve(items.size() * items.front().numel());
  for (const Tensor& t : items) {
    if (t.shape() != shape) {
      throw ShapeError("stack: shape mismatch " + shape_str(shape) + " vs " +
                       shape_str(t.shape()));
    }
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  shape.insert(shape.begin(), items.size());
  return Tensor(std::move(shape), std::move(data));
}

namespace kernels {

#ifdef MFLOW_HAVE_EIGEN

namespace {
using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstView = Eigen::Map<const RowMajor>;
using View = Eigen::Map<RowMajor>;
auto ix(std::size_t n) { return static_cast<Eigen::Index>(n); }
}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  View(out.data(), ix(m), ix(n)).noalias() =
      ConstView(a.data(), ix(m), ix(k)) * ConstView(b.data(), ix(k), ix(n));
}

void matmul_nt_acc(std::span<const double> g, std::span<const double> b,
                   std::span<double> out, std::size_t m, std::size_t k, std::size_t n) {
  View(out.data(), ix(m), ix(k)).noalias() +=
      ConstView(g.data(), ix(m), ix(n)) * ConstView(b.data(), ix(k), ix(n)).transpose();
}

void matmul_tn_acc(std::span<const double> a, std::span<const double> g,
                   std::span<double> out, std::size_t m, std::size_t k, std::size_t n) {
  View(out.data(), ix(k), ix(n)).noalias() +=
      ConstView(a.data(), ix(m), ix(k)).transpose() * ConstView(g.data(), ix(m), ix(n));
}

#else

namespace {
constexpr std::size_t kRowGrain = 16;
}

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> out,
            std::size_t m, std::size_t k, std::size_t n) {
  parallel_for(m, kRowGrain, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      double* o = out.data() + i * n;
      std::fill(o, o + n, 0.0);
      const double* ai = a.data() + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ai[p];
        if (av == 0.0) continue;
        const double* bp = b.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) o[j] += av * bp[j];
      }
    }
  });
}

void matmul_nt_acc(std::span<const double> g, std::span<const double> b,
                   std::span<double> out, std::size_t m, std::size_t k, std::size_t n) {
  parallel_for(m, kRowGrain, [&](std::size_t r0, std::size_t r1) {
    for (std::size_t i = r0; i < r1; ++i) {
      const double* gi = g.data() + i * n;
      double* o = out.data() + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double* bp = b.data() + p * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += gi[j] * bp[j];
        o[p] += acc;
      }
    }
  });
}

void matmul_tn_acc(std::span<const double> a, std::span<const double> g,
                   std::span<double> out, std::size_t m, std::size_t k, std::size_t n) {
  // Parallel over output rows p; each row sums over i in a fixed order.
  parallel_for(k, kRowGrain, [&](std::size_t p0, std::size_t p1) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* ai = a.data() + i * k;
      const double* gi = g.data() + i * n;
      for (std::size_t p = p0; p < p1; ++p) {
        const double av = ai[p];
        if (av == 0.0) continue;
        double* o = out.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) o[j] += av * gi[j];
      }
    }
  });
}

#endif  // MFLOW_HAVE_EIGEN

}  // namespace kernels

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor out({a.dim(0), b.dim(1)});
  kernels::matmul(a.data(), b.data(), out.data(), a.dim(0), a.dim(1), b.dim(1));
  return out;
}

}  // namespace mflow
