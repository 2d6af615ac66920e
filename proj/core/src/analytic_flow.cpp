// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "mflow/analytic_flow.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

#include "mflow/csv.hpp"

namespace mflow {

void AnalyticFlow::validate() const {
  if (mu.empty()) throw std::invalid_argument("analytic flow needs dim >= 1");
  if (!(sigma > 0.0)) throw std::invalid_argument("analytic flow needs sigma > 0");
}

double AnalyticFlow::variance(double t) const {
  return (1.0 - t) * (1.0 - t) + t * t * sigma * sigma;
}

double AnalyticFlow::slope(double t) const {
  return (t * sigma * sigma - (1.0 - t)) / variance(t);
}

namespace {

void check_rows(const AnalyticFlow& flow, const Tensor& x) {
  if (x.rank() == 0 || x.shape().back() != flow.dim() || x.rank() > 2) {
    throw ShapeError("analytic flow of dim " + std::to_string(flow.dim()) +
                     " cannot take x of shape " + shape_str(x.shape()));
  }
}

}  // namespace

Tensor exact_velocity(const AnalyticFlow& flow, const Tensor& x, double t) {
  check_rows(flow, x);
  const std::size_t d = flow.dim();
  const double k = flow.slope(t);
  Tensor v(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double m = flow.mu[i % d];
    v[i] = m + k * (x[i] - t * m);
  }
  return v;
}

Tensor integrate(const AnalyticFlow& flow, const Tensor& x, double t, double s,
                 std::size_t steps) {
  if (steps == 0) throw std::invalid_argument("integrate needs steps >= 1");
  check_rows(flow, x);
  if (s == t) return x;
  const double h = (s - t) / static_cast<double>(steps);
  Tensor y = x;
  for (std::size_t n = 0; n < steps; ++n) {
    const double tn = t + h * static_cast<double>(n);
    const Tensor k1 = exact_velocity(flow, y, tn);
    const Tensor k2 = exact_velocity(flow, axpy(y, 0.5 * h, k1), tn + 0.5 * h);
    const Tensor k3 = exact_velocity(flow, axpy(y, 0.5 * h, k2), tn + 0.5 * h);
    const Tensor k4 = exact_velocity(flow, axpy(y, h, k3), tn + h);
    for (std::size_t i = 0; i < y.numel(); ++i) {
      y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
  }
  return y;
}

Tensor flow_map(const AnalyticFlow& flow, const Tensor& x, double t, double s,
                std::size_t steps) {
  if (s < t) throw std::invalid_argument("flow_map needs t <= s");
  return integrate(flow, x, t, s, steps);
}

Tensor exact_avg_velocity(const AnalyticFlow& flow, const Tensor& x, double t, double s,
                          std::size_t steps) {
  if (s < t) throw std::invalid_argument("exact_avg_velocity needs t <= s");
  if (s == t) return exact_velocity(flow, x, t);
  return (1.0 / (s - t)) * (flow_map(flow, x, t, s, steps) - x);
}

namespace {

// Chord slope that tolerates a start time slightly past s or before 0, as
// needed by the central difference.
Tensor chord(const AnalyticFlow& flow, const Tensor& x, double a, double s, std::size_t steps) {
  return (1.0 / (s - a)) * (integrate(flow, x, a, s, steps) - x);
}

}  // namespace

std::vector<ResidualCell> identity_residual_grid(const AnalyticFlow& flow,
                                                 std::span<const double> t_grid,
                                                 std::span<const double> s_grid,
                                                 const Tensor& probes,
                                                 const ResidualOptions& options) {
  flow.validate();
  check_rows(flow, probes);
  const double h = options.fd_step;
  std::vector<ResidualCell> cells;
  for (double t : t_grid) {
    for (double s : s_grid) {
      ResidualCell cell{t, s, 0.0, 0.0, false};
      if (!(s > t)) {
        cell.skipped = true;
        cells.push_back(cell);
        continue;
      }
      const Tensor u = chord(flow, probes, t, s, options.steps);
      const Tensor v = exact_velocity(flow, probes, t);
      // Points on the same trajectory at t +- h.
      const Tensor xp = integrate(flow, probes, t, t + h, 4);
      const Tensor xm = integrate(flow, probes, t, t - h, 4);
      const Tensor up = chord(flow, xp, t + h, s, options.steps);
      const Tensor um = chord(flow, xm, t - h, s, options.steps);
      double acc = 0.0;
      for (std::size_t i = 0; i < u.numel(); ++i) {
        const double du = (up[i] - um[i]) / (2.0 * h);
        const double r = std::abs(u[i] - v[i] - (s - t) * du);
        cell.max_resid = std::max(cell.max_resid, r);
        acc += r;
      }
      cell.mean_resid = acc / static_cast<double>(u.numel());
      cells.push_back(cell);
    }
  }
  return cells;
}

double max_residual(std::span<const ResidualCell> cells) {
  double m = 0.0;
  for (const ResidualCell& c : cells)
    if (!c.skipped) m = std::max(m, c.max_resid);
  return m;
}

void write_residual_csv(std::ostream& os, std::span<const ResidualCell> cells) {
  CsvWriter csv(os, {"t", "s", "max_resid", "mean_resid"});
  for (const ResidualCell& c : cells) {
    if (c.skipped) {
      csv.row(c.t, c.s, "skipped", "skipped");
    } else {
      csv.row(c.t, c.s, c.max_resid, c.mean_resid);
    }
  }
}

double discrete_relation_residual(const AnalyticFlow& flow, const Tensor& x, double t, double s,
                                  double dt, std::size_t steps) {
  if (!(s > t + dt)) throw std::invalid_argument("discrete relation needs s > t + dt");
  const Tensor z_next = flow_map(flow, x, t, t + dt, steps);
  const Tensor lhs = (s - t) * exact_avg_velocity(flow, x, t, s, steps);
  const Tensor rhs = (s - t - dt) * exact_avg_velocity(flow, z_next, t + dt, s, steps) +
                     dt * exact_velocity(flow, x, t);
  return max_abs(lhs - rhs);
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("loglog_slope needs two equal-length series of size >= 2");
  }
  double mx = 0, my = 0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace mflow
