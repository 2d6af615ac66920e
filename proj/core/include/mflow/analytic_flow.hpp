// Copyright 2026 The MeanFlow Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "mflow/tensor.hpp"

namespace mflow {

/// Independent coupling of N(0, I) noise with N(mu, sigma^2 I) data. The
/// marginal at time t is N(t mu, ((1-t)^2 + t^2 sigma^2) I), and the marginal
/// velocity E[x1 - x0 | x_t = x] is affine in x.
struct AnalyticFlow {
  std::vector<double> mu;
  double sigma = 1.0;

  std::size_t dim() const { return mu.size(); }
  void validate() const;
  /// (1-t)^2 + t^2 sigma^2
  double variance(double t) const;
  /// Slope of the velocity in x: (t sigma^2 - (1-t)) / variance(t).
  double slope(double t) const;
};

/// v*(x,t) = mu + slope(t) (x - t mu), row-wise for x of shape [B,dim] or [dim].
Tensor exact_velocity(const AnalyticFlow& flow, const Tensor& x, double t);

/// Classical RK4 integration of exact_velocity from t to s (either direction).
Tensor integrate(const AnalyticFlow& flow, const Tensor& x, double t, double s,
                 std::size_t steps);

/// Flow map from t to s >= t with `steps` RK4 steps.
Tensor flow_map(const AnalyticFlow& flow, const Tensor& x, double t, double s,
                std::size_t steps);

/// (flow_map(x,t,s) - x) / (s - t); exact_velocity when s == t.
Tensor exact_avg_velocity(const AnalyticFlow& flow, const Tensor& x, double t, double s,
                          std::size_t steps = 1024);

struct ResidualCell {
  double t = 0.0;
  double s = 0.0;
  double max_resid = 0.0;
  double mean_resid = 0.0;
  bool skipped = false;  // s <= t
};

struct ResidualOptions {
  std::size_t steps = 1024;
  double fd_step = 1e-4;
};

/// |u* - v* - (s-t) du*/dt| per cell over the probe rows, with du*/dt taken
/// by central differences along the trajectory through each probe.
std::vector<ResidualCell> identity_residual_grid(const AnalyticFlow& flow,
                                                 std::span<const double> t_grid,
                                                 std::span<const double> s_grid,
                                                 const Tensor& probes,
                                                 const ResidualOptions& options = {});

/// Max over evaluated cells; skipped cells are ignored.
double max_residual(std::span<const ResidualCell> cells);

/// CSV with columns t,s,max_resid,mean_resid; skipped cells carry "skipped".
void write_residual_csv(std::ostream& os, std::span<const ResidualCell> cells);

/// Max-abs residual of
///   (s-t) u(z_t,t,s) - [(s-t-dt) u(z_{t+dt},t+dt,s) + dt v(z_t,t)]
/// with the exact flow map supplying z_{t+dt} and u.
double discrete_relation_residual(const AnalyticFlow& flow, const Tensor& x, double t, double s,
                                  double dt, std::size_t steps = 1024);

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

}  // namespace mflow
