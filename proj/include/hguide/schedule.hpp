// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "hguide/gaussian.hpp"
#include "hguide/types.hpp"

namespace hguide {

// Forward SDE dX_t = f(t,X_t) dt + g(t) dW_t on [0,T] with linear drift
// f(t,x) = f_lin(t) x. Three families:
//   VE    f = 0,            g(t) = sqrt(2t + eps)
//   VP    f = -beta(t)x/2,  g(t) = sqrt(beta(t)),  beta(t) = a + (b-a)t/T
//   VEExp f = 0,            g(t) = sigma^t
enum class ScheduleKind { VE, VP, VEExp };

struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::VE;
  double T = 1.0;
  double eps = 1e-2;    // VE
  double a = 0.1;       // VP
  double b = 20.0;      // VP
  double sigma = 25.0;  // VEExp

  static NoiseSchedule ve(double T, double eps);
  static NoiseSchedule vp(double T, double a, double b);
  static NoiseSchedule ve_exp(double T, double sigma = 25.0);

  std::string id() const;  // canonical identifier stored in artifacts
};

struct DriftDiffusion {
  double f_lin;  // drift coefficient: f(t,x) = f_lin * x
  double g;
};

DriftDiffusion coeffs(const NoiseSchedule&, double t);

// transition X_t | X_0 = x0 ~ N(mean_coef(t) x0, added_var(t) I)
double mean_coef(const NoiseSchedule&, double t);
double added_var(const NoiseSchedule&, double t);

// terminal reference p_noise = N(0, noise_var I)
double noise_var(const NoiseSchedule&);

// conditional transition s -> t (s <= t): X_t | X_s ~ N(scale X_s, var I)
void transition(const NoiseSchedule&, double s, double t, double* scale, double* var);

// closed-form forward marginal of a Gaussian-mixture prior at time t
GaussianMixture forward_marginal(const NoiseSchedule&, const GaussianMixture& prior, double t);

// Reverse-time grid 0 = t_0 < ... < t_K <= T - eps_T. Uniform spacing, or
// spacing that makes the forward perturbation std linear across indices at
// the reversed times s_i = T - t_i (smaller steps toward the data end).
enum class GridSpacing { Uniform, NoiseLevel };

struct TimeGrid {
  std::vector<double> points;
  GridSpacing spacing = GridSpacing::Uniform;
  double eps_T = 0.0;

  int steps() const { return static_cast<int>(points.size()) - 1; }
  double dt(int i) const { return points[i + 1] - points[i]; }
  double horizon_T = 0.0;  // schedule horizon the grid was built for
};

TimeGrid make_grid(const NoiseSchedule&, int K, GridSpacing spacing, double eps_T);

}  // namespace hguide
