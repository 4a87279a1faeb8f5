// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>

#include "hguide/gaussian.hpp"
#include "hguide/guidance.hpp"
#include "hguide/schedule.hpp"
#include "hguide/types.hpp"

namespace hguide {

double normal_pdf(double z);
double normal_cdf(double z);

// log(Phi(beta) - Phi(alpha)) together with the ratio
// (phi(alpha) - phi(beta)) / (Phi(beta) - Phi(alpha)), stable deep in either
// tail via the Mills-ratio expansion.
void log_mass_and_ratio(double alpha, double beta, double* log_mass, double* ratio);

struct TruncStats {
  double mass = 0.0;
  double mean = 0.0;
  double var = 0.0;
};

// Moments of N(mu, var) conditioned on the open interval (lo, hi).
TruncStats truncated_normal_stats(double mu, double var, double lo, double hi);

// CDF of the same conditional law, usable as a one-sample KS reference.
std::function<double(double)> truncated_normal_cdf(double mu, double var, double lo, double hi);

// Mixture analogues for 1d priors: moments and CDF of (sum_i w_i N(mu_i, v_i))
// conditioned on (lo, hi).
TruncStats truncated_mixture_stats(const GaussianMixture& prior, double lo, double hi);
std::function<double(double)> truncated_mixture_cdf(const GaussianMixture& prior, double lo,
                                                    double hi);

// Draws n exact samples of prior | S by rejection. Reports the observed
// acceptance rate; refuses sets whose mass looks smaller than ~1e-6.
Mat rejection_sample(const GaussianMixture& prior, const GuidanceSet& S, int n, std::uint64_t seed,
                     double* acceptance = nullptr);

// Closed-form h(t, y) = P(Y_T in S | Y_t = y) for a single diagonal Gaussian
// prior and a box set, obtained from the conjugate Gaussian posterior of the
// data given the noised state at forward time s = T - t.
class AnalyticH {
 public:
  AnalyticH(NoiseSchedule sched, const GaussianMixture& prior, GuidanceSet S);

  int dim() const { return static_cast<int>(mu0_.size()); }
  const NoiseSchedule& schedule() const { return sched_; }
  const GuidanceSet& set() const { return S_; }

  double h(double t, const Vec& y) const;
  double log_h(double t, const Vec& y) const;
  Vec grad_log_h(double t, const Vec& y) const;

  // Either output may be null. h_out gets h, grad_out gets grad_y log h.
  void eval_batch(double t, const Mat& Y, Vec* h_out, Mat* grad_out) const;

  ScalarField field() const;
  VectorFieldFn grad_log_field() const;

 private:
  NoiseSchedule sched_;
  GaussianMixture prior_;
  Vec mu0_, var0_;
  GuidanceSet S_;

  friend struct PdeCheckAccess;
};

struct PdeCheckResult {
  double max_abs_err = 0.0;
  int nx = 0;
  int nt = 0;
};

// Finite-difference solve of the backward-time PDE satisfied by h,
//   dH/dtau = fbar(T - tau, y) dH/dy + 1/2 g(tau)^2 d2H/dy2,  H(0, .) = 1_S,
// on a reflecting box [y_lo, y_hi], compared against the closed form away
// from the initial discontinuity (tau >= 0.05 T) and the artificial walls.
PdeCheckResult h_pde_check_1d(const AnalyticH& oracle, double y_lo, double y_hi, int nx, int nt);

}  // namespace hguide
