// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "hguide/types.hpp"

namespace hguide {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_and_se(const Vec& x);

// nearest-rank (type 1) quantile of an ascending-sorted vector
double nearest_rank_quantile(const Vec& sorted, double p);

// Kolmogorov-Smirnov statistics
double ks_statistic(Vec samples, const std::function<double(double)>& cdf);
double ks_statistic(Vec a, Vec b);

// 2-Wasserstein distance between 1d empirical measures, exact via the
// piecewise-constant quantile functions (sizes may differ)
double w2_1d(Vec a, Vec b);

// 2-Wasserstein distance between d-dimensional empirical measures with equal
// counts, exact via the assignment problem. O(n^3) time, O(n^2) memory;
// refuses n > 4096.
double w2_exact(const Mat& A, const Mat& B);

// total variation between two samples over a shared histogram spanning the
// pooled [0.1%, 99.9%] quantile range; tail mass lands in the edge bins
double tv_histogram(const Vec& a, const Vec& b, int bins = 64);

// adaptive Simpson quadrature
double integrate(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-9);

// Conditioning-sensitivity bound for 1d densities p, q on (lo, hi) with set
// S = (s_lo, s_hi): checks d_TV(p^S, q^S) <= 3/(2 rho) d_TV(p, q) with
// rho = q(S), all terms by quadrature.
struct LemmaCheck {
  double tv = 0.0;       // d_TV(p, q)
  double tv_cond = 0.0;  // d_TV(p^S, q^S)
  double rho = 0.0;      // q(S)
  double bound = 0.0;    // 3 / (2 rho) * tv
  bool holds = false;
};

LemmaCheck lemma_conditioning_check(const std::function<double(double)>& p,
                                    const std::function<double(double)>& q, double lo, double hi,
                                    double s_lo, double s_hi, double tol = 1e-9);

}  // namespace hguide
