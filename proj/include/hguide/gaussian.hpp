// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "hguide/rng.hpp"
#include "hguide/types.hpp"

namespace hguide {

// Weighted mixture of full-covariance Gaussians. Doubles as the prior
// specification p_data and as the closed-form forward marginal at time t.
struct GaussianMixture {
  Vec weights;             // sums to one
  std::vector<Vec> means;
  std::vector<Mat> covs;   // SPD

  int dim() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }
  int components() const { return static_cast<int>(weights.size()); }

  static GaussianMixture single(Vec mean, Mat cov);
  static GaussianMixture single1d(double mean, double var);

  // weight normalization, shape agreement, symmetry, positive definiteness
  void validate() const;

  double log_pdf(const Vec& x) const;
  double pdf(const Vec& x) const { return std::exp(log_pdf(x)); }

  Vec score(const Vec& x) const;          // gradient of log pdf
  Mat score_batch(const Mat& X) const;    // columns are states

  Vec sample(Stream& rng) const;
  Mat sample_batch(int n, std::uint64_t key) const;

  // true when every component covariance is diagonal within tol
  bool diagonal() const;
};

}  // namespace hguide
