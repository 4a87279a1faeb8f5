// SPDX-License-Identifier: Apache-2.0
#include "hguide/gaussian.hpp"

#include <cmath>

#include "hguide/errors.hpp"

namespace hguide {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

struct CompCache {
  Eigen::LLT<Mat> llt;
  double log_norm;  // log w - (d/2) log 2pi - (1/2) log det
};

std::vector<CompCache> build_cache(const GaussianMixture& g) {
  std::vector<CompCache> cc(g.components());
  const int d = g.dim();
  for (int i = 0; i < g.components(); ++i) {
    cc[i].llt.compute(g.covs[i]);
    if (cc[i].llt.info() != Eigen::Success) throw_domain("mixture covariance is not positive definite");
    double log_det = 0.0;
    for (int k = 0; k < d; ++k) log_det += 2.0 * std::log(cc[i].llt.matrixL()(k, k));
    cc[i].log_norm = std::log(g.weights[i]) - 0.5 * d * kLog2Pi - 0.5 * log_det;
  }
  return cc;
}
}  // namespace

GaussianMixture GaussianMixture::single(Vec mean, Mat cov) {
  GaussianMixture g;
  g.weights = Vec::Ones(1);
  g.means.push_back(std::move(mean));
  g.covs.push_back(std::move(cov));
  return g;
}

GaussianMixture GaussianMixture::single1d(double mean, double var) {
  return single(Vec::Constant(1, mean), Mat::Constant(1, 1, var));
}

void GaussianMixture::validate() const {
  require(components() > 0, ErrorKind::Domain, "mixture has no components");
  require(static_cast<int>(means.size()) == components() && static_cast<int>(covs.size()) == components(),
          ErrorKind::Domain, "mixture weight/mean/cov counts disagree");
  require(std::abs(weights.sum() - 1.0) <= 1e-12, ErrorKind::Domain, "mixture weights do not sum to 1");
  const int d = dim();
  for (int i = 0; i < components(); ++i) {
    require(weights[i] > 0.0, ErrorKind::Domain, "mixture weights must be positive");
    require(means[i].size() == d, ErrorKind::Domain, "mixture mean dimension mismatch");
    require(covs[i].rows() == d && covs[i].cols() == d, ErrorKind::Domain, "mixture cov shape mismatch");
    const double scale = std::max(1.0, covs[i].cwiseAbs().maxCoeff());
    require((covs[i] - covs[i].transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale, ErrorKind::Domain,
            "mixture covariance not symmetric");
    Eigen::LLT<Mat> llt(covs[i]);
    require(llt.info() == Eigen::Success, ErrorKind::Domain, "mixture covariance not positive definite");
  }
}

double GaussianMixture::log_pdf(const Vec& x) const {
  const auto cc = build_cache(*this);
  double best = -std::numeric_limits<double>::infinity();
  Vec le(components());
  for (int i = 0; i < components(); ++i) {
    const Vec r = x - means[i];
    le[i] = cc[i].log_norm - 0.5 * r.dot(cc[i].llt.solve(r));
    best = std::max(best, le[i]);
  }
  if (!std::isfinite(best)) return best;
  double acc = 0.0;
  for (int i = 0; i < components(); ++i) acc += std::exp(le[i] - best);
  return best + std::log(acc);
}

Vec GaussianMixture::score(const Vec& x) const {
  Mat X(x.size(), 1);
  X.col(0) = x;
  return score_batch(X).col(0);
}

Mat GaussianMixture::score_batch(const Mat& X) const {
  const auto cc = build_cache(*this);
  const int n = static_cast<int>(X.cols());
  const int m = components();

  // per-component solved residuals and log densities, shared across columns
  std::vector<Mat> neg(m);
  Mat le(m, n);
  for (int i = 0; i < m; ++i) {
    Mat r = X.colwise() - means[i];
    neg[i] = cc[i].llt.solve(r);  // cov^{-1} (x - mu)
    le.row(i) = -0.5 * (r.array() * neg[i].array()).colwise().sum();
    le.row(i).array() += cc[i].log_norm;
  }
  const Vec mx = le.colwise().maxCoeff();
  Mat gamma = (le.rowwise() - mx.transpose()).array().exp();
  const Vec denom = gamma.colwise().sum();
  gamma.array().rowwise() /= denom.transpose().array();

  Mat out = Mat::Zero(X.rows(), n);
  for (int i = 0; i < m; ++i) out.noalias() -= neg[i] * gamma.row(i).asDiagonal();
  return out;
}

Vec GaussianMixture::sample(Stream& rng) const {
  const double u = rng.uniform();
  int pick = components() - 1;
  double acc = 0.0;
  for (int i = 0; i < components(); ++i) {
    acc += weights[i];
    if (u < acc) {
      pick = i;
      break;
    }
  }
  Eigen::LLT<Mat> llt(covs[pick]);
  Vec z(dim());
  for (int k = 0; k < dim(); ++k) z[k] = rng.normal();
  return means[pick] + llt.matrixL() * z;
}

Mat GaussianMixture::sample_batch(int n, std::uint64_t key) const {
  Stream s(key);
  Mat out(dim(), n);
  for (int j = 0; j < n; ++j) out.col(j) = sample(s);
  return out;
}

bool GaussianMixture::diagonal() const {
  for (const Mat& c : covs) {
    const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
    Mat off = c;
    off.diagonal().setZero();
    if (off.cwiseAbs().maxCoeff() > 1e-12 * scale) return false;
  }
  return true;
}

}  // namespace hguide
