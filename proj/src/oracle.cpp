// SPDX-License-Identifier: Apache-2.0
#include "hguide/oracle.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "hguide/errors.hpp"
#include "hguide/rng.hpp"

namespace hguide {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;
constexpr double kTailCut = 36.0;

// Mills-ratio hazard phi(a) / (1 - Phi(a)) for a >= kTailCut
double hazard(double a) {
  const double a2 = a * a;
  return a + (1.0 - 2.0 / a2 + 10.0 / (a2 * a2)) / a;
}
}  // namespace

double normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z * kInvSqrt2); }

void log_mass_and_ratio(double alpha, double beta, double* log_mass, double* ratio) {
  require(alpha < beta, ErrorKind::Domain, "interval is empty");
  if (beta <= 0.0) {
    double lm, r;
    log_mass_and_ratio(-beta, -alpha, &lm, &r);
    *log_mass = lm;
    *ratio = -r;
    return;
  }
  if (alpha >= kTailCut) {
    const double la = hazard(alpha);
    if (std::isinf(beta)) {
      *log_mass = -0.5 * alpha * alpha - kLogSqrt2Pi - std::log(la);
      *ratio = la;
      return;
    }
    const double lb = hazard(beta);
    const double r = std::exp(0.5 * (alpha - beta) * (alpha + beta));  // phi(beta)/phi(alpha)
    *log_mass = -0.5 * alpha * alpha - kLogSqrt2Pi - std::log(la) + std::log1p(-r * la / lb);
    *ratio = (1.0 - r) * la / (1.0 - r * la / lb);
    return;
  }
  double mass;
  if (alpha >= 0.0) {
    mass = 0.5 * (std::erfc(alpha * kInvSqrt2) - std::erfc(beta * kInvSqrt2));
  } else {
    mass = normal_cdf(beta) - normal_cdf(alpha);
  }
  if (mass <= 0.0) {
    // interval thinner than the erfc spacing: flat-density limit
    const double mid = 0.5 * (alpha + beta);
    *log_mass = -0.5 * mid * mid - kLogSqrt2Pi + std::log(beta - alpha);
    *ratio = mid;
    return;
  }
  *log_mass = std::log(mass);
  *ratio = (normal_pdf(alpha) - normal_pdf(beta)) / mass;
}

TruncStats truncated_normal_stats(double mu, double var, double lo, double hi) {
  require(std::isfinite(mu) && std::isfinite(var) && var > 0.0, ErrorKind::Domain,
          "truncated_normal_stats needs a proper normal");
  require(lo < hi, ErrorKind::Domain, "empty truncation interval");
  const double sigma = std::sqrt(var);
  double alpha = (lo - mu) / sigma;
  double beta = (hi - mu) / sigma;
  double sign = 1.0;
  if (beta <= 0.0) {
    const double a = -beta, b = -alpha;
    alpha = a;
    beta = b;
    sign = -1.0;
  }
  double lm, ratio;
  log_mass_and_ratio(alpha, beta, &lm, &ratio);

  double pa, pb;  // phi(alpha)/Z, phi(beta)/Z
  if (alpha >= kTailCut) {
    const double la = hazard(alpha);
    if (std::isinf(beta)) {
      pa = la;
      pb = 0.0;
    } else {
      const double r = std::exp(0.5 * (alpha - beta) * (alpha + beta));
      pa = la / (1.0 - r * la / hazard(beta));
      pb = r * pa;
    }
  } else {
    const double z = std::exp(lm);
    pa = normal_pdf(alpha) / z;
    pb = normal_pdf(beta) / z;
  }
  const double a_pa = std::isinf(alpha) ? 0.0 : alpha * pa;
  const double b_pb = std::isinf(beta) ? 0.0 : beta * pb;

  TruncStats out;
  out.mass = std::exp(lm);
  out.mean = mu + sign * sigma * (pa - pb);
  out.var = var * (1.0 + (a_pa - b_pb) - (pa - pb) * (pa - pb));
  return out;
}

std::function<double(double)> truncated_normal_cdf(double mu, double var, double lo, double hi) {
  require(var > 0.0 && lo < hi, ErrorKind::Domain, "truncated_normal_cdf needs var > 0 and lo < hi");
  const double sigma = std::sqrt(var);
  const double alpha = (lo - mu) / sigma;
  const double beta = (hi - mu) / sigma;
  return [mu, sigma, alpha, beta](double x) {
    const double z = (x - mu) / sigma;
    if (z <= alpha) return 0.0;
    if (z >= beta) return 1.0;
    double num, den;
    if (alpha >= 0.0) {
      num = std::erfc(alpha * kInvSqrt2) - std::erfc(z * kInvSqrt2);
      den = std::erfc(alpha * kInvSqrt2) - std::erfc(beta * kInvSqrt2);
    } else if (beta <= 0.0) {
      num = std::erfc(-z * kInvSqrt2) - std::erfc(-alpha * kInvSqrt2);
      den = std::erfc(-beta * kInvSqrt2) - std::erfc(-alpha * kInvSqrt2);
    } else {
      num = normal_cdf(z) - normal_cdf(alpha);
      den = normal_cdf(beta) - normal_cdf(alpha);
    }
    return std::min(1.0, std::max(0.0, num / den));
  };
}

namespace {
void check_mixture_1d(const GaussianMixture& prior, double lo, double hi) {
  require(prior.dim() == 1, ErrorKind::Domain, "mixture truncation helpers are 1d");
  require(lo < hi, ErrorKind::Domain, "empty truncation interval");
}
}  // namespace

TruncStats truncated_mixture_stats(const GaussianMixture& prior, double lo, double hi) {
  check_mixture_1d(prior, lo, hi);
  const std::size_t K = prior.weights.size();
  double mass = 0.0, mean = 0.0, second = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const TruncStats c = truncated_normal_stats(prior.means[k][0], prior.covs[k](0, 0), lo, hi);
    const double wk = prior.weights[k] * c.mass;
    mass += wk;
    mean += wk * c.mean;
    second += wk * (c.var + c.mean * c.mean);
  }
  require(mass > 0.0, ErrorKind::Numerical, "mixture has no mass on the interval");
  TruncStats out;
  out.mass = mass;
  out.mean = mean / mass;
  out.var = second / mass - out.mean * out.mean;
  return out;
}

std::function<double(double)> truncated_mixture_cdf(const GaussianMixture& prior, double lo,
                                                    double hi) {
  check_mixture_1d(prior, lo, hi);
  const std::size_t K = prior.weights.size();
  std::vector<double> scaled(K);
  std::vector<std::function<double(double)>> comp(K);
  double mass = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double mu = prior.means[k][0];
    const double var = prior.covs[k](0, 0);
    scaled[k] = prior.weights[k] * truncated_normal_stats(mu, var, lo, hi).mass;
    comp[k] = truncated_normal_cdf(mu, var, lo, hi);
    mass += scaled[k];
  }
  require(mass > 0.0, ErrorKind::Numerical, "mixture has no mass on the interval");
  return [scaled, comp, mass, lo, hi](double x) {
    if (x <= lo) return 0.0;
    if (x >= hi) return 1.0;
    double acc = 0.0;
    for (std::size_t k = 0; k < comp.size(); ++k) {
      if (scaled[k] > 0.0) acc += scaled[k] * comp[k](x);
    }
    return std::min(1.0, std::max(0.0, acc / mass));
  };
}

Mat rejection_sample(const GaussianMixture& prior, const GuidanceSet& S, int n, std::uint64_t seed,
                     double* acceptance) {
  require(n > 0, ErrorKind::Domain, "rejection_sample needs n > 0");
  require(S.dim() == prior.dim(), ErrorKind::Domain, "set and prior dimension mismatch");
  Stream rng(derive(seed, "rejection"));
  Mat out(prior.dim(), n);
  long draws = 0, accepted = 0;
  while (accepted < n) {
    const Vec x = prior.sample(rng);
    ++draws;
    if (S.contains(x)) out.col(accepted++) = x;
    if (draws == 100000 && accepted == 0) {
      throw_numerical("rejection sampler saw no acceptances in 1e5 draws; set mass is below ~1e-5");
    }
  }
  if (acceptance) *acceptance = static_cast<double>(accepted) / static_cast<double>(draws);
  return out;
}

AnalyticH::AnalyticH(NoiseSchedule sched, const GaussianMixture& prior, GuidanceSet S)
    : sched_(std::move(sched)), prior_(prior), S_(std::move(S)) {
  prior_.validate();
  require(prior_.weights.size() == 1, ErrorKind::Domain, "analytic h needs a single-component prior");
  mu0_ = prior_.means[0];
  const Mat& C = prior_.covs[0];
  const double scale = std::max(1.0, C.diagonal().cwiseAbs().maxCoeff());
  for (Eigen::Index i = 0; i < C.rows(); ++i) {
    for (Eigen::Index j = 0; j < C.cols(); ++j) {
      if (i != j) {
        require(std::abs(C(i, j)) <= 1e-12 * scale, ErrorKind::Domain,
                "analytic h needs a diagonal prior covariance");
      }
    }
  }
  var0_ = C.diagonal();
  require((var0_.array() > 0.0).all(), ErrorKind::Domain, "prior variances must be positive");
  require(S_.form() == GuidanceSet::Form::Box, ErrorKind::Domain, "analytic h needs a box set");
  require(S_.dim() == dim(), ErrorKind::Domain, "set and prior dimension mismatch");
}

void AnalyticH::eval_batch(double t, const Mat& Y, Vec* h_out, Mat* grad_out) const {
  const int d = dim();
  require(Y.rows() == d, ErrorKind::Domain, "state dimension mismatch");
  require(t >= 0.0 && t <= sched_.T, ErrorKind::Domain, "time outside [0, T]");
  const Eigen::Index n = Y.cols();
  if (grad_out) grad_out->setZero(d, n);

  const double s = sched_.T - t;
  const double m = mean_coef(sched_, s);
  const double v = added_var(sched_, s);
  if (v < 1e-300) {
    if (h_out) *h_out = S_.indicator_batch(Y);
    return;
  }

  Vec logh = Vec::Zero(n);
  const Vec& lo = S_.lo();
  const Vec& hi = S_.hi();
  for (int k = 0; k < d; ++k) {
    if (std::isinf(lo[k]) && std::isinf(hi[k])) continue;
    const double w = 1.0 / (1.0 / var0_[k] + m * m / v);  // posterior variance of the data axis
    const double sp = std::sqrt(w);
    const double c = w * m / v;  // d(posterior mean)/dy
    const double base = w * mu0_[k] / var0_[k];
    for (Eigen::Index j = 0; j < n; ++j) {
      const double mu_p = base + c * Y(k, j);
      double lm, ratio;
      log_mass_and_ratio((lo[k] - mu_p) / sp, (hi[k] - mu_p) / sp, &lm, &ratio);
      logh[j] += lm;
      if (grad_out) (*grad_out)(k, j) = c * ratio / sp;
    }
  }
  if (h_out) *h_out = logh.array().exp();
}

double AnalyticH::h(double t, const Vec& y) const {
  Vec out;
  eval_batch(t, y, &out, nullptr);
  return out[0];
}

double AnalyticH::log_h(double t, const Vec& y) const {
  const double hv = h(t, y);
  return std::log(hv);
}

Vec AnalyticH::grad_log_h(double t, const Vec& y) const {
  Mat grad;
  eval_batch(t, y, nullptr, &grad);
  return grad.col(0);
}

ScalarField AnalyticH::field() const {
  const AnalyticH oracle = *this;
  return [oracle](double t, const Mat& Y) {
    Vec out;
    oracle.eval_batch(t, Y, &out, nullptr);
    return out;
  };
}

VectorFieldFn AnalyticH::grad_log_field() const {
  const AnalyticH oracle = *this;
  return [oracle](double t, const Mat& Y) {
    Mat grad;
    oracle.eval_batch(t, Y, nullptr, &grad);
    return grad;
  };
}

struct PdeCheckAccess {
  static const GaussianMixture& prior(const AnalyticH& o) { return o.prior_; }
};

namespace {
// Thomas solve of (I - w L) u = rhs where L u = A u' + D u'' with mirrored
// (reflecting) boundary nodes.
Vec implicit_step(double w, const Vec& A, double D, double dy, const Vec& rhs) {
  const int n = static_cast<int>(rhs.size());
  const double cd = D / (dy * dy);
  Vec lower(n), diag(n), upper(n);
  for (int j = 0; j < n; ++j) {
    const double ca = A[j] / (2.0 * dy);
    diag[j] = 1.0 + 2.0 * w * cd;
    lower[j] = w * (ca - cd);
    upper[j] = -w * (ca + cd);
  }
  upper[0] = -2.0 * w * cd;  // advection cancels against the mirror image
  lower[n - 1] = -2.0 * w * cd;

  Vec cp(n), dp(n);
  cp[0] = upper[0] / diag[0];
  dp[0] = rhs[0] / diag[0];
  for (int j = 1; j < n; ++j) {
    const double denom = diag[j] - lower[j] * cp[j - 1];
    cp[j] = upper[j] / denom;
    dp[j] = (rhs[j] - lower[j] * dp[j - 1]) / denom;
  }
  Vec u(n);
  u[n - 1] = dp[n - 1];
  for (int j = n - 2; j >= 0; --j) u[j] = dp[j] - cp[j] * u[j + 1];
  return u;
}
}  // namespace

PdeCheckResult h_pde_check_1d(const AnalyticH& oracle, double y_lo, double y_hi, int nx, int nt) {
  require(oracle.dim() == 1, ErrorKind::Domain, "pde check is one-dimensional");
  require(nx >= 16 && nt >= 8, ErrorKind::Domain, "pde check grid is too small");
  require(y_lo < y_hi, ErrorKind::Domain, "pde check domain is empty");
  const NoiseSchedule& sched = oracle.schedule();
  const GaussianMixture& prior = PdeCheckAccess::prior(oracle);
  const double T = sched.T;
  const double dy = (y_hi - y_lo) / (nx - 1);
  const double dtau = T / nt;

  Mat ymat(1, nx);
  for (int j = 0; j < nx; ++j) ymat(0, j) = y_lo + j * dy;
  const Vec y = ymat.row(0).transpose();

  const double a = oracle.set().lo()[0];
  const double b = oracle.set().hi()[0];
  Vec u(nx);
  for (int j = 0; j < nx; ++j) {
    const double cl = std::max(y[j] - 0.5 * dy, a);
    const double cr = std::min(y[j] + 0.5 * dy, b);
    u[j] = std::max(0.0, cr - cl) / dy;
  }

  const auto build = [&](double tau, Vec* A, double* D) {
    const DriftDiffusion dd = coeffs(sched, tau);
    *D = 0.5 * dd.g * dd.g;
    const GaussianMixture marg = forward_marginal(sched, prior, tau);
    const Mat sc = marg.score_batch(ymat);
    *A = dd.g * dd.g * sc.row(0).transpose() - dd.f_lin * y;
  };
  const auto apply_explicit = [&](const Vec& v, const Vec& A, double D) {
    Vec out(nx);
    for (int j = 0; j < nx; ++j) {
      const double up = (j + 1 < nx) ? v[j + 1] : v[nx - 2];
      const double um = (j > 0) ? v[j - 1] : v[1];
      out[j] = A[j] * (up - um) / (2.0 * dy) + D * (up - 2.0 * v[j] + um) / (dy * dy);
    }
    return out;
  };

  PdeCheckResult res;
  res.nx = nx;
  res.nt = nt;
  const int margin = nx / 10;
  Vec A(nx);
  double D = 0.0;
  for (int m = 0; m < nt; ++m) {
    const double tau1 = (m + 1) * dtau;
    const double theta = (m < 4) ? 1.0 : 0.5;  // Rannacher start, then trapezoidal
    Vec rhs = u;
    if (theta < 1.0) {
      build(m * dtau, &A, &D);
      rhs += (1.0 - theta) * dtau * apply_explicit(u, A, D);
    }
    build(tau1, &A, &D);
    u = implicit_step(theta * dtau, A, D, dy, rhs);

    if (tau1 >= 0.05 * T - 1e-12) {
      Vec href;
      oracle.eval_batch(T - tau1, ymat, &href, nullptr);
      for (int j = margin; j < nx - margin; ++j) {
        res.max_abs_err = std::max(res.max_abs_err, std::abs(u[j] - href[j]));
      }
    }
  }
  return res;
}

}  // namespace hguide
