// SPDX-License-Identifier: Apache-2.0
#include "hguide/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "hguide/errors.hpp"

namespace hguide {

MeanSe mean_and_se(const Vec& x) {
  require(x.size() >= 2, ErrorKind::Domain, "mean_and_se needs at least two samples");
  MeanSe out;
  out.mean = x.mean();
  const double var = (x.array() - out.mean).square().sum() / (x.size() - 1);
  out.se = std::sqrt(var / x.size());
  return out;
}

double nearest_rank_quantile(const Vec& sorted, double p) {
  require(sorted.size() > 0, ErrorKind::Domain, "quantile of an empty vector");
  require(p >= 0.0 && p <= 1.0, ErrorKind::Domain, "quantile level outside [0, 1]");
  const long n = sorted.size();
  long rank = static_cast<long>(std::ceil(p * n));
  rank = std::max<long>(1, std::min(n, rank));
  return sorted[rank - 1];
}

namespace {
void sort_inplace(Vec& v) { std::sort(v.data(), v.data() + v.size()); }
}  // namespace

double ks_statistic(Vec samples, const std::function<double(double)>& cdf) {
  require(samples.size() > 0, ErrorKind::Domain, "ks_statistic needs samples");
  sort_inplace(samples);
  const long n = samples.size();
  double d = 0.0;
  for (long i = 0; i < n; ++i) {
    const double f = cdf(samples[i]);
    require(f >= 0.0 && f <= 1.0, ErrorKind::Domain, "reference cdf left [0, 1]");
    d = std::max(d, std::max(f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f));
  }
  return d;
}

double ks_statistic(Vec a, Vec b) {
  require(a.size() > 0 && b.size() > 0, ErrorKind::Domain, "ks_statistic needs samples");
  sort_inplace(a);
  sort_inplace(b);
  const long n = a.size(), m = b.size();
  long i = 0, j = 0;
  double d = 0.0;
  while (i < n && j < m) {
    const double x = std::min(a[i], b[j]);
    while (i < n && a[i] <= x) ++i;
    while (j < m && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  return d;
}

double w2_1d(Vec a, Vec b) {
  require(a.size() > 0 && b.size() > 0, ErrorKind::Domain, "w2_1d needs samples");
  sort_inplace(a);
  sort_inplace(b);
  const long n = a.size(), m = b.size();
  long i = 0, j = 0;
  double u = 0.0, acc = 0.0;
  while (i < n && j < m) {
    const long la = (i + 1) * m, lb = (j + 1) * n;  // compare (i+1)/n with (j+1)/m exactly
    const double next = (la <= lb) ? static_cast<double>(i + 1) / n : static_cast<double>(j + 1) / m;
    const double diff = a[i] - b[j];
    acc += (next - u) * diff * diff;
    u = next;
    if (la <= lb) ++i;
    if (lb <= la) ++j;
  }
  return std::sqrt(std::max(0.0, acc));
}

double w2_exact(const Mat& A, const Mat& B) {
  require(A.rows() == B.rows(), ErrorKind::Domain, "w2_exact dimension mismatch");
  require(A.cols() == B.cols() && A.cols() > 0, ErrorKind::Domain,
          "w2_exact needs equal nonzero sample counts");
  const int n = static_cast<int>(A.cols());
  require(n <= 4096, ErrorKind::Domain, "w2_exact refuses n > 4096 (quadratic memory)");

  std::vector<double> cost(static_cast<std::size_t>(n) * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      cost[static_cast<std::size_t>(i) * n + j] = (A.col(i) - B.col(j)).squaredNorm();
    }
  }

  // assignment problem with potentials (Jonker-Volgenant style shortest
  // augmenting paths), 1-based internal indexing
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = kInf;
      const double* row = cost.data() + static_cast<std::size_t>(i0 - 1) * n;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  double total = 0.0;
  for (int j = 1; j <= n; ++j) total += cost[static_cast<std::size_t>(p[j] - 1) * n + (j - 1)];
  return std::sqrt(std::max(0.0, total / n));
}

double tv_histogram(const Vec& a, const Vec& b, int bins) {
  require(a.size() > 1 && b.size() > 1, ErrorKind::Domain, "tv_histogram needs samples");
  require(bins >= 2, ErrorKind::Domain, "tv_histogram needs at least two bins");
  Vec pooled(a.size() + b.size());
  pooled << a, b;
  sort_inplace(pooled);
  const double lo = nearest_rank_quantile(pooled, 0.001);
  const double hi = nearest_rank_quantile(pooled, 0.999);
  require(hi > lo, ErrorKind::Numerical, "tv_histogram pooled range collapsed");
  const double width = (hi - lo) / bins;

  const auto bin_of = [&](double x) {
    const int k = static_cast<int>(std::floor((x - lo) / width));
    return std::max(0, std::min(bins - 1, k));
  };
  Vec pa = Vec::Zero(bins), pb = Vec::Zero(bins);
  for (long i = 0; i < a.size(); ++i) pa[bin_of(a[i])] += 1.0;
  for (long i = 0; i < b.size(); ++i) pb[bin_of(b[i])] += 1.0;
  pa /= static_cast<double>(a.size());
  pb /= static_cast<double>(b.size());
  return 0.5 * (pa - pb).cwiseAbs().sum();
}

namespace {
double simpson(double a, double fa, double b, double fb, double fm) {
  return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

double adaptive(const std::function<double(double)>& f, double a, double fa, double b, double fb,
                double m, double fm, double whole, double tol, int depth) {
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  require(std::isfinite(flm) && std::isfinite(frm), ErrorKind::Numerical,
          "integrand is non-finite");
  const double left = simpson(a, fa, m, fm, flm);
  const double right = simpson(m, fm, b, fb, frm);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1) +
         adaptive(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1);
}
}  // namespace

double integrate(const std::function<double(double)>& f, double lo, double hi, double tol) {
  require(lo < hi, ErrorKind::Domain, "integrate needs lo < hi");
  require(tol > 0.0, ErrorKind::Domain, "integrate needs tol > 0");
  const double m = 0.5 * (lo + hi);
  const double fa = f(lo), fb = f(hi), fm = f(m);
  require(std::isfinite(fa) && std::isfinite(fb) && std::isfinite(fm), ErrorKind::Numerical,
          "integrand is non-finite");
  const double whole = simpson(lo, fa, hi, fb, fm);
  return adaptive(f, lo, fa, hi, fb, m, fm, whole, tol, 40);
}

LemmaCheck lemma_conditioning_check(const std::function<double(double)>& p,
                                    const std::function<double(double)>& q, double lo, double hi,
                                    double s_lo, double s_hi, double tol) {
  require(lo < hi, ErrorKind::Domain, "domain is empty");
  require(s_lo < s_hi, ErrorKind::Domain, "conditioning set is empty");
  require(s_lo >= lo && s_hi <= hi, ErrorKind::Domain, "conditioning set must sit inside the domain");

  LemmaCheck out;
  out.tv = 0.5 * integrate([&](double x) { return std::abs(p(x) - q(x)); }, lo, hi, tol);
  out.rho = integrate(q, s_lo, s_hi, tol);
  require(out.rho > 0.0, ErrorKind::Domain, "conditioning set has no mass under q");
  const double p_mass = integrate(p, s_lo, s_hi, tol);
  require(p_mass > 0.0, ErrorKind::Domain, "conditioning set has no mass under p");
  out.tv_cond = 0.5 * integrate([&](double x) { return std::abs(p(x) / p_mass - q(x) / out.rho); },
                                s_lo, s_hi, tol);
  out.bound = 1.5 / out.rho * out.tv;
  out.holds = out.tv_cond <= out.bound + 1e-8;
  return out;
}

}  // namespace hguide
