// SPDX-License-Identifier: Apache-2.0
#include "hguide/schedule.hpp"

#include <cmath>
#include <sstream>

#include "hguide/errors.hpp"

namespace hguide {

namespace {
void check_time(const NoiseSchedule& s, double t) {
  require(t >= 0.0 && t <= s.T, ErrorKind::Domain, "time outside [0, T]");
}
}  // namespace

NoiseSchedule NoiseSchedule::ve(double T, double eps) {
  require(T > 0.0, ErrorKind::Domain, "schedule horizon T must be positive");
  require(eps > 0.0, ErrorKind::Domain, "VE eps must be positive so that g > 0 on [0, T]");
  NoiseSchedule s;
  s.kind = ScheduleKind::VE;
  s.T = T;
  s.eps = eps;
  return s;
}

NoiseSchedule NoiseSchedule::vp(double T, double a, double b) {
  require(T > 0.0, ErrorKind::Domain, "schedule horizon T must be positive");
  require(a > 0.0 && b > a, ErrorKind::Domain, "VP schedule requires 0 < a < b");
  NoiseSchedule s;
  s.kind = ScheduleKind::VP;
  s.T = T;
  s.a = a;
  s.b = b;
  return s;
}

NoiseSchedule NoiseSchedule::ve_exp(double T, double sigma) {
  require(T > 0.0, ErrorKind::Domain, "schedule horizon T must be positive");
  require(sigma > 1.0, ErrorKind::Domain, "VEExp requires sigma > 1");
  NoiseSchedule s;
  s.kind = ScheduleKind::VEExp;
  s.T = T;
  s.sigma = sigma;
  return s;
}

std::string NoiseSchedule::id() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind) {
    case ScheduleKind::VE:
      os << "ve(T=" << T << ",eps=" << eps << ")";
      break;
    case ScheduleKind::VP:
      os << "vp(T=" << T << ",a=" << a << ",b=" << b << ")";
      break;
    case ScheduleKind::VEExp:
      os << "veexp(T=" << T << ",sigma=" << sigma << ")";
      break;
  }
  return os.str();
}

DriftDiffusion coeffs(const NoiseSchedule& s, double t) {
  check_time(s, t);
  switch (s.kind) {
    case ScheduleKind::VE:
      return {0.0, std::sqrt(2.0 * t + s.eps)};
    case ScheduleKind::VP: {
      const double beta = s.a + (s.b - s.a) * t / s.T;
      return {-0.5 * beta, std::sqrt(beta)};
    }
    case ScheduleKind::VEExp:
      return {0.0, std::pow(s.sigma, t)};
  }
  throw_domain("unknown schedule kind");
}

double mean_coef(const NoiseSchedule& s, double t) {
  check_time(s, t);
  switch (s.kind) {
    case ScheduleKind::VE:
    case ScheduleKind::VEExp:
      return 1.0;
    case ScheduleKind::VP: {
      // exp(-1/2 int_0^t beta) with beta linear in t
      const double ib = s.a * t + 0.5 * (s.b - s.a) * t * t / s.T;
      return std::exp(-0.5 * ib);
    }
  }
  throw_domain("unknown schedule kind");
}

double added_var(const NoiseSchedule& s, double t) {
  check_time(s, t);
  switch (s.kind) {
    case ScheduleKind::VE:
      return t * t + s.eps * t;
    case ScheduleKind::VP: {
      const double m = mean_coef(s, t);
      return 1.0 - m * m;
    }
    case ScheduleKind::VEExp: {
      const double l2 = 2.0 * std::log(s.sigma);
      return (std::exp(l2 * t) - 1.0) / l2;  // int_0^t sigma^{2u} du
    }
  }
  throw_domain("unknown schedule kind");
}

double noise_var(const NoiseSchedule& s) {
  switch (s.kind) {
    case ScheduleKind::VE:
      return s.T * s.T;
    case ScheduleKind::VP:
      return 1.0;
    case ScheduleKind::VEExp:
      return added_var(s, s.T);
  }
  throw_domain("unknown schedule kind");
}

void transition(const NoiseSchedule& s, double t0, double t1, double* scale, double* var) {
  check_time(s, t0);
  check_time(s, t1);
  require(t0 <= t1, ErrorKind::Domain, "transition needs s <= t");
  const double m0 = mean_coef(s, t0);
  const double m1 = mean_coef(s, t1);
  const double sc = m1 / m0;
  *scale = sc;
  *var = added_var(s, t1) - sc * sc * added_var(s, t0);
}

GaussianMixture forward_marginal(const NoiseSchedule& s, const GaussianMixture& prior, double t) {
  prior.validate();
  const double m = mean_coef(s, t);
  const double v = added_var(s, t);
  GaussianMixture out = prior;
  const Mat vi = v * Mat::Identity(prior.dim(), prior.dim());
  for (int i = 0; i < out.components(); ++i) {
    out.means[i] = m * prior.means[i];
    out.covs[i] = m * m * prior.covs[i] + vi;
  }
  return out;
}

TimeGrid make_grid(const NoiseSchedule& s, int K, GridSpacing spacing, double eps_T) {
  require(K >= 2, ErrorKind::Domain, "grid needs at least K = 2 steps");
  require(eps_T >= 0.0 && eps_T < s.T, ErrorKind::Domain, "eps_T must lie in [0, T)");
  TimeGrid grid;
  grid.spacing = spacing;
  grid.eps_T = eps_T;
  grid.horizon_T = s.T;
  grid.points.resize(K + 1);

  if (spacing == GridSpacing::Uniform) {
    const double span = s.T - eps_T;
    for (int i = 0; i <= K; ++i) grid.points[i] = span * static_cast<double>(i) / K;
  } else {
    // perturbation std at reversed times, linear across indices
    const auto stddev = [&](double fwd) { return std::sqrt(added_var(s, fwd)); };
    const double sd_hi = stddev(s.T);
    const double sd_lo = stddev(eps_T);
    grid.points[0] = 0.0;
    grid.points[K] = s.T - eps_T;
    for (int i = 1; i < K; ++i) {
      const double target = sd_hi + (sd_lo - sd_hi) * static_cast<double>(i) / K;
      double lo = eps_T, hi = s.T;  // std increasing in forward time
      while (hi - lo > 1e-10 * std::max(1.0, s.T)) {
        const double mid = 0.5 * (lo + hi);
        (stddev(mid) < target ? lo : hi) = mid;
      }
      grid.points[i] = s.T - 0.5 * (lo + hi);
    }
  }
  for (int i = 0; i < K; ++i) {
    require(grid.points[i + 1] > grid.points[i], ErrorKind::Numerical, "time grid is not strictly increasing");
  }
  return grid;
}

}  // namespace hguide
