// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "hguide/errors.hpp"
#include "hguide/guidance.hpp"
#include "hguide/metrics.hpp"
#include "hguide/oracle.hpp"
#include "hguide/rng.hpp"
#include "hguide/schedule.hpp"

using namespace hguide;

namespace {
const double kInf = std::numeric_limits<double>::infinity();
}

TEST_CASE("truncated normal stats for the reference target") {
  // N(1, 4) above 3: alpha = 1, mass = 1 - Phi(1)
  const TruncStats ts = truncated_normal_stats(1.0, 4.0, 3.0, kInf);
  CHECK(ts.mass == doctest::Approx(0.15865525393145707).epsilon(1e-12));
  CHECK(ts.mean == doctest::Approx(4.050270552321962).epsilon(1e-12));
  CHECK(ts.var == doctest::Approx(0.7963906622813948).epsilon(1e-10));
}

TEST_CASE("two-sided truncation matches quadrature") {
  const double mu = 0.5, var = 2.25, lo = -1.0, hi = 2.0;
  const TruncStats ts = truncated_normal_stats(mu, var, lo, hi);
  const double sigma = std::sqrt(var);
  const auto pdf = [&](double x) {
    return std::exp(-0.5 * (x - mu) * (x - mu) / var) / (sigma * std::sqrt(2.0 * M_PI));
  };
  const double mass = integrate(pdf, lo, hi, 1e-12);
  const double mean = integrate([&](double x) { return x * pdf(x); }, lo, hi, 1e-12) / mass;
  const double second = integrate([&](double x) { return x * x * pdf(x); }, lo, hi, 1e-12) / mass;
  CHECK(ts.mass == doctest::Approx(mass).epsilon(1e-10));
  CHECK(ts.mean == doctest::Approx(mean).epsilon(1e-10));
  CHECK(ts.var == doctest::Approx(second - mean * mean).epsilon(1e-8));
}

TEST_CASE("log mass stays finite and monotone deep in the tail") {
  double prev = 0.0;
  for (int i = 1; i <= 12; ++i) {
    const double alpha = 10.0 * i;
    double lm, ratio;
    log_mass_and_ratio(alpha, kInf, &lm, &ratio);
    CHECK(std::isfinite(lm));
    CHECK(lm < 0.0);
    if (i > 1) CHECK(lm < prev);
    prev = lm;
    // hazard of a one-sided tail: ratio ~ alpha + 1/alpha
    CHECK(ratio > alpha);
    CHECK(ratio < alpha + 2.0 / alpha);
  }

  // narrow interval far out: mass ~ phi(a) * width, ratio ~ midpoint
  double lm, ratio;
  log_mass_and_ratio(40.0, 40.1, &lm, &ratio);
  CHECK(std::isfinite(lm));
  CHECK(ratio > 40.0);
  CHECK(ratio < 40.2);
}

TEST_CASE("reflection symmetry of the truncated moments") {
  const TruncStats right = truncated_normal_stats(0.0, 1.0, 1.0, 2.0);
  const TruncStats left = truncated_normal_stats(0.0, 1.0, -2.0, -1.0);
  CHECK(left.mass == doctest::Approx(right.mass).epsilon(1e-13));
  CHECK(left.mean == doctest::Approx(-right.mean).epsilon(1e-12));
  CHECK(left.var == doctest::Approx(right.var).epsilon(1e-11));
}

TEST_CASE("truncated cdf endpoints and median") {
  const auto cdf = truncated_normal_cdf(1.0, 4.0, 3.0, kInf);
  CHECK(cdf(2.9) == 0.0);
  CHECK(cdf(3.0) == 0.0);
  CHECK(cdf(1e9) == 1.0);
  // median: solve Phi((x-1)/2) = Phi(1) + 0.5 (1 - Phi(1))
  CHECK(cdf(3.819217418586907) == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("mixture truncation helpers reduce to the single-component case") {
  const GaussianMixture single = GaussianMixture::single1d(1.0, 4.0);
  const TruncStats a = truncated_mixture_stats(single, 3.0, kInf);
  const TruncStats b = truncated_normal_stats(1.0, 4.0, 3.0, kInf);
  CHECK(a.mass == doctest::Approx(b.mass).epsilon(1e-13));
  CHECK(a.mean == doctest::Approx(b.mean).epsilon(1e-13));
  CHECK(a.var == doctest::Approx(b.var).epsilon(1e-12));

  const auto cm = truncated_mixture_cdf(single, 3.0, kInf);
  const auto cs = truncated_normal_cdf(1.0, 4.0, 3.0, kInf);
  for (double x : {3.1, 4.0, 5.5, 8.0}) CHECK(cm(x) == doctest::Approx(cs(x)).epsilon(1e-12));
}

TEST_CASE("mixture truncation against quadrature") {
  GaussianMixture mix;
  mix.weights = Vec(2);
  mix.weights << 0.4, 0.6;
  mix.means = {Vec::Constant(1, -1.0), Vec::Constant(1, 2.0)};
  mix.covs = {Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 0.25)};
  const double lo = 0.0, hi = 3.0;
  const auto pdf = [&](double x) {
    Vec v(1);
    v << x;
    return mix.pdf(v);
  };
  const double mass = integrate(pdf, lo, hi, 1e-12);
  const double mean = integrate([&](double x) { return x * pdf(x); }, lo, hi, 1e-12) / mass;
  const TruncStats ts = truncated_mixture_stats(mix, lo, hi);
  CHECK(ts.mass == doctest::Approx(mass).epsilon(1e-10));
  CHECK(ts.mean == doctest::Approx(mean).epsilon(1e-10));

  const auto cdf = truncated_mixture_cdf(mix, lo, hi);
  for (double x : {0.5, 1.0, 2.0, 2.9}) {
    const double want = integrate(pdf, lo, x, 1e-12) / mass;
    CHECK(cdf(x) == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("rejection sampler matches the truncated moments") {
  const GaussianMixture prior = GaussianMixture::single1d(1.0, 4.0);
  const GuidanceSet S = GuidanceSet::halfspace(1, 0, 3.0);
  double acc = 0.0;
  const Mat draws = rejection_sample(prior, S, 40000, derive(3, "rej"), &acc);
  REQUIRE(draws.cols() == 40000);
  CHECK(acc == doctest::Approx(0.15866).epsilon(0.05));
  const TruncStats ts = truncated_normal_stats(1.0, 4.0, 3.0, kInf);
  const double mean = draws.row(0).mean();
  const double var =
      (draws.row(0).array() - mean).square().sum() / (draws.cols() - 1.0);
  CHECK(std::abs(mean - ts.mean) <= 5.0 * std::sqrt(ts.var / draws.cols()));
  CHECK(std::abs(var - ts.var) <= 0.05);
  for (int j = 0; j < draws.cols(); j += 97) CHECK(draws(0, j) > 3.0);
}

TEST_CASE("rejection sampler refuses vanishing sets") {
  const GaussianMixture prior = GaussianMixture::single1d(0.0, 1.0);
  const GuidanceSet S = GuidanceSet::halfspace(1, 0, 9.0);
  CHECK_THROWS_AS(rejection_sample(prior, S, 10, derive(4, "far")), Error);
}

TEST_CASE("analytic h at t = 0 equals the set mass under the posterior-free limit") {
  const NoiseSchedule sched = NoiseSchedule::ve(10.0, 0.01);
  const GuidanceSet S = GuidanceSet::halfspace(1, 0, 3.0);
  const AnalyticH oracle(sched, GaussianMixture::single1d(1.0, 4.0), S);

  // at backward time 0 (forward T), conditioning on a diffuse observation
  // barely moves the prior: h ~ P(N(1,4) > 3)
  Vec y(1);
  y << 0.0;
  CHECK(oracle.h(0.0, y) == doctest::Approx(0.15865525393).epsilon(0.02));

  // near the terminal time h approaches the indicator
  const double t_late = sched.T - 1e-7;
  y << 3.5;
  CHECK(oracle.h(t_late, y) == doctest::Approx(1.0).epsilon(1e-6));
  y << 2.5;
  CHECK(oracle.h(t_late, y) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("analytic grad log h matches finite differences") {
  const NoiseSchedule sched = NoiseSchedule::ve(10.0, 0.01);
  const GuidanceSet S = GuidanceSet::halfspace(1, 0, 3.0);
  const AnalyticH oracle(sched, GaussianMixture::single1d(1.0, 4.0), S);
  Stream rng(derive(6, "fd"));
  for (int i = 0; i < 60; ++i) {
    const double t = 9.5 * rng.uniform();
    Vec y(1);
    y << -6.0 + 14.0 * rng.uniform();
    const double eps = 1e-6 * std::max(1.0, std::abs(y[0]));
    Vec yp = y, ym = y;
    yp[0] += eps;
    ym[0] -= eps;
    const double fd = (oracle.log_h(t, yp) - oracle.log_h(t, ym)) / (2.0 * eps);
    const double an = oracle.grad_log_h(t, y)[0];
    CHECK(std::abs(an - fd) <= 1e-4 * std::max(1.0, std::abs(an)));
  }
}

TEST_CASE("analytic h handles 2d boxes and matches the product structure") {
  const NoiseSchedule sched = NoiseSchedule::ve(10.0, 0.01);
  Vec lo(2), hi(2);
  lo << 1.0, 1.0;
  hi << kInf, kInf;
  const GuidanceSet S = GuidanceSet::box(lo, hi);
  GaussianMixture prior;
  prior.weights = Vec::Constant(1, 1.0);
  prior.means = {Vec::Zero(2)};
  prior.covs = {4.0 * Mat::Identity(2, 2)};
  const AnalyticH oracle2(sched, prior, S);

  const AnalyticH oracle1(sched, GaussianMixture::single1d(0.0, 4.0),
                          GuidanceSet::halfspace(1, 0, 1.0));
  Vec y2(2);
  y2 << 0.3, -1.2;
  Vec a(1), b(1);
  a << 0.3;
  b << -1.2;
  for (double t : {0.0, 5.0, 9.0}) {
    CHECK(oracle2.log_h(t, y2) ==
          doctest::Approx(oracle1.log_h(t, a) + oracle1.log_h(t, b)).epsilon(1e-10));
    const Vec g = oracle2.grad_log_h(t, y2);
    CHECK(g[0] == doctest::Approx(oracle1.grad_log_h(t, a)[0]).epsilon(1e-10));
    CHECK(g[1] == doctest::Approx(oracle1.grad_log_h(t, b)[0]).epsilon(1e-10));
  }
}

TEST_CASE("batch evaluation matches scalar calls and handles the terminal limit") {
  const NoiseSchedule sched = NoiseSchedule::ve(10.0, 0.01);
  const GuidanceSet S = GuidanceSet::halfspace(1, 0, 3.0);
  const AnalyticH oracle(sched, GaussianMixture::single1d(1.0, 4.0), S);
  Mat Y(1, 5);
  Y << -2.0, 0.0, 2.99, 3.01, 6.0;
  Vec h;
  Mat grad;
  oracle.eval_batch(4.0, Y, &h, &grad);
  for (int j = 0; j < 5; ++j) {
    CHECK(h[j] == doctest::Approx(oracle.h(4.0, Y.col(j))).epsilon(1e-13));
    CHECK(grad(0, j) == doctest::Approx(oracle.grad_log_h(4.0, Y.col(j))[0]).epsilon(1e-13));
  }

  oracle.eval_batch(sched.T, Y, &h, &grad);
  CHECK(h[2] == 0.0);
  CHECK(h[3] == 1.0);
  CHECK(grad(0, 3) == 0.0);
}

TEST_CASE("analytic h rejects unsupported priors and sets") {
  const NoiseSchedule sched = NoiseSchedule::ve(10.0, 0.01);
  GaussianMixture two;
  two.weights = Vec(2);
  two.weights << 0.5, 0.5;
  two.means = {Vec::Zero(1), Vec::Constant(1, 2.0)};
  two.covs = {Mat::Constant(1, 1, 1.0), Mat::Constant(1, 1, 1.0)};
  CHECK_THROWS_AS(AnalyticH(sched, two, GuidanceSet::halfspace(1, 0, 0.0)), Error);

  GaussianMixture corr;
  corr.weights = Vec::Constant(1, 1.0);
  corr.means = {Vec::Zero(2)};
  Mat c(2, 2);
  c << 1.0, 0.5, 0.5, 1.0;
  corr.covs = {c};
  CHECK_THROWS_AS(AnalyticH(sched, corr, GuidanceSet::halfspace(2, 0, 0.0)), Error);

  Mat A(1, 1);
  A << 2.0;
  const GuidanceSet lin = GuidanceSet::linear(A, Vec::Constant(1, 0.0), Vec::Constant(1, kInf));
  CHECK_THROWS_AS(AnalyticH(sched, GaussianMixture::single1d(0.0, 1.0), lin), Error);
}

TEST_CASE("pde march reproduces the closed form away from the walls") {
  const NoiseSchedule sched = NoiseSchedule::ve(2.0, 0.01);
  const GuidanceSet S = GuidanceSet::halfspace(1, 0, 1.0);
  const AnalyticH oracle(sched, GaussianMixture::single1d(0.0, 1.0), S);
  const PdeCheckResult r = h_pde_check_1d(oracle, -12.0, 14.0, 561, 4800);
  CHECK(r.max_abs_err <= 0.01);
}
