// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "hguide/errors.hpp"
#include "hguide/rng.hpp"
#include "hguide/sampler.hpp"
#include "hguide/schedule.hpp"
#include "hguide/score.hpp"

using namespace hguide;

TEST_CASE("same seed reproduces the batch bit for bit") {
  const NoiseSchedule sched = NoiseSchedule::ve(10.0, 0.01);
  const TimeGrid grid = make_grid(sched, 50, GridSpacing::Uniform, 0.01);
  const ScoreModel sm = ScoreModel::analytic(sched, GaussianMixture::single1d(1.0, 4.0));
  const TrajectoryBatch a = sample_sde(sm, sched, grid, 32, derive(2, "rep"));
  const TrajectoryBatch b = sample_sde(sm, sched, grid, 32, derive(2, "rep"));
  CHECK(equal_bits(a, b));
  const TrajectoryBatch c = sample_sde(sm, sched, grid, 32, derive(3, "rep"));
  CHECK_FALSE(equal_bits(a, c));
}

TEST_CASE("stored brownian increments have the step variance") {
  const NoiseSchedule sched = NoiseSchedule::ve(10.0, 0.01);
  const TimeGrid grid = make_grid(sched, 40, GridSpacing::Uniform, 0.01);
  const ScoreModel sm = ScoreModel::analytic(sched, GaussianMixture::single1d(1.0, 4.0));
  const TrajectoryBatch b = sample_sde(sm, sched, grid, 4000, derive(8, "inc"));
  REQUIRE(b.has_increments());
  for (int i = 0; i < grid.steps(); i += 7) {
    const Mat& dB = b.increments[i];
    const double n = static_cast<double>(dB.size());
    const double mean = dB.mean();
    const double var = (dB.array() - mean).square().sum() / (n - 1.0);
    const double dt = grid.dt(i);
    CHECK(std::abs(mean) <= 5.0 * std::sqrt(dt / n));
    CHECK(std::abs(var - dt) <= 5.0 * dt * std::sqrt(2.0 / (n - 1.0)));
  }
}

TEST_CASE("sde terminal law approaches the prior under the exact score") {
  const NoiseSchedule sched = NoiseSchedule::ve(10.0, 0.01);
  const TimeGrid grid = make_grid(sched, 500, GridSpacing::Uniform, 0.01);
  const ScoreModel sm = ScoreModel::analytic(sched, GaussianMixture::single1d(1.0, 4.0));
  SamplerOptions opts;
  opts.store = PathStore::TerminalOnly;
  const TrajectoryBatch b = sample_sde(sm, sched, grid, 20000, derive(4, "sde"), opts);
  const Mat& term = b.terminal();
  const double mean = term.mean();
  const double var = (term.array() - mean).square().sum() / (term.size() - 1.0);
  CHECK(std::abs(mean - 1.0) < 0.1);
  CHECK(std::abs(var - 4.0) < 0.4);
}

TEST_CASE("probability-flow ode transports p_noise to the prior") {
  const NoiseSchedule sched = NoiseSchedule::ve(40.0, 0.01);
  const TimeGrid grid = make_grid(sched, 800, GridSpacing::Uniform, 0.04);
  const ScoreModel sm = ScoreModel::analytic(sched, GaussianMixture::single1d(1.0, 4.0));
  SamplerOptions opts;
  opts.store = PathStore::TerminalOnly;
  const TrajectoryBatch b = sample_ode(sm, sched, grid, 20000, derive(5, "ode"), opts);
  const Mat& term = b.terminal();
  const double mean = term.mean();
  const double var = (term.array() - mean).square().sum() / (term.size() - 1.0);
  CHECK(std::abs(mean - 1.0) < 0.08);
  CHECK(std::abs(var - 4.0) < 0.3);
}

TEST_CASE("ode runs are deterministic and carry no increments") {
  const NoiseSchedule sched = NoiseSchedule::ve(2.0, 0.01);
  const TimeGrid grid = make_grid(sched, 20, GridSpacing::Uniform, 0.002);
  const ScoreModel sm = ScoreModel::analytic(sched, GaussianMixture::single1d(0.0, 1.0));
  const TrajectoryBatch a = sample_ode(sm, sched, grid, 16, derive(6, "det"));
  const TrajectoryBatch b = sample_ode(sm, sched, grid, 16, derive(6, "det"));
  CHECK(equal_bits(a, b));
  CHECK_FALSE(a.has_increments());
  CHECK_FALSE(a.stochastic);
}

TEST_CASE("terminal-only storage matches the full run terminal bitwise") {
  const NoiseSchedule sched = NoiseSchedule::ve(5.0, 0.01);
  const TimeGrid grid = make_grid(sched, 64, GridSpacing::Uniform, 0.005);
  const ScoreModel sm = ScoreModel::analytic(sched, GaussianMixture::single1d(1.0, 4.0));
  SamplerOptions full, term;
  term.store = PathStore::TerminalOnly;
  const TrajectoryBatch a = sample_sde(sm, sched, grid, 50, derive(7, "cmp"), full);
  const TrajectoryBatch b = sample_sde(sm, sched, grid, 50, derive(7, "cmp"), term);
  CHECK((a.terminal() - b.terminal()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.initial() - b.initial()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("non-finite trajectories abort once the flagged budget is exceeded") {
  const NoiseSchedule sched = NoiseSchedule::ve(2.0, 0.01);
  const TimeGrid grid = make_grid(sched, 8, GridSpacing::Uniform, 0.002);
  Mlp net(1, {4}, 1, Activation::Tanh, OutputTransform::Identity, sched.T, 3);
  net.params()[0] = std::numeric_limits<double>::quiet_NaN();
  const ScoreModel broken = ScoreModel::learned(std::move(net));
  CHECK_THROWS_AS(sample_sde(broken, sched, grid, 16, derive(9, "nan")), Error);
}

TEST_CASE("grid horizon must match the schedule") {
  const NoiseSchedule a = NoiseSchedule::ve(10.0, 0.01);
  const NoiseSchedule b = NoiseSchedule::ve(5.0, 0.01);
  const TimeGrid grid = make_grid(a, 10, GridSpacing::Uniform, 0.01);
  const ScoreModel sm = ScoreModel::analytic(b, GaussianMixture::single1d(0.0, 1.0));
  CHECK_THROWS_AS(sample_sde(sm, b, grid, 4, 1), Error);
}
