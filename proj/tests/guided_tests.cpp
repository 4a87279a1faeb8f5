// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hguide/errors.hpp"
#include "hguide/guided.hpp"
#include "hguide/oracle.hpp"
#include "hguide/rng.hpp"

using namespace hguide;

namespace {

GaussianMixture prior_1d() {
  Vec mu(1), var(1);
  mu << 1.0;
  var << 4.0;
  return GaussianMixture::single(mu, var);
}

struct Fixture {
  NoiseSchedule sched = NoiseSchedule::ve(10.0, 0.01);
  TimeGrid grid = make_grid(sched, 300, GridSpacing::Uniform, 0.01);
  GaussianMixture prior = prior_1d();
  ScoreModel score = ScoreModel::analytic(sched, prior_1d());
  GuidanceSet S = GuidanceSet::halfspace(1, 0, 3.0);
  AnalyticH oracle{sched, prior, S};
};

bool states_equal_bits(const TrajectoryBatch& a, const TrajectoryBatch& b) {
  if (a.states.size() != b.states.size()) return false;
  for (std::size_t i = 0; i < a.states.size(); ++i) {
    if (a.states[i].rows() != b.states[i].rows() || a.states[i].cols() != b.states[i].cols())
      return false;
    if ((a.states[i].array() != b.states[i].array()).any()) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("eta zero reproduces the pretrained sampler bit for bit") {
  Fixture fx;
  const std::uint64_t seed = derive(1001, "null");
  const TrajectoryBatch base = sample_sde(fx.score, fx.sched, fx.grid, 64, seed);

  // a deliberately non-trivial guidance field, ignored at eta = 0
  const VectorFieldFn guide = fx.oracle.grad_log_field();
  const TrajectoryBatch nulled = sample_guided_sde(fx.score, fx.sched, fx.grid, guide, 0.0, 64, seed);
  CHECK(states_equal_bits(base, nulled));
  CHECK(nulled.provenance == Provenance::Guided);

  const TrajectoryBatch base_ode = sample_ode(fx.score, fx.sched, fx.grid, 64, seed);
  const TrajectoryBatch nulled_ode =
      sample_guided_ode(fx.score, fx.sched, fx.grid, guide, 0.0, 64, seed);
  CHECK(states_equal_bits(base_ode, nulled_ode));
}

TEST_CASE("the whole space as constraint leaves the dynamics untouched") {
  Fixture fx;
  const GuidanceSet everything = GuidanceSet::all(1);
  const AnalyticH trivial(fx.sched, fx.prior, everything);
  Vec y(1);
  y << 0.3;
  CHECK(trivial.h(2.0, y) == 1.0);
  CHECK(trivial.grad_log_h(2.0, y)[0] == 0.0);

  const std::uint64_t seed = derive(1002, "all");
  const TrajectoryBatch base = sample_sde(fx.score, fx.sched, fx.grid, 64, seed);

  GuidedSamplerConfig cfg;
  cfg.mode = GuidanceMode::OracleH;
  cfg.eta = 1.0;
  const TrajectoryBatch guided = sample_guided(fx.score, fx.sched, fx.grid, cfg, nullptr, nullptr,
                                               &trivial, true, 64, seed);
  CHECK(states_equal_bits(base, guided));
}

TEST_CASE("guided runs are deterministic in the seed") {
  Fixture fx;
  GuidedSamplerConfig cfg;
  cfg.mode = GuidanceMode::OracleH;
  cfg.eta = 1.0;
  const auto run = [&](std::uint64_t seed) {
    return sample_guided(fx.score, fx.sched, fx.grid, cfg, nullptr, nullptr, &fx.oracle, true, 32,
                         seed);
  };
  const TrajectoryBatch a = run(7);
  const TrajectoryBatch b = run(7);
  const TrajectoryBatch c = run(8);
  CHECK(equal_bits(a, b));
  CHECK_FALSE(states_equal_bits(a, c));
}

TEST_CASE("oracle guidance concentrates terminal mass inside the set") {
  Fixture fx;
  GuidedSamplerConfig cfg;
  cfg.mode = GuidanceMode::OracleH;
  cfg.eta = 1.0;
  cfg.sampler.store = PathStore::TerminalOnly;
  const TrajectoryBatch guided = sample_guided(fx.score, fx.sched, fx.grid, cfg, nullptr, nullptr,
                                               &fx.oracle, true, 2000, derive(1003, "rate"));
  const ConstraintRate on = constraint_rate(guided, fx.S);
  CHECK(on.total == 2000);
  CHECK(on.rate > 0.95);

  SamplerOptions opts;
  opts.store = PathStore::TerminalOnly;
  const TrajectoryBatch free_run =
      sample_sde(fx.score, fx.sched, fx.grid, 2000, derive(1003, "rate"), opts);
  const ConstraintRate off = constraint_rate(free_run, fx.S);
  // P(N(1,4) > 3) ~ 0.1587
  CHECK(off.rate < 0.3);
  CHECK(on.rate > off.rate + 10.0 * (on.se + off.se));
}

TEST_CASE("constraint rate matches a direct count and carries a binomial se") {
  Fixture fx;
  SamplerOptions opts;
  opts.store = PathStore::TerminalOnly;
  const TrajectoryBatch batch =
      sample_sde(fx.score, fx.sched, fx.grid, 500, derive(1004, "count"), opts);
  const Mat& terminal = batch.states.back();
  long hits = 0;
  for (int j = 0; j < terminal.cols(); ++j)
    if (fx.S.contains(terminal.col(j))) ++hits;
  const ConstraintRate r = constraint_rate(batch, fx.S);
  CHECK(r.hits == hits);
  CHECK(r.total == 500);
  CHECK(r.rate == doctest::Approx(static_cast<double>(hits) / 500.0).epsilon(1e-15));
  CHECK(r.se == doctest::Approx(std::sqrt(r.rate * (1.0 - r.rate) / 500.0)).epsilon(1e-12));
}

TEST_CASE("bad guidance strength and missing models are rejected") {
  Fixture fx;
  const VectorFieldFn guide = fx.oracle.grad_log_field();
  CHECK_THROWS_AS(sample_guided_sde(fx.score, fx.sched, fx.grid, guide, -0.5, 8, 1), Error);
  CHECK_THROWS_AS(sample_guided_sde(fx.score, fx.sched, fx.grid, guide, std::nan(""), 8, 1), Error);

  GuidedSamplerConfig cfg;
  cfg.mode = GuidanceMode::ML;
  CHECK_THROWS_AS(
      sample_guided(fx.score, fx.sched, fx.grid, cfg, nullptr, nullptr, nullptr, true, 8, 1),
      Error);
  cfg.mode = GuidanceMode::MCL;
  HModel h = make_h_model(1, 10.0, 5);
  CHECK_THROWS_AS(
      sample_guided(fx.score, fx.sched, fx.grid, cfg, &h, nullptr, nullptr, true, 8, 1), Error);
  cfg.mode = GuidanceMode::OracleH;
  CHECK_THROWS_AS(
      sample_guided(fx.score, fx.sched, fx.grid, cfg, nullptr, nullptr, nullptr, true, 8, 1),
      Error);
}

TEST_CASE("drift statistics see clipping when the cap is tiny") {
  Fixture fx;
  GuidedSamplerConfig cfg;
  cfg.mode = GuidanceMode::OracleH;
  cfg.eta = 1.0;
  cfg.c_clip = 1e-6;
  cfg.sampler.store = PathStore::TerminalOnly;
  auto stats = std::make_shared<DriftStats>();
  (void)sample_guided(fx.score, fx.sched, fx.grid, cfg, nullptr, nullptr, &fx.oracle, true, 64,
                      derive(1005, "clip"), stats);
  CHECK(stats->total > 0);
  CHECK(stats->clip_fraction() > 0.5);

  auto stats_free = std::make_shared<DriftStats>();
  cfg.c_clip = 1e9;
  (void)sample_guided(fx.score, fx.sched, fx.grid, cfg, nullptr, nullptr, &fx.oracle, true, 64,
                      derive(1005, "clip"), stats_free);
  CHECK(stats_free->clipped == 0);
}

TEST_CASE("guided ode is noise free and deterministic") {
  Fixture fx;
  GuidedSamplerConfig cfg;
  cfg.mode = GuidanceMode::OracleH;
  cfg.eta = 1.0;
  const TrajectoryBatch a = sample_guided(fx.score, fx.sched, fx.grid, cfg, nullptr, nullptr,
                                          &fx.oracle, false, 16, 42);
  const TrajectoryBatch b = sample_guided(fx.score, fx.sched, fx.grid, cfg, nullptr, nullptr,
                                          &fx.oracle, false, 16, 42);
  CHECK(equal_bits(a, b));
  CHECK_FALSE(a.stochastic);
  CHECK(a.increments.empty());
}
