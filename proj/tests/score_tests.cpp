// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hguide/rng.hpp"
#include "hguide/schedule.hpp"
#include "hguide/score.hpp"

using namespace hguide;

TEST_CASE("analytic score model evaluates the forward-marginal score") {
  const NoiseSchedule sched = NoiseSchedule::ve(10.0, 0.01);
  const GaussianMixture prior = GaussianMixture::single1d(1.0, 4.0);
  const ScoreModel sm = ScoreModel::analytic(sched, prior);
  CHECK(sm.dim() == 1);

  for (double t : {0.0, 2.5, 10.0}) {
    const GaussianMixture marginal = forward_marginal(sched, prior, t);
    for (double x : {-3.0, 0.0, 1.0, 4.5}) {
      Vec v(1);
      v << x;
      CHECK(score_eval(sm, t, v)[0] == doctest::Approx(marginal.score(v)[0]).epsilon(1e-12));
    }
  }
}

TEST_CASE("batched evaluation matches pointwise evaluation") {
  const NoiseSchedule sched = NoiseSchedule::vp(1.0, 0.1, 20.0);
  GaussianMixture prior;
  prior.weights = Vec::Constant(1, 1.0);
  Vec mu(2);
  mu << 0.5, -1.0;
  Mat cov = Mat::Identity(2, 2) * 2.0;
  prior.means = {mu};
  prior.covs = {cov};
  const ScoreModel sm = ScoreModel::analytic(sched, prior);

  Mat X(2, 9);
  Stream rng(derive(4, "cols"));
  for (int j = 0; j < 9; ++j) {
    X(0, j) = 2.0 * rng.normal();
    X(1, j) = 2.0 * rng.normal();
  }
  const Mat S = score_eval_batch(sm, 0.6, X);
  for (int j = 0; j < 9; ++j) {
    CHECK((S.col(j) - score_eval(sm, 0.6, X.col(j))).cwiseAbs().maxCoeff() <= 1e-13);
  }
}

TEST_CASE("dsm training approaches the analytic gaussian score") {
  const NoiseSchedule sched = NoiseSchedule::ve(10.0, 0.01);
  const GaussianMixture prior = GaussianMixture::single1d(1.0, 4.0);
  const Mat data = prior.sample_batch(20000, derive(17, "data"));

  Mlp net(1, {32, 32}, 1, Activation::Tanh, OutputTransform::Identity, sched.T, derive(17, "init"));
  DsmConfig cfg;
  cfg.opt.mode = OptimizerConfig::Mode::Adam;
  cfg.opt.lr = 1e-3;
  cfg.opt.batch = 128;
  cfg.opt.iters = 6000;
  TrainTrace trace;
  net = dsm_train(std::move(net), data, sched, cfg, derive(17, "dsm"), &trace);

  CHECK_FALSE(trace.loss.empty());
  CHECK(trace.loss.back().second < trace.loss.front().second);

  const ScoreModel exact = ScoreModel::analytic(sched, prior);
  double mse = 0.0;
  int count = 0;
  for (int ti = 0; ti <= 9; ++ti) {
    const double t = 0.1 * sched.T + 0.9 * sched.T * ti / 9.0;
    for (int xi = 0; xi <= 27; ++xi) {
      const double x = -6.0 + 14.0 * xi / 27.0;
      Vec v(1);
      v << x;
      const double got = net.fwd(t, v)[0];
      const double want = score_eval(exact, t, v)[0];
      mse += (got - want) * (got - want);
      ++count;
    }
  }
  mse /= count;
  CHECK(mse <= 0.2);
}

TEST_CASE("dsm training is deterministic in the seed") {
  const NoiseSchedule sched = NoiseSchedule::ve(4.0, 0.01);
  const GaussianMixture prior = GaussianMixture::single1d(0.0, 1.0);
  const Mat data = prior.sample_batch(512, derive(3, "d"));

  auto train_once = [&]() {
    Mlp net(1, {8}, 1, Activation::Tanh, OutputTransform::Identity, sched.T, derive(5, "i"));
    DsmConfig cfg;
    cfg.opt.mode = OptimizerConfig::Mode::Adam;
    cfg.opt.iters = 200;
    cfg.opt.batch = 32;
    return dsm_train(std::move(net), data, sched, cfg, derive(5, "t"));
  };
  const Mlp a = train_once();
  const Mlp b = train_once();
  CHECK((a.params() - b.params()).cwiseAbs().maxCoeff() == 0.0);
}
