// SPDX-License-Identifier: Apache-2.0
#include "hguide/score.hpp"

#include <cmath>

#include "hguide/errors.hpp"

namespace hguide {

ScoreModel ScoreModel::analytic(const NoiseSchedule& sched, GaussianMixture prior) {
  prior.validate();
  ScoreModel m;
  m.kind = Kind::AnalyticGmm;
  m.sched = sched;
  m.prior = std::move(prior);
  return m;
}

ScoreModel ScoreModel::learned(Mlp net) {
  ScoreModel m;
  m.kind = Kind::Learned;
  m.net = std::move(net);
  require(m.net.out_dim() == m.net.state_dim(), ErrorKind::Domain,
          "learned score network must map states to vectors of the same dimension");
  return m;
}

int ScoreModel::dim() const {
  return kind == Kind::AnalyticGmm ? prior.dim() : net.state_dim();
}

Mat score_eval_batch(const ScoreModel& m, double t, const Mat& X) {
  require(X.rows() == m.dim(), ErrorKind::Domain, "score input dimension mismatch");
  if (m.kind == ScoreModel::Kind::AnalyticGmm) {
    require(t >= 0.0 && t <= m.sched.T, ErrorKind::Domain, "score time outside [0, T]");
    return forward_marginal(m.sched, m.prior, t).score_batch(X);
  }
  return m.net.fwd_batch(t, X);
}

Vec score_eval(const ScoreModel& m, double t, const Vec& x) {
  Mat X(x.size(), 1);
  X.col(0) = x;
  return score_eval_batch(m, t, X).col(0);
}

Mlp dsm_train(Mlp net, const Mat& data, const NoiseSchedule& sched, const DsmConfig& cfg,
              std::uint64_t seed, TrainTrace* trace) {
  cfg.opt.validate();
  const int n = static_cast<int>(data.cols());
  const int d = static_cast<int>(data.rows());
  require(n > 0, ErrorKind::Domain, "dsm training needs a nonempty dataset");
  require(net.state_dim() == d && net.out_dim() == d, ErrorKind::Domain,
          "score network shape does not match the dataset");
  require(cfg.t_min_frac > 0.0 && cfg.t_min_frac < 1.0, ErrorKind::Config, "t_min_frac must be in (0, 1)");

  const double t_min = cfg.t_min_frac * sched.T;
  Stream rng(derive(seed, "dsm"));
  OptState st;
  const int B = cfg.opt.batch;

  Vec ts(B);
  Mat xt(d, B), target(d, B), upstream(d, B);
  double first_loss = -1.0;
  int high_steps = 0;
  double running = 0.0;
  int running_n = 0;

  for (int it = 1; it <= cfg.opt.iters; ++it) {
    for (int j = 0; j < B; ++j) {
      const int pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
      const double t = t_min + (sched.T - t_min) * rng.uniform();
      const double mcoef = mean_coef(sched, t);
      const double sd = std::sqrt(added_var(sched, t));
      ts[j] = t;
      for (int k = 0; k < d; ++k) {
        const double eps = rng.normal();
        xt(k, j) = mcoef * data(k, pick) + sd * eps;
        target(k, j) = -eps / sd;
      }
    }
    const Mlp::Cache cache = net.forward_cached(ts, xt);
    const Mat resid = cache.out - target;

    double loss = 0.0;
    for (int j = 0; j < B; ++j) {
      const double g = coeffs(sched, ts[j]).g;
      const double lambda = g * g;
      loss += lambda * resid.col(j).squaredNorm();
      upstream.col(j) = (2.0 * lambda / B) * resid.col(j);
    }
    loss /= B;
    if (!std::isfinite(loss)) throw_numerical("dsm loss became non-finite at iteration " + std::to_string(it));
    if (first_loss < 0.0) first_loss = loss;
    high_steps = (loss > 10.0 * first_loss) ? high_steps + 1 : 0;
    if (high_steps >= 100) throw_numerical("dsm training diverged: loss stayed above 10x the initial value");

    sgd_step(&net.params(), net.backward_params(cache, upstream), &st, cfg.opt);

    running += loss;
    ++running_n;
    if (trace && (it % 100 == 0 || it == cfg.opt.iters)) {
      trace->loss.emplace_back(it, running / running_n);
      running = 0.0;
      running_n = 0;
    }
  }
  if (trace) trace->skipped = st.skipped;
  return net;
}

}  // namespace hguide
