// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "hguide/gaussian.hpp"
#include "hguide/mlp.hpp"
#include "hguide/optimizer.hpp"
#include "hguide/schedule.hpp"
#include "hguide/types.hpp"

namespace hguide {

// Score s(t, x) of the forward marginal at forward time t: either the
// closed-form mixture score, or a trained network.
struct ScoreModel {
  enum class Kind { AnalyticGmm, Learned };
  Kind kind = Kind::AnalyticGmm;
  NoiseSchedule sched;     // analytic only
  GaussianMixture prior;   // analytic only
  Mlp net;                 // learned only

  static ScoreModel analytic(const NoiseSchedule&, GaussianMixture prior);
  static ScoreModel learned(Mlp net);
  int dim() const;
};

Vec score_eval(const ScoreModel&, double t, const Vec& x);
Mat score_eval_batch(const ScoreModel&, double t, const Mat& X);

// Denoising score matching on samples of p_data. Times are uniform on
// [t_min_frac * T, T]; the regression target is the conditional score
// -(x_t - mean(t) x_0) / var(t); per-sample weight defaults to g(t)^2.
struct DsmConfig {
  OptimizerConfig opt;
  double t_min_frac = 1e-3;
};

Mlp dsm_train(Mlp net, const Mat& data, const NoiseSchedule&, const DsmConfig&, std::uint64_t seed,
              TrainTrace* trace = nullptr);

}  // namespace hguide
