// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "hguide/types.hpp"

namespace hguide {

// Stochastic-approximation step sizes delta_n = A / (n^zeta + B), or an
// adaptive-moment rule for the budget-constrained runs. Gradients may be
// norm-clipped before the update; non-finite gradients skip the step and
// are counted.
struct OptimizerConfig {
  enum class Mode { Schedule, Adam };
  Mode mode = Mode::Schedule;

  double A = 0.1;     // schedule numerator
  double B = 100.0;   // schedule offset
  double zeta = 1.0;  // schedule exponent, in (1/2, 1] so the steps are square-summable

  double lr = 1e-3;  // adam
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  int batch = 128;
  int iters = 20000;
  double clip_norm = 0.0;  // 0 disables clipping

  void validate() const;
};

double step_size(const OptimizerConfig&, long n);  // n is 1-based

struct OptState {
  Vec m, v;  // adam moments
  long n = 0;
  int skipped = 0;
};

void sgd_step(Vec* params, Vec grad, OptState*, const OptimizerConfig&);

struct TrainTrace {
  std::vector<std::pair<long, double>> loss;  // (iteration, running loss)
  int skipped = 0;
  std::string to_csv() const;
};

}  // namespace hguide
