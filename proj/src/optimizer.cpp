// SPDX-License-Identifier: Apache-2.0
#include "hguide/optimizer.hpp"

#include <cmath>
#include <sstream>

#include "hguide/errors.hpp"
#include "hguide/io.hpp"

namespace hguide {

void OptimizerConfig::validate() const {
  require(A > 0.0, ErrorKind::Config, "step schedule requires A > 0");
  require(B >= 0.0, ErrorKind::Config, "step schedule requires B >= 0");
  require(zeta > 0.5 && zeta <= 1.0, ErrorKind::Config,
          "step schedule requires zeta in (1/2, 1] so the steps are square-summable");
  require(lr > 0.0, ErrorKind::Config, "adam learning rate must be positive");
  require(batch >= 1, ErrorKind::Config, "batch size must be >= 1");
  require(iters >= 1, ErrorKind::Config, "iteration budget must be >= 1");
  require(clip_norm >= 0.0, ErrorKind::Config, "clip norm must be >= 0");
}

double step_size(const OptimizerConfig& cfg, long n) {
  return cfg.A / (std::pow(static_cast<double>(n), cfg.zeta) + cfg.B);
}

void sgd_step(Vec* params, Vec grad, OptState* st, const OptimizerConfig& cfg) {
  const long n = ++st->n;
  if (!grad.allFinite()) {
    ++st->skipped;
    return;
  }
  if (cfg.clip_norm > 0.0) {
    const double g = grad.norm();
    if (g > cfg.clip_norm) grad *= cfg.clip_norm / g;
  }
  if (cfg.mode == OptimizerConfig::Mode::Schedule) {
    *params -= step_size(cfg, n) * grad;
    return;
  }
  if (st->m.size() != params->size()) {
    st->m = Vec::Zero(params->size());
    st->v = Vec::Zero(params->size());
  }
  st->m = cfg.beta1 * st->m + (1.0 - cfg.beta1) * grad;
  st->v = cfg.beta2 * st->v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(n));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(n));
  *params -= (cfg.lr / bc1) * st->m.cwiseQuotient(((st->v / bc2).cwiseSqrt().array() + cfg.adam_eps).matrix());
}

std::string TrainTrace::to_csv() const {
  std::ostringstream os;
  os << "iter,loss\n";
  for (const auto& [it, l] : loss) os << it << ',' << format_double(l) << '\n';
  return os.str();
}

}  // namespace hguide
