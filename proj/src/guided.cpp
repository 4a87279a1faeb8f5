// SPDX-License-Identifier: Apache-2.0
#include "hguide/guided.hpp"

#include <cmath>

#include "hguide/errors.hpp"
#include "hguide/oracle.hpp"

namespace hguide {

TrajectoryBatch sample_guided_sde(const ScoreModel& score, const NoiseSchedule& sched,
                                  const TimeGrid& grid, const VectorFieldFn& guide, double eta,
                                  int n_paths, std::uint64_t seed, const SamplerOptions& opts) {
  require(std::isfinite(eta) && eta >= 0.0, ErrorKind::Domain, "eta must be finite and >= 0");
  const VectorField field = guide;
  return detail::simulate(score, sched, grid, n_paths, seed, true, &field, eta,
                          Provenance::Guided, opts);
}

TrajectoryBatch sample_guided_ode(const ScoreModel& score, const NoiseSchedule& sched,
                                  const TimeGrid& grid, const VectorFieldFn& guide, double eta,
                                  int n_paths, std::uint64_t seed, const SamplerOptions& opts) {
  require(std::isfinite(eta) && eta >= 0.0, ErrorKind::Domain, "eta must be finite and >= 0");
  const VectorField field = guide;
  return detail::simulate(score, sched, grid, n_paths, seed, false, &field, eta,
                          Provenance::Guided, opts);
}

TrajectoryBatch sample_guided(const ScoreModel& score, const NoiseSchedule& sched,
                              const TimeGrid& grid, const GuidedSamplerConfig& cfg, const HModel* h,
                              const QModel* q, const AnalyticH* oracle, bool stochastic, int n_paths,
                              std::uint64_t seed, std::shared_ptr<DriftStats> stats) {
  const VectorFieldFn guide =
      make_guidance_field(cfg.mode, h, q, oracle, cfg.c_clip, grid.horizon_T, std::move(stats));
  return stochastic
             ? sample_guided_sde(score, sched, grid, guide, cfg.eta, n_paths, seed, cfg.sampler)
             : sample_guided_ode(score, sched, grid, guide, cfg.eta, n_paths, seed, cfg.sampler);
}

ConstraintRate constraint_rate(const TrajectoryBatch& batch, const GuidanceSet& S) {
  const Vec ind = S.indicator_batch(batch.terminal());
  ConstraintRate out;
  out.total = ind.size();
  require(out.total > 0, ErrorKind::Domain, "batch has no paths");
  out.hits = static_cast<long>(ind.sum() + 0.5);
  out.rate = static_cast<double>(out.hits) / out.total;
  out.se = std::sqrt(out.rate * (1.0 - out.rate) / out.total);
  return out;
}

}  // namespace hguide
