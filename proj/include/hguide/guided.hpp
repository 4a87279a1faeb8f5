// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>

#include "hguide/guidance.hpp"
#include "hguide/sampler.hpp"

namespace hguide {

struct GuidedSamplerConfig {
  GuidanceMode mode = GuidanceMode::ML;
  double eta = 1.0;       // guidance strength; 0 reproduces the pretrained sampler bit for bit
  double c_clip = 1e3;    // drift norm cap c_clip / (T - t)
  SamplerOptions sampler;
};

// Reverse-time samplers with the transform drift g(T-t)^2 eta G(t, Y) added,
// where G is the guidance field (grad h / max(h, floor), q / max(h, floor),
// or the analytic grad log h). The ODE variant carries the same 1/2 factor
// as its score term.
TrajectoryBatch sample_guided_sde(const ScoreModel&, const NoiseSchedule&, const TimeGrid&,
                                  const VectorFieldFn& guide, double eta, int n_paths,
                                  std::uint64_t seed, const SamplerOptions& = {});
TrajectoryBatch sample_guided_ode(const ScoreModel&, const NoiseSchedule&, const TimeGrid&,
                                  const VectorFieldFn& guide, double eta, int n_paths,
                                  std::uint64_t seed, const SamplerOptions& = {});

// Convenience wrapper building the guidance field from models/oracle.
TrajectoryBatch sample_guided(const ScoreModel&, const NoiseSchedule&, const TimeGrid&,
                              const GuidedSamplerConfig&, const HModel* h, const QModel* q,
                              const AnalyticH* oracle, bool stochastic, int n_paths,
                              std::uint64_t seed, std::shared_ptr<DriftStats> stats = nullptr);

// Fraction of terminal states inside S, with a binomial standard error.
struct ConstraintRate {
  double rate = 0.0;
  double se = 0.0;
  long hits = 0;
  long total = 0;
};

ConstraintRate constraint_rate(const TrajectoryBatch&, const GuidanceSet&);

}  // namespace hguide
