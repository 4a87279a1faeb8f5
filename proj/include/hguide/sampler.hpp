// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>

#include "hguide/schedule.hpp"
#include "hguide/score.hpp"
#include "hguide/trajectory.hpp"

namespace hguide {

// Batched field over states: F(t, Y) with Y holding one column per path.
using VectorField = std::function<Mat(double, const Mat&)>;

struct SamplerOptions {
  PathStore store = PathStore::Full;
  bool keep_increments = true;       // stochastic full runs only
  double max_flagged_frac = 1e-3;    // run fails beyond this exclusion rate
};

// Euler-Maruyama on the reverse-time SDE
//   dY = [-f(T-t,Y) + g(T-t)^2 s(T-t,Y)] dt + g(T-t) dB,   Y_0 ~ p_noise.
TrajectoryBatch sample_sde(const ScoreModel&, const NoiseSchedule&, const TimeGrid&, int n_paths,
                           std::uint64_t seed, const SamplerOptions& = {});

// Explicit Euler on the probability-flow ODE
//   dY/dt = -f(T-t,Y) + (1/2) g(T-t)^2 s(T-t,Y),            Y_0 ~ p_noise.
TrajectoryBatch sample_ode(const ScoreModel&, const NoiseSchedule&, const TimeGrid&, int n_paths,
                           std::uint64_t seed, const SamplerOptions& = {});

namespace detail {
// Shared stepping core. The guided samplers call this with a guidance field
// and eta; the pretrained ones pass no field. With eta == 0 the guidance
// term is skipped entirely, so guided and pretrained runs with equal seeds
// coincide bit for bit.
TrajectoryBatch simulate(const ScoreModel&, const NoiseSchedule&, const TimeGrid&, int n_paths,
                         std::uint64_t seed, bool stochastic, const VectorField* guide, double eta,
                         Provenance, const SamplerOptions&);
}  // namespace detail

}  // namespace hguide
