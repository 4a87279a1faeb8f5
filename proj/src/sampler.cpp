// SPDX-License-Identifier: Apache-2.0
#include "hguide/sampler.hpp"

#include <cmath>

#include "hguide/errors.hpp"
#include "hguide/rng.hpp"

namespace hguide {

namespace detail {

TrajectoryBatch simulate(const ScoreModel& score, const NoiseSchedule& sched, const TimeGrid& grid,
                         int n_paths, std::uint64_t seed, bool stochastic, const VectorField* guide,
                         double eta, Provenance prov, const SamplerOptions& opts) {
  require(n_paths >= 0, ErrorKind::Domain, "n_paths must be >= 0");
  require(grid.steps() >= 1, ErrorKind::Domain, "time grid has no steps");
  require(std::abs(grid.horizon_T - sched.T) <= 1e-12 * std::max(1.0, sched.T), ErrorKind::Domain,
          "time grid was built for a different schedule horizon");
  const int d = score.dim();
  const int K = grid.steps();
  const double T = sched.T;

  TrajectoryBatch out;
  out.grid = grid;
  out.dim = d;
  out.seed = seed;
  out.schedule_id = sched.id();
  out.provenance = prov;
  out.store = opts.store;
  out.stochastic = stochastic;

  const bool keep_states = opts.store == PathStore::Full;
  const bool keep_incs = stochastic && keep_states && opts.keep_increments;

  if (n_paths == 0) {
    out.states.assign(keep_states ? K + 1 : 2, Mat(d, 0));
    if (keep_incs) out.increments.assign(K, Mat(d, 0));
    return out;
  }

  std::vector<std::uint64_t> keys(n_paths);
  for (int p = 0; p < n_paths; ++p) keys[p] = derive(seed, static_cast<std::uint64_t>(p));

  // initial draw from p_noise; stream slots 0..d-1 per path
  const double sd0 = std::sqrt(noise_var(sched));
  Mat Y(d, n_paths);
  for (int p = 0; p < n_paths; ++p) {
    for (int k = 0; k < d; ++k) Y(k, p) = sd0 * normal_at(keys[p], static_cast<std::uint64_t>(k));
  }

  std::vector<char> flagged(n_paths, 0);
  std::vector<Mat> states, incs;
  if (keep_states) states.reserve(K + 1);
  Mat initial = Y;
  if (keep_states) states.push_back(Y);

  Mat dB(d, n_paths), drift(d, n_paths);
  for (int i = 0; i < K; ++i) {
    const double t = grid.points[i];
    const double dt = grid.dt(i);
    const double tau = T - t;  // forward time
    const DriftDiffusion cd = coeffs(sched, tau);
    const double g2 = cd.g * cd.g;

    drift = score_eval_batch(score, tau, Y);
    drift *= stochastic ? g2 : 0.5 * g2;
    if (cd.f_lin != 0.0) drift.noalias() -= cd.f_lin * Y;
    if (guide && eta != 0.0) {
      const double scale = stochastic ? eta * g2 : 0.5 * eta * g2;
      drift.noalias() += scale * (*guide)(t, Y);
    }

    if (stochastic) {
      const double sq = std::sqrt(dt);
      const std::uint64_t base = static_cast<std::uint64_t>(d) + static_cast<std::uint64_t>(i) * d;
      for (int p = 0; p < n_paths; ++p) {
        for (int k = 0; k < d; ++k) dB(k, p) = sq * normal_at(keys[p], base + k);
      }
      Y += dt * drift + cd.g * dB;
      if (keep_incs) incs.push_back(dB);
    } else {
      Y += dt * drift;
    }

    for (int p = 0; p < n_paths; ++p) {
      if (!flagged[p] && !Y.col(p).allFinite()) flagged[p] = 1;
    }
    if (keep_states) states.push_back(Y);
  }

  int n_flagged = 0;
  for (char f : flagged) n_flagged += f;
  if (n_flagged > opts.max_flagged_frac * n_paths) {
    throw_numerical("sampler flagged " + std::to_string(n_flagged) + " of " + std::to_string(n_paths) +
                    " paths as non-finite");
  }

  const int n_keep = n_paths - n_flagged;
  const auto compact = [&](const Mat& m) {
    Mat r(d, n_keep);
    for (int p = 0, q = 0; p < n_paths; ++p) {
      if (!flagged[p]) r.col(q++) = m.col(p);
    }
    return r;
  };

  if (keep_states) {
    for (Mat& m : states) out.states.push_back(n_flagged ? compact(m) : std::move(m));
    if (keep_incs) {
      for (Mat& m : incs) out.increments.push_back(n_flagged ? compact(m) : std::move(m));
    }
  } else {
    out.states.push_back(n_flagged ? compact(initial) : std::move(initial));
    out.states.push_back(n_flagged ? compact(Y) : std::move(Y));
  }
  return out;
}

}  // namespace detail

TrajectoryBatch sample_sde(const ScoreModel& score, const NoiseSchedule& sched, const TimeGrid& grid,
                           int n_paths, std::uint64_t seed, const SamplerOptions& opts) {
  return detail::simulate(score, sched, grid, n_paths, seed, true, nullptr, 0.0, Provenance::Pretrained,
                          opts);
}

TrajectoryBatch sample_ode(const ScoreModel& score, const NoiseSchedule& sched, const TimeGrid& grid,
                           int n_paths, std::uint64_t seed, const SamplerOptions& opts) {
  return detail::simulate(score, sched, grid, n_paths, seed, false, nullptr, 0.0, Provenance::Pretrained,
                          opts);
}

}  // namespace hguide
