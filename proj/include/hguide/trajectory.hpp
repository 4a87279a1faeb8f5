// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hguide/schedule.hpp"
#include "hguide/types.hpp"

namespace hguide {

// Batches are tagged with how they were produced. Guidance training is
// off-policy and consumes pretrained batches only; the trainers check this
// tag and refuse guided output.
enum class Provenance { Pretrained, Guided };

enum class PathStore { Full, TerminalOnly };

std::string to_string(Provenance);
Provenance provenance_from_string(const std::string&);

struct TrajectoryBatch {
  TimeGrid grid;
  int dim = 0;
  std::uint64_t seed = 0;
  std::string schedule_id;
  Provenance provenance = Provenance::Pretrained;
  PathStore store = PathStore::Full;
  bool stochastic = true;

  // Full: K+1 state blocks, one d x n matrix per grid point.
  // TerminalOnly: two blocks, initial and terminal.
  std::vector<Mat> states;
  // Brownian increments per step for stochastic full runs, dB_i ~ N(0, dt_i I).
  std::vector<Mat> increments;

  int n_paths() const { return states.empty() ? 0 : static_cast<int>(states[0].cols()); }
  bool full() const { return store == PathStore::Full; }
  bool has_increments() const { return !increments.empty(); }
  const Mat& initial() const { return states.front(); }
  const Mat& terminal() const { return states.back(); }
};

void save_batch(const TrajectoryBatch&, const std::string& path);
TrajectoryBatch load_batch(const std::string& path);
bool equal_bits(const TrajectoryBatch&, const TrajectoryBatch&);

std::string terminal_csv(const TrajectoryBatch&);
void write_terminal_csv(const TrajectoryBatch&, const std::string& path);

}  // namespace hguide
