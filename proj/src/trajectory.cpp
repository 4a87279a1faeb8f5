// SPDX-License-Identifier: Apache-2.0
#include "hguide/trajectory.hpp"

#include <cstring>
#include <sstream>

#include "hguide/errors.hpp"
#include "hguide/io.hpp"

namespace hguide {

std::string to_string(Provenance p) { return p == Provenance::Pretrained ? "pretrained" : "guided"; }

Provenance provenance_from_string(const std::string& s) {
  if (s == "pretrained") return Provenance::Pretrained;
  if (s == "guided") return Provenance::Guided;
  throw_format("unknown provenance '" + s + "'");
}

void save_batch(const TrajectoryBatch& b, const std::string& path) {
  nlohmann::json header = {
      {"kind", "trajectory"},
      {"dim", b.dim},
      {"n_paths", b.n_paths()},
      {"grid_points", b.grid.points},
      {"grid_spacing", b.grid.spacing == GridSpacing::Uniform ? "uniform" : "noise_level"},
      {"eps_T", b.grid.eps_T},
      {"horizon_T", b.grid.horizon_T},
      {"seed", b.seed},
      {"schedule_id", b.schedule_id},
      {"provenance", to_string(b.provenance)},
      {"store", b.store == PathStore::Full ? "full" : "terminal"},
      {"stochastic", b.stochastic},
      {"state_blocks", b.states.size()},
      {"increment_blocks", b.increments.size()},
  };
  std::vector<double> payload;
  const std::size_t per = static_cast<std::size_t>(b.dim) * b.n_paths();
  payload.reserve(per * (b.states.size() + b.increments.size()));
  for (const Mat& m : b.states) payload.insert(payload.end(), m.data(), m.data() + m.size());
  for (const Mat& m : b.increments) payload.insert(payload.end(), m.data(), m.data() + m.size());
  write_artifact(path, header, payload.data(), payload.size());
}

TrajectoryBatch load_batch(const std::string& path) {
  Artifact art = read_artifact(path, "trajectory");
  const auto& h = art.header;
  TrajectoryBatch b;
  b.dim = h.at("dim").get<int>();
  b.grid.points = h.at("grid_points").get<std::vector<double>>();
  b.grid.spacing = h.at("grid_spacing").get<std::string>() == "uniform" ? GridSpacing::Uniform : GridSpacing::NoiseLevel;
  b.grid.eps_T = h.at("eps_T").get<double>();
  b.grid.horizon_T = h.at("horizon_T").get<double>();
  b.seed = h.at("seed").get<std::uint64_t>();
  b.schedule_id = h.at("schedule_id").get<std::string>();
  b.provenance = provenance_from_string(h.at("provenance").get<std::string>());
  b.store = h.at("store").get<std::string>() == "full" ? PathStore::Full : PathStore::TerminalOnly;
  b.stochastic = h.at("stochastic").get<bool>();
  const int n = h.at("n_paths").get<int>();
  const std::size_t sb = h.at("state_blocks").get<std::size_t>();
  const std::size_t ib = h.at("increment_blocks").get<std::size_t>();
  const std::size_t per = static_cast<std::size_t>(b.dim) * n;
  require(art.payload.size() == per * (sb + ib), ErrorKind::Format, "trajectory payload size mismatch");
  const double* p = art.payload.data();
  for (std::size_t i = 0; i < sb; ++i, p += per) b.states.emplace_back(Eigen::Map<const Mat>(p, b.dim, n));
  for (std::size_t i = 0; i < ib; ++i, p += per) b.increments.emplace_back(Eigen::Map<const Mat>(p, b.dim, n));
  return b;
}

bool equal_bits(const TrajectoryBatch& a, const TrajectoryBatch& b) {
  if (a.dim != b.dim || a.n_paths() != b.n_paths() || a.grid.points != b.grid.points ||
      a.schedule_id != b.schedule_id || a.provenance != b.provenance || a.store != b.store ||
      a.stochastic != b.stochastic || a.seed != b.seed || a.states.size() != b.states.size() ||
      a.increments.size() != b.increments.size()) {
    return false;
  }
  const auto same = [](const Mat& x, const Mat& y) {
    return x.size() == y.size() &&
           std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) == 0;
  };
  for (std::size_t i = 0; i < a.states.size(); ++i) {
    if (!same(a.states[i], b.states[i])) return false;
  }
  for (std::size_t i = 0; i < a.increments.size(); ++i) {
    if (!same(a.increments[i], b.increments[i])) return false;
  }
  return true;
}

std::string terminal_csv(const TrajectoryBatch& b) {
  std::ostringstream os;
  for (int k = 0; k < b.dim; ++k) os << (k ? "," : "") << 'y' << k;
  os << '\n';
  const Mat& term = b.terminal();
  for (int j = 0; j < term.cols(); ++j) {
    for (int k = 0; k < b.dim; ++k) os << (k ? "," : "") << format_double(term(k, j));
    os << '\n';
  }
  return os.str();
}

void write_terminal_csv(const TrajectoryBatch& b, const std::string& path) {
  write_text_file(path, terminal_csv(b));
}

}  // namespace hguide
