// SPDX-License-Identifier: Apache-2.0
#include "hguide/guidance.hpp"

#include <cmath>
#include <limits>

#include "hguide/errors.hpp"
#include "hguide/oracle.hpp"
#include "hguide/rng.hpp"

namespace hguide {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_open_box(const Vec& lo, const Vec& hi) {
  require(lo.size() == hi.size(), ErrorKind::Domain, "box bounds disagree in dimension");
  for (Eigen::Index k = 0; k < lo.size(); ++k) {
    require(lo[k] < hi[k], ErrorKind::Domain, "guidance set has an empty interval on axis " + std::to_string(k));
  }
}

nlohmann::json bound_to_json(double v) {
  if (std::isinf(v)) return nullptr;
  return v;
}

double bound_from_json(const nlohmann::json& j, double inf_sign) {
  if (j.is_null()) return inf_sign * kInf;
  return j.get<double>();
}
}  // namespace

GuidanceSet GuidanceSet::all(int dim) {
  return box(Vec::Constant(dim, -kInf), Vec::Constant(dim, kInf));
}

GuidanceSet GuidanceSet::box(Vec lo, Vec hi) {
  check_open_box(lo, hi);
  GuidanceSet s;
  s.form_ = Form::Box;
  s.dim_ = static_cast<int>(lo.size());
  s.lo_ = std::move(lo);
  s.hi_ = std::move(hi);
  return s;
}

GuidanceSet GuidanceSet::interval(int dim, int axis, double lo, double hi) {
  require(axis >= 0 && axis < dim, ErrorKind::Domain, "interval axis out of range");
  Vec l = Vec::Constant(dim, -kInf), h = Vec::Constant(dim, kInf);
  l[axis] = lo;
  h[axis] = hi;
  return box(std::move(l), std::move(h));
}

GuidanceSet GuidanceSet::halfspace(int dim, int axis, double lo) {
  return interval(dim, axis, lo, kInf);
}

GuidanceSet GuidanceSet::linear(Mat A, Vec lo, Vec hi) {
  check_open_box(lo, hi);
  require(A.rows() == lo.size(), ErrorKind::Domain, "linear map rows must match bound count");
  GuidanceSet s;
  s.form_ = Form::Linear;
  s.dim_ = static_cast<int>(A.cols());
  s.A_ = std::move(A);
  s.lo_ = std::move(lo);
  s.hi_ = std::move(hi);
  return s;
}

GuidanceSet GuidanceSet::functional(int dim, std::function<Vec(const Vec&)> F, Vec lo, Vec hi) {
  check_open_box(lo, hi);
  GuidanceSet s;
  s.form_ = Form::Functional;
  s.dim_ = dim;
  s.F_ = std::move(F);
  s.lo_ = std::move(lo);
  s.hi_ = std::move(hi);
  return s;
}

bool GuidanceSet::contains(const Vec& y) const {
  require(y.size() == dim_, ErrorKind::Domain, "guidance set dimension mismatch");
  const auto in_box = [&](const Vec& v) {
    for (Eigen::Index k = 0; k < v.size(); ++k) {
      if (!(v[k] > lo_[k] && v[k] < hi_[k])) return false;
    }
    return true;
  };
  switch (form_) {
    case Form::Box:
      return in_box(y);
    case Form::Linear:
      return in_box(A_ * y);
    case Form::Functional:
      return in_box(F_(y));
  }
  return false;
}

Vec GuidanceSet::indicator_batch(const Mat& Y) const {
  Vec out(Y.cols());
  for (Eigen::Index j = 0; j < Y.cols(); ++j) out[j] = contains(Y.col(j)) ? 1.0 : 0.0;
  return out;
}

const Vec& GuidanceSet::lo() const {
  require(form_ != Form::Functional, ErrorKind::Domain, "functional guidance sets expose no box bounds");
  return lo_;
}

const Vec& GuidanceSet::hi() const {
  require(form_ != Form::Functional, ErrorKind::Domain, "functional guidance sets expose no box bounds");
  return hi_;
}

bool GuidanceSet::unbounded() const {
  if (form_ != Form::Box) return false;
  for (int k = 0; k < dim_; ++k) {
    if (std::isfinite(lo_[k]) || std::isfinite(hi_[k])) return false;
  }
  return true;
}

const Mat& GuidanceSet::linear_map() const {
  require(form_ == Form::Linear, ErrorKind::Domain, "guidance set has no linear map");
  return A_;
}

nlohmann::json GuidanceSet::to_json() const {
  require(form_ != Form::Functional, ErrorKind::Config, "functional guidance sets do not serialize");
  nlohmann::json lo = nlohmann::json::array(), hi = nlohmann::json::array();
  for (Eigen::Index k = 0; k < lo_.size(); ++k) {
    lo.push_back(bound_to_json(lo_[k]));
    hi.push_back(bound_to_json(hi_[k]));
  }
  if (form_ == Form::Box) return {{"type", "box"}, {"lo", lo}, {"hi", hi}};
  nlohmann::json A = nlohmann::json::array();
  for (Eigen::Index i = 0; i < A_.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < A_.cols(); ++j) row.push_back(A_(i, j));
    A.push_back(row);
  }
  return {{"type", "linear"}, {"A", A}, {"lo", lo}, {"hi", hi}};
}

GuidanceSet GuidanceSet::from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "all") return all(j.at("dim").get<int>());
  if (type == "halfspace") {
    return halfspace(j.at("dim").get<int>(), j.at("axis").get<int>(), j.at("lo").get<double>());
  }
  if (type == "interval") {
    return interval(j.at("dim").get<int>(), j.at("axis").get<int>(), bound_from_json(j.at("lo"), -1.0),
                    bound_from_json(j.at("hi"), 1.0));
  }
  const auto read_bounds = [&](const char* key, double sgn) {
    const auto& arr = j.at(key);
    Vec v(arr.size());
    for (std::size_t k = 0; k < arr.size(); ++k) v[k] = bound_from_json(arr[k], sgn);
    return v;
  };
  if (type == "box") return box(read_bounds("lo", -1.0), read_bounds("hi", 1.0));
  if (type == "linear") {
    const auto& rows = j.at("A");
    Mat A(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t k = 0; k < rows[i].size(); ++k) A(i, k) = rows[i][k].get<double>();
    }
    return linear(std::move(A), read_bounds("lo", -1.0), read_bounds("hi", 1.0));
  }
  throw_config("unknown guidance set type '" + type + "'");
}

double indicator(const GuidanceSet& s, const Vec& y) { return s.contains(y) ? 1.0 : 0.0; }

ScalarField HModel::field() const {
  const Mlp net_copy = net;
  return [net_copy](double t, const Mat& Y) { return Vec(net_copy.fwd_batch(t, Y).row(0).transpose()); };
}

HModel make_h_model(int dim, double horizon, std::uint64_t seed, std::vector<int> hidden) {
  HModel h;
  h.net = Mlp(dim, std::move(hidden), 1, Activation::Tanh, OutputTransform::Sigmoid, horizon, seed);
  return h;
}

QModel make_q_model(int dim, double horizon, std::uint64_t seed, std::vector<int> hidden) {
  QModel q;
  q.net = Mlp(dim, std::move(hidden), dim, Activation::Tanh, OutputTransform::Identity, horizon, seed);
  return q;
}

namespace {
void check_training_batch(const TrajectoryBatch& b, int dim) {
  require(b.provenance == Provenance::Pretrained, ErrorKind::Domain,
          "guidance training is off-policy: batch provenance must be pretrained, got guided");
  require(b.full(), ErrorKind::Domain, "guidance training needs full path storage");
  require(b.dim == dim, ErrorKind::Domain, "batch dimension mismatch");
  require(b.n_paths() > 0, ErrorKind::Domain, "batch has no paths");
}
}  // namespace

double martingale_loss(const ScalarField& h, const TrajectoryBatch& b, const GuidanceSet& S) {
  check_training_batch(b, S.dim());
  const int K = b.grid.steps();
  const Vec ind = S.indicator_batch(b.terminal());
  double acc = 0.0;
  for (int i = 0; i <= K; ++i) {
    const Vec hv = h(b.grid.points[i], b.states[i]);
    acc += (hv - ind).squaredNorm();
  }
  const double mean = acc / (static_cast<double>(K + 1) * b.n_paths());
  return b.grid.horizon_T * mean;
}

double martingale_loss(const HModel& h, const TrajectoryBatch& b, const GuidanceSet& S) {
  return martingale_loss(h.field(), b, S);
}

void train_h(HModel* model, const std::vector<const TrajectoryBatch*>& batches, const GuidanceSet& S,
             const OptimizerConfig& opt, std::uint64_t seed, TrainTrace* trace) {
  opt.validate();
  require(!batches.empty(), ErrorKind::Domain, "train_h needs at least one batch");
  Mlp& net = model->net;
  require(net.out_dim() == 1, ErrorKind::Domain, "h approximator must have a scalar output");
  require(net.state_dim() == S.dim(), ErrorKind::Domain, "h approximator dimension mismatch");

  std::vector<Vec> indicators;
  std::vector<long> prefix{0};
  for (const TrajectoryBatch* b : batches) {
    check_training_batch(*b, S.dim());
    indicators.push_back(S.indicator_batch(b->terminal()));
    prefix.push_back(prefix.back() + static_cast<long>(b->n_paths()) * (b->grid.steps() + 1));
  }
  const long total = prefix.back();

  Stream rng(derive(seed, "train-h"));
  OptState st;
  const int B = opt.batch;
  const int d = S.dim();
  Vec ts(B), ind(B);
  Mat ys(d, B);

  double first_loss = -1.0;
  int high = 0;
  double running = 0.0;
  int running_n = 0;

  for (int it = 1; it <= opt.iters; ++it) {
    for (int j = 0; j < B; ++j) {
      const long flat = static_cast<long>(rng.below(static_cast<std::uint64_t>(total)));
      std::size_t bi = 0;
      while (flat >= prefix[bi + 1]) ++bi;
      const TrajectoryBatch& b = *batches[bi];
      const long local = flat - prefix[bi];
      const int K1 = b.grid.steps() + 1;
      const int path = static_cast<int>(local / K1);
      const int gi = static_cast<int>(local % K1);
      ts[j] = b.grid.points[gi];
      ys.col(j) = b.states[gi].col(path);
      ind[j] = indicators[bi][path];
    }
    const Mlp::Cache cache = net.forward_cached(ts, ys);
    const Vec resid = cache.out.row(0).transpose() - ind;
    const double loss = resid.squaredNorm() / B;
    if (!std::isfinite(loss)) throw_numerical("train_h loss became non-finite at iteration " + std::to_string(it));
    if (first_loss < 0.0) first_loss = loss;
    high = (loss > 10.0 * first_loss) ? high + 1 : 0;
    if (high >= 100) throw_numerical("train_h diverged: loss stayed above 10x the initial value for 100 steps");

    Mat upstream = (2.0 / B) * resid.transpose();
    sgd_step(&net.params(), net.backward_params(cache, upstream), &st, opt);

    running += loss;
    ++running_n;
    if (trace && (it % 100 == 0 || it == opt.iters)) {
      trace->loss.emplace_back(it, running / running_n);
      running = 0.0;
      running_n = 0;
    }
  }
  if (trace) trace->skipped = st.skipped;
}

namespace {
CovTargets increment_targets(const std::function<Vec(double, const Mat&)>& h, const TrajectoryBatch& b,
                             const NoiseSchedule& sched) {
  require(b.full(), ErrorKind::Domain, "covariation targets need full path storage");
  require(b.stochastic, ErrorKind::Domain,
          "covariation targets need stochastic paths; simulate with the SDE integrator, not the ODE");
  require(sched.id() == b.schedule_id, ErrorKind::Domain,
          "schedule does not match the one the batch was simulated under");
  const int K = b.grid.steps();
  const int n = b.n_paths();
  const int d = b.dim;

  CovTargets out;
  out.t.resize(static_cast<long>(K) * n);
  out.y.resize(d, static_cast<long>(K) * n);
  out.target.resize(d, static_cast<long>(K) * n);

  Vec h_cur = h(b.grid.points[0], b.states[0]);
  for (int i = 0; i < K; ++i) {
    const Vec h_next = h(b.grid.points[i + 1], b.states[i + 1]);
    const double t = b.grid.points[i];
    const double dt = b.grid.dt(i);
    const double g = coeffs(sched, sched.T - t).g;  // gbar(t) = g(T - t)
    const double inv = 1.0 / (g * g * dt);
    const long base = static_cast<long>(i) * n;
    const Mat dY = b.states[i + 1] - b.states[i];
    for (int p = 0; p < n; ++p) {
      out.t[base + p] = t;
      out.y.col(base + p) = b.states[i].col(p);
      out.target.col(base + p) = dY.col(p) * ((h_next[p] - h_cur[p]) * inv);
    }
    h_cur = h_next;
  }
  return out;
}
}  // namespace

CovTargets cov_targets(const ScalarField& h, const TrajectoryBatch& b, const NoiseSchedule& sched) {
  return increment_targets(h, b, sched);
}

CovTargets cov_targets(const HModel& h, const TrajectoryBatch& b, const NoiseSchedule& sched,
                       CovTargetMode mode) {
  if (mode == CovTargetMode::Increment) return increment_targets(h.field(), b, sched);

  // analytic Ito mode: d[h,Y] = gbar^2 grad h dt exactly, so regress onto
  // grad h from reverse-mode differentiation at the same anchors
  require(b.full(), ErrorKind::Domain, "covariation targets need full path storage");
  const int K = b.grid.steps();
  const int n = b.n_paths();
  const int d = b.dim;
  CovTargets out;
  out.t.resize(static_cast<long>(K) * n);
  out.y.resize(d, static_cast<long>(K) * n);
  out.target.resize(d, static_cast<long>(K) * n);
  for (int i = 0; i < K; ++i) {
    Vec val;
    Mat grad;
    h.net.value_and_state_grad(b.grid.points[i], b.states[i], &val, &grad);
    const long base = static_cast<long>(i) * n;
    out.t.segment(base, n).setConstant(b.grid.points[i]);
    out.y.middleCols(base, n) = b.states[i];
    out.target.middleCols(base, n) = grad;
  }
  return out;
}

void train_q(QModel* model, const CovTargets& targets, const OptimizerConfig& opt, std::uint64_t seed,
             TrainTrace* trace) {
  opt.validate();
  const long M = targets.size();
  require(M > 0, ErrorKind::Domain, "train_q needs a nonempty target set");
  Mlp& net = model->net;
  require(net.out_dim() == net.state_dim() && net.state_dim() == targets.y.rows(), ErrorKind::Domain,
          "q approximator dimension mismatch");

  Stream rng(derive(seed, "train-q"));
  OptState st;
  const int B = opt.batch;
  const int d = static_cast<int>(targets.y.rows());
  Vec ts(B);
  Mat ys(d, B), tg(d, B);

  double first_loss = -1.0;
  int high = 0;
  double running = 0.0;
  int running_n = 0;

  for (int it = 1; it <= opt.iters; ++it) {
    for (int j = 0; j < B; ++j) {
      const long pick = static_cast<long>(rng.below(static_cast<std::uint64_t>(M)));
      ts[j] = targets.t[pick];
      ys.col(j) = targets.y.col(pick);
      tg.col(j) = targets.target.col(pick);
    }
    const Mlp::Cache cache = net.forward_cached(ts, ys);
    const Mat resid = cache.out - tg;
    const double loss = resid.squaredNorm() / B;
    if (!std::isfinite(loss)) throw_numerical("train_q loss became non-finite at iteration " + std::to_string(it));
    if (first_loss < 0.0) first_loss = loss;
    high = (loss > 10.0 * first_loss) ? high + 1 : 0;
    if (high >= 100) throw_numerical("train_q diverged: loss stayed above 10x the initial value for 100 steps");

    sgd_step(&net.params(), net.backward_params(cache, (2.0 / B) * resid), &st, opt);

    running += loss;
    ++running_n;
    if (trace && (it % 100 == 0 || it == opt.iters)) {
      trace->loss.emplace_back(it, running / running_n);
      running = 0.0;
      running_n = 0;
    }
  }
  if (trace) trace->skipped = st.skipped;
}

std::string to_string(GuidanceMode m) {
  switch (m) {
    case GuidanceMode::ML: return "ml";
    case GuidanceMode::MCL: return "mcl";
    case GuidanceMode::OracleH: return "oracle";
  }
  return "ml";
}

GuidanceMode guidance_mode_from_string(const std::string& s) {
  if (s == "ml") return GuidanceMode::ML;
  if (s == "mcl") return GuidanceMode::MCL;
  if (s == "oracle") return GuidanceMode::OracleH;
  throw_config("unknown guidance mode '" + s + "'");
}

VectorFieldFn make_guidance_field(GuidanceMode mode, const HModel* h, const QModel* q,
                                  const AnalyticH* oracle, double c_clip, double T,
                                  std::shared_ptr<DriftStats> stats) {
  require(c_clip > 0.0, ErrorKind::Domain, "c_clip must be positive");
  switch (mode) {
    case GuidanceMode::ML:
      require(h != nullptr, ErrorKind::Domain, "ML guidance needs a trained h approximator");
      break;
    case GuidanceMode::MCL:
      require(h != nullptr && q != nullptr, ErrorKind::Domain,
              "MCL guidance needs trained h and q approximators");
      break;
    case GuidanceMode::OracleH:
      require(oracle != nullptr, ErrorKind::Domain, "oracle guidance needs the analytic h oracle");
      break;
  }

  return [mode, h, q, oracle, c_clip, T, stats](double t, const Mat& Y) -> Mat {
    require(t < T, ErrorKind::Domain, "guidance drift is undefined at t >= T");
    Mat drift;
    if (mode == GuidanceMode::ML) {
      Vec val;
      h->net.value_and_state_grad(t, Y, &val, &drift);
      for (Eigen::Index j = 0; j < Y.cols(); ++j) drift.col(j) /= std::max(val[j], h->floor);
    } else if (mode == GuidanceMode::MCL) {
      const Vec val = h->eval_batch(t, Y);
      drift = q->eval_batch(t, Y);
      for (Eigen::Index j = 0; j < Y.cols(); ++j) drift.col(j) /= std::max(val[j], h->floor);
    } else {
      oracle->eval_batch(t, Y, nullptr, &drift);
    }
    const double bound = c_clip / (T - t);
    long clipped = 0;
    for (Eigen::Index j = 0; j < drift.cols(); ++j) {
      const double nrm = drift.col(j).norm();
      if (nrm > bound) {
        drift.col(j) *= bound / nrm;
        ++clipped;
      }
    }
    if (stats) {
      stats->clipped += clipped;
      stats->total += drift.cols();
    }
    return drift;
  };
}

Vec guidance_drift(GuidanceMode mode, const HModel* h, const QModel* q, const AnalyticH* oracle,
                   double t, const Vec& y, double c_clip, double T) {
  Mat Y(y.size(), 1);
  Y.col(0) = y;
  return make_guidance_field(mode, h, q, oracle, c_clip, T)(t, Y).col(0);
}

MartingaleReport martingale_diagnostic(const ScalarField& h, const TrajectoryBatch& b,
                                       const std::vector<int>& checkpoints) {
  require(b.full(), ErrorKind::Domain, "martingale diagnostic needs full path storage");
  require(!checkpoints.empty(), ErrorKind::Domain, "martingale diagnostic needs checkpoints");
  const int n = b.n_paths();
  MartingaleReport rep;
  rep.checkpoints = checkpoints;
  rep.means.resize(checkpoints.size());
  rep.se_diff = Vec::Zero(checkpoints.size());

  Vec h0;
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    const int i = checkpoints[c];
    require(i >= 0 && i <= b.grid.steps(), ErrorKind::Domain, "checkpoint index out of range");
    const Vec hv = h(b.grid.points[i], b.states[i]);
    rep.means[c] = hv.mean();
    if (c == 0) {
      h0 = hv;
      continue;
    }
    const Vec diff = hv - h0;
    const double mean = diff.mean();
    const double var = (diff.array() - mean).square().sum() / (n - 1);
    rep.se_diff[c] = std::sqrt(var / n);
    if (rep.se_diff[c] > 0.0) {
      rep.max_abs_z = std::max(rep.max_abs_z, std::abs(mean) / rep.se_diff[c]);
    }
  }
  return rep;
}

double terminal_mean_abs_gap(const ScalarField& h, const TrajectoryBatch& b, const GuidanceSet& S) {
  require(b.full(), ErrorKind::Domain, "terminal diagnostic needs full path storage");
  const int K = b.grid.steps();
  const Vec hv = h(b.grid.points[K], b.terminal());
  const Vec ind = S.indicator_batch(b.terminal());
  return (hv - ind).cwiseAbs().mean();
}

CalibrationReport calibration_check(const ScalarField& h, const TrajectoryBatch& b, const GuidanceSet& S) {
  require(b.full(), ErrorKind::Domain, "calibration diagnostic needs full path storage");
  const int n = b.n_paths();
  const Vec h0 = h(b.grid.points[0], b.states[0]);
  const Vec ind = S.indicator_batch(b.terminal());
  CalibrationReport rep;
  rep.mean_h0 = h0.mean();
  rep.empirical_rate = ind.mean();
  const Vec diff = h0 - ind;
  const double mean = diff.mean();
  const double var = (diff.array() - mean).square().sum() / (n - 1);
  rep.se = std::sqrt(var / n);
  return rep;
}

}  // namespace hguide
