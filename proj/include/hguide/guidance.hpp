// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "hguide/mlp.hpp"
#include "hguide/optimizer.hpp"
#include "hguide/trajectory.hpp"
#include "hguide/types.hpp"

namespace hguide {

class AnalyticH;  // oracle module

// Open terminal constraint set S. Membership is strict on every bound.
// Box and linear forms serialize; arbitrary functional forms do not.
class GuidanceSet {
 public:
  enum class Form { Box, Linear, Functional };

  static GuidanceSet all(int dim);
  static GuidanceSet box(Vec lo, Vec hi);
  static GuidanceSet interval(int dim, int axis, double lo, double hi);
  static GuidanceSet halfspace(int dim, int axis, double lo);  // { y_axis > lo }
  static GuidanceSet linear(Mat A, Vec lo, Vec hi);            // { A y in (lo, hi) }
  static GuidanceSet functional(int dim, std::function<Vec(const Vec&)> F, Vec lo, Vec hi);

  int dim() const { return dim_; }
  Form form() const { return form_; }
  bool contains(const Vec& y) const;
  Vec indicator_batch(const Mat& Y) const;  // 0/1 per column

  // bound accessors (box bounds, or bounds on A y); throw for functional sets
  const Vec& lo() const;
  const Vec& hi() const;
  bool unbounded() const;  // S == R^d

  const Mat& linear_map() const;

  nlohmann::json to_json() const;
  static GuidanceSet from_json(const nlohmann::json&);

 private:
  Form form_ = Form::Box;
  int dim_ = 0;
  Vec lo_, hi_;  // bounds of the box (target box for Linear/Functional)
  Mat A_;
  std::function<Vec(const Vec&)> F_;
};

double indicator(const GuidanceSet&, const Vec& y);

// batched scalar field h(t, .) over path columns
using ScalarField = std::function<Vec(double, const Mat&)>;

// Terminal-constraint probability approximator h_phi(t,y) in (0,1).
struct HModel {
  Mlp net;
  double floor = 1e-4;  // denominator floor used by the guidance drift

  double eval(double t, const Vec& y) const { return net.fwd(t, y)[0]; }
  Vec eval_batch(double t, const Mat& Y) const { return net.fwd_batch(t, Y).row(0).transpose(); }
  ScalarField field() const;
};

// Covariation-ratio approximator q_psi(t,y), one output per state dimension.
struct QModel {
  Mlp net;

  Vec eval(double t, const Vec& y) const { return net.fwd(t, y); }
  Mat eval_batch(double t, const Mat& Y) const { return net.fwd_batch(t, Y); }
};

HModel make_h_model(int dim, double horizon, std::uint64_t seed, std::vector<int> hidden = {128, 128});
QModel make_q_model(int dim, double horizon, std::uint64_t seed, std::vector<int> hidden = {128, 128});

// Empirical martingale loss: T times the grid-and-path average of
// (h(t_i, Y_i) - 1{Y_terminal in S})^2 over a pretrained batch.
double martingale_loss(const ScalarField& h, const TrajectoryBatch&, const GuidanceSet&);
double martingale_loss(const HModel&, const TrajectoryBatch&, const GuidanceSet&);

// Minibatch stochastic approximation of the martingale loss over (path,
// grid time) pairs drawn uniformly. Batches must be full pretrained paths.
void train_h(HModel*, const std::vector<const TrajectoryBatch*>&, const GuidanceSet&,
             const OptimizerConfig&, std::uint64_t seed, TrainTrace* trace = nullptr);

// Discrete covariation regression targets anchored at (t_i, Y_i):
//   (h(t_{i+1}, Y_{i+1}) - h(t_i, Y_i)) (Y_{i+1} - Y_i) / (gbar(t_i)^2 dt_i).
struct CovTargets {
  Vec t;
  Mat y;       // d x M anchors
  Mat target;  // d x M
  long size() const { return t.size(); }
};

enum class CovTargetMode { Increment, AnalyticIto };

CovTargets cov_targets(const ScalarField& h, const TrajectoryBatch&, const NoiseSchedule&);
CovTargets cov_targets(const HModel&, const TrajectoryBatch&, const NoiseSchedule&,
                       CovTargetMode mode = CovTargetMode::Increment);

void train_q(QModel*, const CovTargets&, const OptimizerConfig&, std::uint64_t seed,
             TrainTrace* trace = nullptr);

enum class GuidanceMode { ML, MCL, OracleH };

std::string to_string(GuidanceMode);
GuidanceMode guidance_mode_from_string(const std::string&);

struct DriftStats {
  long clipped = 0;
  long total = 0;
  double clip_fraction() const { return total ? static_cast<double>(clipped) / total : 0.0; }
};

// Guidance drift at backward time t < T:
//   ML       grad_y h_phi / max(h_phi, floor)
//   MCL      q_psi / max(h_phi, floor)
//   OracleH  analytic grad log h
// clipped to norm c_clip / (T - t).
Vec guidance_drift(GuidanceMode, const HModel*, const QModel*, const AnalyticH*, double t, const Vec& y,
                   double c_clip, double T);

using VectorFieldFn = std::function<Mat(double, const Mat&)>;
VectorFieldFn make_guidance_field(GuidanceMode, const HModel*, const QModel*, const AnalyticH*,
                                  double c_clip, double T, std::shared_ptr<DriftStats> stats = nullptr);

// Diagnostics over a batch: sampled means of h along checkpoints with
// paired standard errors against the first checkpoint.
struct MartingaleReport {
  std::vector<int> checkpoints;
  Vec means;
  Vec se_diff;   // SE of mean(h_i - h_0), first entry 0
  double max_abs_z = 0.0;
};
MartingaleReport martingale_diagnostic(const ScalarField& h, const TrajectoryBatch&,
                                       const std::vector<int>& checkpoints);

double terminal_mean_abs_gap(const ScalarField& h, const TrajectoryBatch&, const GuidanceSet&);

struct CalibrationReport {
  double mean_h0 = 0.0;
  double empirical_rate = 0.0;
  double se = 0.0;  // SE of the paired difference h0 - indicator
};
CalibrationReport calibration_check(const ScalarField& h, const TrajectoryBatch&, const GuidanceSet&);

}  // namespace hguide
