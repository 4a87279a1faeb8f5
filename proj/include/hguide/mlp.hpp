// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hguide/types.hpp"

namespace hguide {

enum class Activation { Tanh, Softplus, Relu };
enum class OutputTransform { Identity, Sigmoid };

std::string to_string(Activation);
std::string to_string(OutputTransform);
Activation activation_from_string(const std::string&);
OutputTransform output_from_string(const std::string&);

// Small dense network over (t, x). Time enters through the embedding
// (t/T, sqrt(1 - t/T)); gradients are reverse-mode and exact. Parameters
// live in one flat vector so optimizers and persistence stay trivial.
// Hidden layers share one activation; the output layer is affine plus an
// optional sigmoid, with pre-activations clamped so sigmoid outputs stay
// inside the open interval (0,1). Output-layer weights start at zero.
class Mlp {
 public:
  Mlp() = default;
  Mlp(int state_dim, std::vector<int> hidden, int out_dim, Activation act, OutputTransform out,
      double horizon, std::uint64_t seed);

  int state_dim() const { return state_dim_; }
  int out_dim() const { return out_dim_; }
  double horizon() const { return horizon_; }
  Activation activation() const { return act_; }
  OutputTransform output_transform() const { return out_; }
  const std::vector<int>& hidden() const { return hidden_; }
  std::uint64_t init_seed() const { return seed_; }

  Vec& params() { return params_; }
  const Vec& params() const { return params_; }
  int n_params() const { return static_cast<int>(params_.size()); }

  Vec embed(double t, const Vec& x) const;

  Vec fwd(double t, const Vec& x) const;
  Mat fwd_batch(double t, const Mat& X) const;
  Mat fwd_batch(const Vec& ts, const Mat& X) const;

  // gradient of upstream . f(t,x) with respect to the flat parameters
  Vec grad_params(double t, const Vec& x, const Vec& upstream) const;
  // Jacobian of the output with respect to the state x only (out_dim x d)
  Mat grad_input(double t, const Vec& x) const;

  struct Cache {
    Mat input;            // embedded inputs, (2+d) x B
    std::vector<Mat> z;   // pre-activations per layer
    std::vector<Mat> a;   // hidden activations (a[0] == input)
    Mat out;
  };
  Cache forward_cached(const Vec& ts, const Mat& X) const;
  // total parameter gradient over the batch for loss sum_j upstream_j . f_j
  Vec backward_params(const Cache&, const Mat& upstream) const;
  // gradient with respect to the states, d x B
  Mat backward_input(const Cache&, const Mat& upstream) const;

  // scalar-output fast path used by guidance drift: values plus state grads
  void value_and_state_grad(double t, const Mat& X, Vec* value, Mat* grad) const;

  void save(const std::string& path) const;
  static Mlp load(const std::string& path);
  nlohmann::json meta() const;

 private:
  int layers() const { return static_cast<int>(rows_.size()); }
  Eigen::Map<const Mat> W(int l) const;
  Eigen::Map<const Mat> Wmut(int l);
  const double* bias(int l) const;

  int state_dim_ = 0;
  int out_dim_ = 0;
  std::vector<int> hidden_;
  Activation act_ = Activation::Tanh;
  OutputTransform out_ = OutputTransform::Identity;
  double horizon_ = 1.0;
  std::uint64_t seed_ = 0;

  std::vector<int> rows_, cols_, w_off_, b_off_;
  Vec params_;
};

}  // namespace hguide
