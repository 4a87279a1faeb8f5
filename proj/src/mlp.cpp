// SPDX-License-Identifier: Apache-2.0
#include "hguide/mlp.hpp"

#include <cmath>

#include "hguide/errors.hpp"
#include "hguide/io.hpp"
#include "hguide/rng.hpp"

namespace hguide {

namespace {

// clamp keeps sigmoid strictly inside (0,1) in double precision
constexpr double kSigmoidClamp = 36.0;

inline double sigmoid(double z) {
  z = std::min(std::max(z, -kSigmoidClamp), kSigmoidClamp);
  if (z >= 0.0) {
    const double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void apply_activation(Activation act, const Mat& z, Mat* a) {
  switch (act) {
    case Activation::Tanh:
      *a = z.array().tanh();
      return;
    case Activation::Softplus:
      *a = z.unaryExpr([](double v) { return softplus(v); });
      return;
    case Activation::Relu:
      *a = z.cwiseMax(0.0);
      return;
  }
}

// derivative in terms of pre-activation z
void activation_deriv(Activation act, const Mat& z, Mat* d) {
  switch (act) {
    case Activation::Tanh:
      *d = 1.0 - z.array().tanh().square();
      return;
    case Activation::Softplus:
      *d = z.unaryExpr([](double v) { return sigmoid(v); });
      return;
    case Activation::Relu:
      *d = (z.array() > 0.0).cast<double>();  // subgradient 0 at 0
      return;
  }
}

}  // namespace

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Softplus: return "softplus";
    case Activation::Relu: return "relu";
  }
  return "tanh";
}

std::string to_string(OutputTransform o) { return o == OutputTransform::Sigmoid ? "sigmoid" : "identity"; }

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "softplus") return Activation::Softplus;
  if (s == "relu") return Activation::Relu;
  throw_config("unknown activation '" + s + "'");
}

OutputTransform output_from_string(const std::string& s) {
  if (s == "identity") return OutputTransform::Identity;
  if (s == "sigmoid") return OutputTransform::Sigmoid;
  throw_config("unknown output transform '" + s + "'");
}

Mlp::Mlp(int state_dim, std::vector<int> hidden, int out_dim, Activation act, OutputTransform out,
         double horizon, std::uint64_t seed)
    : state_dim_(state_dim),
      out_dim_(out_dim),
      hidden_(std::move(hidden)),
      act_(act),
      out_(out),
      horizon_(horizon),
      seed_(seed) {
  require(state_dim >= 1, ErrorKind::Domain, "state dimension must be >= 1");
  require(out_dim >= 1, ErrorKind::Domain, "output dimension must be >= 1");
  require(horizon > 0.0, ErrorKind::Domain, "horizon must be positive");
  for (int h : hidden_) require(h >= 1, ErrorKind::Domain, "hidden widths must be >= 1");

  std::vector<int> widths;
  widths.push_back(2 + state_dim_);  // time embedding occupies two slots
  for (int h : hidden_) widths.push_back(h);
  widths.push_back(out_dim_);

  int total = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    rows_.push_back(widths[l + 1]);
    cols_.push_back(widths[l]);
    w_off_.push_back(total);
    total += widths[l + 1] * widths[l];
    b_off_.push_back(total);
    total += widths[l + 1];
  }
  params_ = Vec::Zero(total);

  // hidden layers: Xavier-style normal init; output layer stays at zero
  Stream rng(derive(seed, "mlp-init"));
  for (int l = 0; l + 1 < layers(); ++l) {
    const double s = 1.0 / std::sqrt(static_cast<double>(cols_[l]));
    double* w = params_.data() + w_off_[l];
    for (int i = 0; i < rows_[l] * cols_[l]; ++i) w[i] = s * rng.normal();
  }
}

Eigen::Map<const Mat> Mlp::W(int l) const {
  return Eigen::Map<const Mat>(params_.data() + w_off_[l], rows_[l], cols_[l]);
}

const double* Mlp::bias(int l) const { return params_.data() + b_off_[l]; }

Vec Mlp::embed(double t, const Vec& x) const {
  require(x.size() == state_dim_, ErrorKind::Domain, "state dimension mismatch");
  Vec e(2 + state_dim_);
  const double u = t / horizon_;
  e[0] = u;
  e[1] = std::sqrt(std::max(0.0, 1.0 - u));
  e.tail(state_dim_) = x;
  return e;
}

Mlp::Cache Mlp::forward_cached(const Vec& ts, const Mat& X) const {
  require(X.rows() == state_dim_, ErrorKind::Domain, "state dimension mismatch");
  require(ts.size() == X.cols(), ErrorKind::Domain, "time/state batch size mismatch");
  const int B = static_cast<int>(X.cols());
  Cache c;
  c.input.resize(2 + state_dim_, B);
  for (int j = 0; j < B; ++j) {
    const double u = ts[j] / horizon_;
    c.input(0, j) = u;
    c.input(1, j) = std::sqrt(std::max(0.0, 1.0 - u));
  }
  c.input.bottomRows(state_dim_) = X;

  const int L = layers();
  c.z.resize(L);
  c.a.resize(L);
  c.a[0] = c.input;
  for (int l = 0; l < L; ++l) {
    c.z[l].noalias() = W(l) * c.a[l];
    c.z[l].colwise() += Eigen::Map<const Vec>(bias(l), rows_[l]);
    if (l + 1 < L) apply_activation(act_, c.z[l], &c.a[l + 1]);
  }
  if (out_ == OutputTransform::Sigmoid) {
    c.out = c.z[L - 1].unaryExpr([](double v) { return sigmoid(v); });
  } else {
    c.out = c.z[L - 1];
  }
  return c;
}

Mat Mlp::fwd_batch(const Vec& ts, const Mat& X) const { return forward_cached(ts, X).out; }

Mat Mlp::fwd_batch(double t, const Mat& X) const {
  return fwd_batch(Vec::Constant(X.cols(), t), X);
}

Vec Mlp::fwd(double t, const Vec& x) const {
  Mat X(x.size(), 1);
  X.col(0) = x;
  return fwd_batch(t, X).col(0);
}

Vec Mlp::backward_params(const Cache& c, const Mat& upstream) const {
  const int L = layers();
  Mat delta;
  if (out_ == OutputTransform::Sigmoid) {
    delta = upstream.array() * (c.out.array() * (1.0 - c.out.array()));
  } else {
    delta = upstream;
  }
  Vec grad = Vec::Zero(params_.size());
  for (int l = L - 1; l >= 0; --l) {
    Eigen::Map<Mat> gW(grad.data() + w_off_[l], rows_[l], cols_[l]);
    Eigen::Map<Vec> gb(grad.data() + b_off_[l], rows_[l]);
    gW.noalias() = delta * c.a[l].transpose();
    gb = delta.rowwise().sum();
    if (l > 0) {
      Mat dprev;
      activation_deriv(act_, c.z[l - 1], &dprev);
      delta = (W(l).transpose() * delta).array() * dprev.array();
    }
  }
  return grad;
}

Mat Mlp::backward_input(const Cache& c, const Mat& upstream) const {
  const int L = layers();
  Mat delta;
  if (out_ == OutputTransform::Sigmoid) {
    delta = upstream.array() * (c.out.array() * (1.0 - c.out.array()));
  } else {
    delta = upstream;
  }
  for (int l = L - 1; l > 0; --l) {
    Mat dprev;
    activation_deriv(act_, c.z[l - 1], &dprev);
    delta = (W(l).transpose() * delta).array() * dprev.array();
  }
  Mat full = W(0).transpose() * delta;     // gradient w.r.t. the embedding
  return full.bottomRows(state_dim_);      // drop the two time slots
}

Vec Mlp::grad_params(double t, const Vec& x, const Vec& upstream) const {
  require(upstream.size() == out_dim_, ErrorKind::Domain, "upstream dimension mismatch");
  Mat X(x.size(), 1);
  X.col(0) = x;
  const Cache c = forward_cached(Vec::Constant(1, t), X);
  return backward_params(c, upstream);
}

Mat Mlp::grad_input(double t, const Vec& x) const {
  Mat X(x.size(), 1);
  X.col(0) = x;
  const Cache c = forward_cached(Vec::Constant(1, t), X);
  Mat jac(out_dim_, state_dim_);
  Mat upstream = Mat::Zero(out_dim_, 1);
  for (int i = 0; i < out_dim_; ++i) {
    upstream.setZero();
    upstream(i, 0) = 1.0;
    jac.row(i) = backward_input(c, upstream).col(0).transpose();
  }
  return jac;
}

void Mlp::value_and_state_grad(double t, const Mat& X, Vec* value, Mat* grad) const {
  require(out_dim_ == 1, ErrorKind::Domain, "value_and_state_grad needs a scalar-output net");
  const Cache c = forward_cached(Vec::Constant(X.cols(), t), X);
  *value = c.out.row(0).transpose();
  *grad = backward_input(c, Mat::Ones(1, X.cols()));
}

nlohmann::json Mlp::meta() const {
  return {{"kind", "mlp"},
          {"state_dim", state_dim_},
          {"hidden", hidden_},
          {"out_dim", out_dim_},
          {"activation", to_string(act_)},
          {"output", to_string(out_)},
          {"horizon", horizon_},
          {"seed", seed_}};
}

void Mlp::save(const std::string& path) const {
  write_artifact(path, meta(), params_.data(), static_cast<std::size_t>(params_.size()));
}

Mlp Mlp::load(const std::string& path) {
  Artifact art = read_artifact(path, "mlp");
  const auto& h = art.header;
  Mlp net(h.at("state_dim").get<int>(), h.at("hidden").get<std::vector<int>>(), h.at("out_dim").get<int>(),
          activation_from_string(h.at("activation").get<std::string>()),
          output_from_string(h.at("output").get<std::string>()), h.at("horizon").get<double>(),
          h.at("seed").get<std::uint64_t>());
  require(static_cast<std::size_t>(net.params_.size()) == art.payload.size(), ErrorKind::Format,
          "mlp payload size disagrees with architecture");
  net.params_ = Eigen::Map<const Vec>(art.payload.data(), static_cast<Eigen::Index>(art.payload.size()));
  return net;
}

}  // namespace hguide
