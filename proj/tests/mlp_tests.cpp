// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "hguide/mlp.hpp"
#include "hguide/rng.hpp"

using namespace hguide;

namespace {

struct Arch {
  int dim;
  std::vector<int> hidden;
  int out;
  Activation act;
  OutputTransform tr;
};

const std::vector<Arch> kArchs = {
    {1, {16, 16}, 1, Activation::Tanh, OutputTransform::Sigmoid},
    {2, {24}, 2, Activation::Tanh, OutputTransform::Identity},
    {3, {16, 8}, 1, Activation::Softplus, OutputTransform::Sigmoid},
    {2, {12, 12}, 2, Activation::Softplus, OutputTransform::Identity},
};

Mlp randomized(const Arch& a, std::uint64_t seed) {
  Mlp net(a.dim, a.hidden, a.out, a.act, a.tr, 2.0, seed);
  Stream rng(derive(seed, "params"));
  for (int i = 0; i < net.n_params(); ++i) net.params()[i] = 0.35 * rng.normal();
  return net;
}

double rel_gap(double got, double want) {
  return std::abs(got - want) / std::max(1.0, std::max(std::abs(got), std::abs(want)));
}

}  // namespace

TEST_CASE("fixed seed and input give identical outputs") {
  const Mlp a = randomized(kArchs[0], 77);
  const Mlp b = randomized(kArchs[0], 77);
  Vec x(1);
  x << 0.4;
  CHECK(a.fwd(0.7, x)[0] == b.fwd(0.7, x)[0]);
  CHECK((a.params() - b.params()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("parameter gradients match central finite differences") {
  const double fd_step = 1e-5;
  for (std::size_t ai = 0; ai < kArchs.size(); ++ai) {
    const Arch& a = kArchs[ai];
    Mlp net = randomized(a, 100 + ai);
    Stream rng(derive(500 + ai, "points"));
    for (int pt = 0; pt < 50; ++pt) {
      const double t = 2.0 * rng.uniform();
      Vec x(a.dim);
      for (int k = 0; k < a.dim; ++k) x[k] = 2.0 * rng.normal();
      Vec upstream(a.out);
      for (int k = 0; k < a.out; ++k) upstream[k] = rng.normal();

      const Vec g = net.grad_params(t, x, upstream);
      REQUIRE(g.size() == net.n_params());

      Vec dir(net.n_params());
      for (int k = 0; k < net.n_params(); ++k) dir[k] = rng.normal();
      dir /= dir.norm();

      const Vec saved = net.params();
      net.params() = saved + fd_step * dir;
      const double up = upstream.dot(net.fwd(t, x));
      net.params() = saved - fd_step * dir;
      const double dn = upstream.dot(net.fwd(t, x));
      net.params() = saved;

      const double fd = (up - dn) / (2.0 * fd_step);
      CHECK(rel_gap(g.dot(dir), fd) <= 1e-4);
    }
  }
}

TEST_CASE("input gradients match central finite differences") {
  const double fd_step = 1e-5;
  for (std::size_t ai = 0; ai < kArchs.size(); ++ai) {
    const Arch& a = kArchs[ai];
    const Mlp net = randomized(a, 200 + ai);
    Stream rng(derive(900 + ai, "points"));
    for (int pt = 0; pt < 50; ++pt) {
      const double t = 2.0 * rng.uniform();
      Vec x(a.dim);
      for (int k = 0; k < a.dim; ++k) x[k] = 2.0 * rng.normal();
      const Mat J = net.grad_input(t, x);
      REQUIRE(J.rows() == a.out);
      REQUIRE(J.cols() == a.dim);
      for (int k = 0; k < a.dim; ++k) {
        Vec xp = x, xm = x;
        xp[k] += fd_step;
        xm[k] -= fd_step;
        const Vec fp = net.fwd(t, xp);
        const Vec fm = net.fwd(t, xm);
        for (int o = 0; o < a.out; ++o) {
          CHECK(rel_gap(J(o, k), (fp[o] - fm[o]) / (2.0 * fd_step)) <= 1e-4);
        }
      }
    }
  }
}

TEST_CASE("batched backward pass sums the per-sample parameter gradients") {
  const Arch& a = kArchs[1];
  const Mlp net = randomized(a, 321);
  const int B = 9;
  Vec ts(B);
  Mat X(a.dim, B);
  Mat upstream(a.out, B);
  Stream rng(derive(33, "batchgrad"));
  for (int j = 0; j < B; ++j) {
    ts[j] = 2.0 * rng.uniform();
    for (int k = 0; k < a.dim; ++k) X(k, j) = rng.normal();
    for (int k = 0; k < a.out; ++k) upstream(k, j) = rng.normal();
  }
  const Mlp::Cache cache = net.forward_cached(ts, X);
  const Vec g = net.backward_params(cache, upstream);
  Vec expect = Vec::Zero(net.n_params());
  for (int j = 0; j < B; ++j) {
    expect += net.grad_params(ts[j], X.col(j), upstream.col(j));
  }
  CHECK((g - expect).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + expect.cwiseAbs().maxCoeff()));

  const Mat gx = net.backward_input(cache, upstream);
  for (int j = 0; j < B; ++j) {
    const Vec expect_j = net.grad_input(ts[j], X.col(j)).transpose() * upstream.col(j);
    CHECK((gx.col(j) - expect_j).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("value_and_state_grad matches fwd and grad_input for scalar nets") {
  const Mlp net = randomized(kArchs[0], 55);
  Mat X(1, 5);
  X << -2.0, -0.5, 0.0, 0.7, 3.0;
  Vec value;
  Mat grad;
  net.value_and_state_grad(0.9, X, &value, &grad);
  for (int j = 0; j < 5; ++j) {
    CHECK(value[j] == doctest::Approx(net.fwd(0.9, X.col(j))[0]).epsilon(1e-13));
    CHECK(grad(0, j) == doctest::Approx(net.grad_input(0.9, X.col(j))(0, 0)).epsilon(1e-12));
  }
}

TEST_CASE("fwd_batch with a shared time matches per-column fwd") {
  const Mlp net = randomized(kArchs[3], 88);
  Mat X(2, 6);
  Stream rng(derive(21, "cols"));
  for (int j = 0; j < 6; ++j) {
    X(0, j) = rng.normal();
    X(1, j) = rng.normal();
  }
  const Mat Y = net.fwd_batch(1.3, X);
  for (int j = 0; j < 6; ++j) {
    const Vec y = net.fwd(1.3, X.col(j));
    CHECK((Y.col(j) - y).cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("sigmoid outputs stay inside the open unit interval") {
  Mlp net = randomized(kArchs[0], 13);
  Stream rng(derive(14, "satur"));
  for (int i = 0; i < net.n_params(); ++i) net.params()[i] = 40.0 * rng.normal();
  for (int j = 0; j < 200; ++j) {
    Vec x(1);
    x << 50.0 * rng.normal();
    const double v = net.fwd(2.0 * rng.uniform(), x)[0];
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("save and load round trip bit-exactly") {
  const std::string path =
      (std::filesystem::temp_directory_path() / "hguide_mlp_roundtrip.mlp").string();
  const Mlp net = randomized(kArchs[2], 404);
  net.save(path);
  const Mlp back = Mlp::load(path);
  CHECK(back.state_dim() == net.state_dim());
  CHECK(back.out_dim() == net.out_dim());
  CHECK(back.hidden() == net.hidden());
  CHECK(back.activation() == net.activation());
  CHECK(back.output_transform() == net.output_transform());
  CHECK(back.horizon() == net.horizon());
  CHECK((back.params() - net.params()).cwiseAbs().maxCoeff() == 0.0);
  Vec x(3);
  x << 0.2, -1.1, 0.6;
  CHECK(back.fwd(0.4, x)[0] == net.fwd(0.4, x)[0]);
  std::filesystem::remove(path);
}

TEST_CASE("time embedding exposes terminal proximity") {
  const Mlp net(1, {4}, 1, Activation::Tanh, OutputTransform::Identity, 2.0, 1);
  Vec x(1);
  x << 0.3;
  const Vec e0 = net.embed(0.0, x);
  const Vec eT = net.embed(2.0, x);
  REQUIRE(e0.size() == 3);
  CHECK(e0[0] == 0.0);
  CHECK(e0[1] == doctest::Approx(1.0));
  CHECK(eT[0] == doctest::Approx(1.0));
  CHECK(eT[1] == doctest::Approx(0.0));
  CHECK(e0[2] == 0.3);
}
