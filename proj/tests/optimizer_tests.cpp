// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "hguide/errors.hpp"
#include "hguide/optimizer.hpp"

using namespace hguide;

TEST_CASE("schedule step sizes") {
  OptimizerConfig cfg;
  cfg.mode = OptimizerConfig::Mode::Schedule;
  cfg.A = 1.0;
  cfg.B = 1.0;
  cfg.zeta = 1.0;
  CHECK(step_size(cfg, 1) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(step_size(cfg, 2) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(step_size(cfg, 4) == doctest::Approx(0.2).epsilon(1e-15));

  cfg.B = 0.0;
  CHECK(step_size(cfg, 1) == doctest::Approx(1.0).epsilon(1e-15));
  cfg.zeta = 0.75;
  CHECK(step_size(cfg, 16) == doctest::Approx(1.0 / 8.0).epsilon(1e-12));
}

TEST_CASE("schedule step with zero gradient leaves parameters unchanged") {
  OptimizerConfig cfg;
  cfg.mode = OptimizerConfig::Mode::Schedule;
  cfg.A = 1.0;
  cfg.B = 0.0;
  cfg.zeta = 1.0;
  Vec p(3);
  p << 1.0, -2.0, 0.5;
  const Vec before = p;
  OptState st;
  sgd_step(&p, Vec::Zero(3), &st, cfg);
  CHECK((p - before).cwiseAbs().maxCoeff() == 0.0);
  CHECK(st.n == 1);
}

TEST_CASE("first schedule step with unit step size subtracts the gradient") {
  OptimizerConfig cfg;
  cfg.mode = OptimizerConfig::Mode::Schedule;
  cfg.A = 1.0;
  cfg.B = 0.0;
  cfg.zeta = 1.0;
  Vec p = Vec::Zero(2);
  Vec g(2);
  g << 0.25, -1.0;
  OptState st;
  sgd_step(&p, g, &st, cfg);
  CHECK(p[0] == doctest::Approx(-0.25).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("non-finite gradients are skipped and counted") {
  OptimizerConfig cfg;
  cfg.mode = OptimizerConfig::Mode::Schedule;
  Vec p(2);
  p << 3.0, 4.0;
  const Vec before = p;
  Vec g(2);
  g << 1.0, std::numeric_limits<double>::quiet_NaN();
  OptState st;
  sgd_step(&p, g, &st, cfg);
  CHECK((p - before).cwiseAbs().maxCoeff() == 0.0);
  CHECK(st.skipped == 1);

  g[1] = std::numeric_limits<double>::infinity();
  sgd_step(&p, g, &st, cfg);
  CHECK(st.skipped == 2);
}

TEST_CASE("norm clipping caps the applied gradient") {
  OptimizerConfig cfg;
  cfg.mode = OptimizerConfig::Mode::Schedule;
  cfg.A = 1.0;
  cfg.B = 0.0;
  cfg.zeta = 1.0;
  cfg.clip_norm = 1.0;
  Vec p = Vec::Zero(2);
  Vec g(2);
  g << 30.0, 40.0;
  OptState st;
  sgd_step(&p, g, &st, cfg);
  CHECK(p.norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p[0] / p[1] == doctest::Approx(30.0 / 40.0).epsilon(1e-12));
}

TEST_CASE("adam descends a quadratic") {
  OptimizerConfig cfg;
  cfg.mode = OptimizerConfig::Mode::Adam;
  cfg.lr = 0.05;
  Vec p(2);
  p << 4.0, -3.0;
  OptState st;
  for (int i = 0; i < 2000; ++i) {
    sgd_step(&p, 2.0 * p, &st, cfg);
  }
  CHECK(p.cwiseAbs().maxCoeff() < 1e-3);
  CHECK(st.n == 2000);
}

TEST_CASE("validate enforces the step-size conditions") {
  OptimizerConfig ok;
  ok.mode = OptimizerConfig::Mode::Schedule;
  ok.A = 0.1;
  ok.B = 0.0;
  ok.zeta = 1.0;
  CHECK_NOTHROW(ok.validate());

  OptimizerConfig bad = ok;
  bad.zeta = 0.5;  // sum of squares diverges
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.zeta = 1.2;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = ok;
  bad.A = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = ok;
  bad.B = -1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = ok;
  bad.iters = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("loss trace renders as csv") {
  TrainTrace tr;
  tr.loss = {{0, 1.5}, {100, 0.75}};
  const std::string csv = tr.to_csv();
  CHECK(csv.find("iter") != std::string::npos);
  CHECK(csv.find("0,1.5") != std::string::npos);
  CHECK(csv.find("100,0.75") != std::string::npos);
}
