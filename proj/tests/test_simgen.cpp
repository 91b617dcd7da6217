#include "srcfda/errors.hpp"
#include "srcfda/simgen.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace srcfda;

TEST_CASE("true means at known points") {
  Eigen::VectorXd t(3);
  t << 0.0, 0.25, 1.0;
  const double b1 = 0.12;
  const auto [m1, m2] = true_means(b1, t);
  const double e = std::exp(1.0);
  CHECK(m1(0, 0) == doctest::Approx(e).epsilon(1e-15));
  CHECK(m1(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(m1(0, 1) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(m1(1, 1) == doctest::Approx(e).epsilon(1e-15));
  CHECK(m2(0, 0) == doctest::Approx(std::exp(std::cos(b1))).epsilon(1e-15));
  CHECK(m2(1, 0) == doctest::Approx(std::exp(std::sin(b1))).epsilon(1e-15));
  CHECK(m2(0, 2) == doctest::Approx(std::exp(std::cos(2 * std::numbers::pi - b1))).epsilon(1e-14));
  const auto [z1, z2] = true_means(0.0, Eigen::VectorXd::LinSpaced(11, 0, 1));
  CHECK(z1.col(0).isApprox(z2.col(0)));
  CHECK(z1.col(10).isApprox(z2.col(10)));
}

TEST_CASE("default grid") {
  const auto t = ScenarioConfig::default_grid();
  REQUIRE(t.size() == 100);
  CHECK(t[0] == 2.0 / 102);
  CHECK(t[99] == 101.0 / 102);
}

TEST_CASE("spline fits are close to the exact means") {
  const auto sim = generate(scenario_preset("1"));
  CHECK((sim.truth.tau1 - sim.truth.mu1).cwiseAbs().maxCoeff() < 0.05);
  CHECK((sim.truth.tau2 - sim.truth.mu2).cwiseAbs().maxCoeff() < 0.05);
  CHECK(sim.truth.coef[0].cols() == 12);
}

TEST_CASE("vanishing variances reproduce the spline means") {
  ScenarioConfig cfg = scenario_preset("1");
  cfg.sigma2 = cfg.sigma_r2 = cfg.sigma_w2 = 1e-40;
  cfg.N1 = cfg.N2 = 3;
  const auto sim = generate(cfg);
  for (std::size_t i = 0; i < sim.data.size(); ++i) {
    const auto& tau = sim.truth.labels[i] == 1 ? sim.truth.tau1 : sim.truth.tau2;
    CHECK((sim.data.curve(i).values() - tau).cwiseAbs().maxCoeff() < 1e-7);
  }
}

TEST_CASE("generation is seed-deterministic") {
  ScenarioConfig cfg = scenario_preset("2");
  cfg.seed = 17;
  const auto a = generate(cfg), b = generate(cfg);
  for (std::size_t i = 0; i < a.data.size(); ++i)
    CHECK(a.data.curve(i).values() == b.data.curve(i).values());
  CHECK(a.scalars.design() == b.scalars.design());
  cfg.seed = 18;
  CHECK(generate(cfg).data.curve(0).values() != a.data.curve(0).values());
}

TEST_CASE("warp and covariate distributions by Monte Carlo") {
  ScenarioConfig cfg = scenario_preset("1");
  cfg.grid = Eigen::VectorXd::LinSpaced(5, 0.1, 0.9);
  cfg.N1 = cfg.N2 = 10000;
  cfg.seed = 3;
  const auto sim = generate(cfg);
  Eigen::Matrix2d O1, O2;
  O1 << 10, 4, 4, 8;
  O2 << 10, 8, 8, 15;
  for (int group : {1, 2}) {
    Eigen::Matrix2d S = Eigen::Matrix2d::Zero();
    double vbar = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < sim.data.size(); ++i) {
      if (sim.truth.labels[i] != group) continue;
      const Eigen::Vector2d w = sim.truth.warps[i].segment(1, 2);
      S += w * w.transpose();
      vbar += sim.scalars.design()(static_cast<Eigen::Index>(i), 1);
      ++n;
    }
    S /= n;
    vbar /= n;
    const Eigen::Matrix2d want = cfg.sigma_w2 * (group == 1 ? O1 : O2);
    CHECK((S - want).norm() / want.norm() < 0.05);
    CHECK(std::abs(vbar - (group == 1 ? 1.5 : 1.5 - cfg.b2)) < 0.01);
  }
  for (const auto& w : sim.truth.warps) {
    CHECK(w[0] == 0.0);
    CHECK(w[3] == 0.0);
  }
}

TEST_CASE("scenario presets") {
  CHECK(scenario_preset("1").b1 == 0.12);
  CHECK(scenario_preset("2").b1 == 0.10);
  CHECK(scenario_preset("3").b1 == 0.08);
  CHECK(scenario_preset("4").b2 == 0.6);
  const auto x = scenario_preset("extreme");
  CHECK(x.b1 == 0.05);
  CHECK(x.N1 == 50);
  CHECK(x.sigma2 == 4e-4);
  CHECK(x.sigma_w2 == 1e-4);
  CHECK(scenario_preset("1").N1 + scenario_preset("1").N2 == 60);
  CHECK_THROWS_AS(scenario_preset("5"), ConfigError);
}

TEST_CASE("invalid scenario settings") {
  ScenarioConfig cfg;
  cfg.sigma2 = 0.0;
  CHECK_THROWS_AS(generate(cfg), ConfigError);
  cfg = ScenarioConfig{};
  cfg.N1 = 0;
  CHECK_THROWS_AS(generate(cfg), ConfigError);
  cfg = ScenarioConfig{};
  cfg.grid = Eigen::VectorXd::LinSpaced(3, 0, 1);
  CHECK_THROWS_AS(generate(cfg), ConfigError);
}
