#include "srcfda/warping.hpp"

#include <doctest.h>

#include <random>

using namespace srcfda;

namespace {

WarpParameters small_warps(std::uint64_t seed) {
  auto wp = WarpParameters::identity(WarpParameters::default_anchors(), 2, 3);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (int k = 0; k < 2; ++k) {
    wp.fixed[k][1] = u(rng);
    wp.fixed[k][2] = u(rng);
    for (auto& r : wp.random[k]) {
      r[1] = u(rng);
      r[2] = u(rng);
    }
  }
  return wp;
}

// Direct cubic Hermite evaluation with three-point tangents, written out by hand.
double hermite_direct(const Eigen::VectorXd& x, const Eigen::VectorXd& y, double t) {
  const Eigen::Index n = x.size();
  Eigen::VectorXd m(n);
  m[0] = (y[1] - y[0]) / (x[1] - x[0]);
  m[n - 1] = (y[n - 1] - y[n - 2]) / (x[n - 1] - x[n - 2]);
  for (Eigen::Index l = 1; l + 1 < n; ++l) m[l] = (y[l + 1] - y[l - 1]) / (x[l + 1] - x[l - 1]);
  Eigen::Index s = 0;
  while (s + 2 < n && t > x[s + 1]) ++s;
  const double h = x[s + 1] - x[s], u = (t - x[s]) / h;
  const double h00 = 2 * u * u * u - 3 * u * u + 1, h10 = u * u * u - 2 * u * u + u;
  const double h01 = -2 * u * u * u + 3 * u * u, h11 = u * u * u - u * u;
  return h00 * y[s] + h10 * h * m[s] + h01 * y[s + 1] + h11 * h * m[s + 1];
}

}  // namespace

TEST_CASE("zero warp is the identity") {
  const auto wp = WarpParameters::identity(WarpParameters::default_anchors(), 2, 4);
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(77, 0, 1);
  CHECK((eval_g(wp, 1, 3, t) - t).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fixed warp value shows up at its anchor") {
  auto wp = WarpParameters::identity(WarpParameters::default_anchors(), 1, 1);
  wp.fixed[0][1] = 0.04;
  Eigen::VectorXd t(1);
  t << 0.33;
  CHECK(eval_g(wp, 0, 0, t)[0] == doctest::Approx(0.37).epsilon(1e-14));
}

TEST_CASE("g matches an independent Hermite evaluation") {
  const auto wp = small_warps(4);
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(501, 0, 1);
  const Eigen::VectorXd g = eval_g(wp, 1, 2, t);
  const Eigen::VectorXd v = wp.combined(1, 2);
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    const double want = std::clamp(t[j] + hermite_direct(wp.anchors, v, t[j]), 0.0, 1.0);
    CHECK(std::abs(g[j] - want) < 1e-12);
  }
}

TEST_CASE("nonzero endpoint values are rejected") {
  auto wp = WarpParameters::identity(WarpParameters::default_anchors(), 1, 1);
  wp.random[0][0][0] = 0.1;
  CHECK_THROWS(wp.validate());
}

TEST_CASE("warped design") {
  const auto b = BSplineBasis::equispaced(8);
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(30, 0, 1);
  CHECK((warped_design(b, t) - design_matrix(b, t)).cwiseAbs().maxCoeff() == 0.0);

  const Eigen::VectorXd shifted = (t.array() + 0.2).min(1.0).matrix();
  const Eigen::MatrixXd D = warped_design(b, shifted);
  CHECK((D.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK((D.row(29) - b.row(1.0).transpose()).norm() == 0.0);

  Eigen::VectorXd coef = Eigen::VectorXd::LinSpaced(b.size(), -1, 2);
  coef = coef.array().sin().matrix();
  const auto wp = small_warps(8);
  const Eigen::VectorXd g = eval_g(wp, 0, 1, t);
  const Eigen::VectorXd tau = warped_design(b, g) * coef;
  for (Eigen::Index j = 0; j < t.size(); ++j) CHECK(std::abs(tau[j] - b.row(g[j]).dot(coef)) < 1e-12);
}

TEST_CASE("warp jacobian") {
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(40, 0.01, 0.99);
  const auto wp = small_warps(12);
  const Eigen::MatrixXd J = warp_jacobian(wp, 1, 0, t);
  CHECK(J.col(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(J.col(3).cwiseAbs().maxCoeff() == 0.0);

  auto zero = wp;
  zero.random[1][0].setZero();
  CHECK((J - warp_jacobian(zero, 1, 0, t)).cwiseAbs().maxCoeff() < 1e-8);

  const double h = 1e-4;
  for (int l = 1; l <= 2; ++l) {
    auto p = wp, m = wp;
    p.random[1][0][l] += h;
    m.random[1][0][l] -= h;
    const Eigen::VectorXd fd = (eval_g(p, 1, 0, t) - eval_g(m, 1, 0, t)) / (2 * h);
    CHECK((J.col(l) - fd).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("model jacobian") {
  const auto b = BSplineBasis::equispaced(8);
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(40, 0.01, 0.99);
  const auto wp = small_warps(21);

  CHECK(model_jacobian(b, Eigen::VectorXd::Zero(b.size()), wp, 0, 2, t).cwiseAbs().maxCoeff() == 0.0);

  // tau(u) = u: the clamped basis reproduces linear functions with Greville coefficients.
  Eigen::VectorXd greville(b.size());
  std::vector<double> knots(4, 0.0);
  knots.insert(knots.end(), b.interior_knots().begin(), b.interior_knots().end());
  knots.insert(knots.end(), 4, 1.0);
  for (Eigen::Index l = 0; l < b.size(); ++l) greville[l] = (knots[l + 1] + knots[l + 2] + knots[l + 3]) / 3;
  CHECK((warped_design(b, t) * greville - t).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((model_jacobian(b, greville, wp, 0, 2, t) - warp_jacobian(wp, 0, 2, t)).cwiseAbs().maxCoeff() <
        1e-8);

  Eigen::VectorXd coef = Eigen::VectorXd::LinSpaced(b.size(), 0, 6).array().cos().matrix();
  const Eigen::MatrixXd B = model_jacobian(b, coef, wp, 1, 1, t);
  const double h = 1e-5;
  for (int l = 1; l <= 2; ++l) {
    auto p = wp, m = wp;
    p.random[1][1][l] += h;
    m.random[1][1][l] -= h;
    const Eigen::VectorXd fd =
        (b.evaluate(coef, eval_g(p, 1, 1, t)) - b.evaluate(coef, eval_g(m, 1, 1, t))) / (2 * h);
    CHECK((B.col(l) - fd).cwiseAbs().maxCoeff() < 1e-5);
  }

  // Linearization error is second order in the perturbation.
  Eigen::VectorXd dir(4);
  dir << 0, 0.6, -0.8, 0;
  auto residual = [&](double size) {
    auto p = wp;
    p.random[1][1] += size * dir;
    const Eigen::VectorXd exact = b.evaluate(coef, eval_g(p, 1, 1, t)) - b.evaluate(coef, eval_g(wp, 1, 1, t));
    return (exact - B * (size * dir)).norm();
  };
  for (double s : {1e-2, 5e-3, 2.5e-3}) CHECK(residual(s) / residual(s / 2) >= 3.5);
}

TEST_CASE("warp evaluator agrees with eval_g") {
  const auto wp = small_warps(30);
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(33, 0, 1);
  const WarpEvaluator ev(wp.anchors, t);
  CHECK((ev.g(wp.combined(0, 1)) - eval_g(wp, 0, 1, t)).cwiseAbs().maxCoeff() < 1e-14);
  const Eigen::MatrixXd J = ev.interior_jacobian(wp.combined(0, 1));
  CHECK((J - warp_jacobian(wp, 0, 1, t).middleCols(1, 2)).cwiseAbs().maxCoeff() < 1e-8);
}
