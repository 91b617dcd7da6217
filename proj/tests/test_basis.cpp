#include "oracles.hpp"

#include "srcfda/basis.hpp"
#include "srcfda/errors.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace srcfda;

TEST_CASE("degree-0 basis is an indicator") {
  const BSplineBasis b(0, {0.5});
  const Eigen::VectorXd r1 = b.row(0.25), r2 = b.row(0.75);
  CHECK(r1[0] == 1.0);
  CHECK(r1[1] == 0.0);
  CHECK(r2[0] == 0.0);
  CHECK(r2[1] == 1.0);
}

TEST_CASE("cubic basis matches the Cox-de Boor recursion") {
  const auto b = BSplineBasis::equispaced(8);
  REQUIRE(b.size() == 12);
  for (double t : {0.0, 0.05, 0.3, 0.5, 0.61, 0.999, 1.0}) {
    const Eigen::VectorXd got = b.row(t);
    const Eigen::VectorXd want = oracle::bspline_row(b.interior_knots(), 3, t);
    CHECK((got - want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("partition of unity and non-negativity over random knots") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> nk(1, 10), deg(0, 4);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> knots(static_cast<std::size_t>(nk(rng)));
    for (auto& k : knots) k = 0.01 + 0.98 * u(rng);
    std::sort(knots.begin(), knots.end());
    knots.erase(std::unique(knots.begin(), knots.end()), knots.end());
    const BSplineBasis b(deg(rng), knots);
    Eigen::VectorXd t(50);
    for (auto& x : t) x = u(rng);
    const Eigen::MatrixXd D = design_matrix(b, t);
    CHECK((D.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(D.minCoeff() >= 0.0);
  }
}

TEST_CASE("times outside [0,1] are clamped") {
  const auto b = BSplineBasis::equispaced(4);
  CHECK((b.row(-0.5) - b.row(0.0)).norm() == 0.0);
  CHECK((b.row(1.5) - b.row(1.0)).norm() == 0.0);
}

TEST_CASE("derivative row matches finite differences") {
  const auto b = BSplineBasis::equispaced(8);
  for (double t : {0.1, 0.37, 0.8}) {
    const double h = 1e-6;
    const Eigen::VectorXd fd = (b.row(t + h) - b.row(t - h)) / (2 * h);
    CHECK((b.derivative_row(t) - fd).cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("bad knot configurations are rejected") {
  CHECK_THROWS_AS(BSplineBasis(3, {0.5, 0.4}), ConfigError);
  CHECK_THROWS_AS(BSplineBasis(-1, {}), ConfigError);
}

TEST_CASE("anchor splines interpolate their anchors") {
  Eigen::VectorXd a(4), v(4);
  a << 0, 0.33, 0.67, 1;
  v << 0, 0.1, -0.05, 0;
  const AnchorSpline s(a, v);
  for (int l = 0; l < 4; ++l) CHECK(s(a[l]) == doctest::Approx(v[l]).epsilon(1e-15));
  const AnchorSpline zero(a, Eigen::VectorXd::Zero(4));
  CHECK(eval_spline(zero, Eigen::VectorXd::LinSpaced(101, 0, 1)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hermite kind is linear in the values") {
  Eigen::VectorXd a(5), v1(5), v2(5);
  a << 0, 0.2, 0.5, 0.7, 1;
  v1 << 0, 0.1, -0.3, 0.2, 0;
  v2 << 0, -0.2, 0.05, 0.4, 0;
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(57, 0, 1);
  const Eigen::VectorXd lhs = eval_spline(AnchorSpline(a, 2.0 * v1 - 0.5 * v2), t);
  const Eigen::VectorXd rhs = 2.0 * eval_spline(AnchorSpline(a, v1), t) -
                              0.5 * eval_spline(AnchorSpline(a, v2), t);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-14);
  const Eigen::MatrixXd W = AnchorSpline::hermite_weights(a, t);
  CHECK((W * v1 - eval_spline(AnchorSpline(a, v1), t)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("hyman kind keeps t + s(t) non-decreasing") {
  Eigen::VectorXd a(4), v(4);
  a << 0, 0.33, 0.67, 1;
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(1000, 0, 1);
  auto monotone = [&](const Eigen::VectorXd& vals) {
    const Eigen::VectorXd g = t + eval_spline(AnchorSpline(a, vals, SplineKind::hyman_monotone), t);
    for (Eigen::Index j = 1; j < g.size(); ++j)
      if (g[j] < g[j - 1] - 1e-15) return false;
    return true;
  };
  v << 0, 0.3, 0.2, 0;
  CHECK(monotone(v));

  // Nodes t + v that decrease admit no monotone interpolant.
  v << 0, 0.3, -0.3, 0;
  CHECK_THROWS_AS(AnchorSpline(a, v, SplineKind::hyman_monotone), ConfigError);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.165, 0.165);
  for (int rep = 0; rep < 500; ++rep) {
    v << 0, u(rng), u(rng), 0;
    CHECK(monotone(v));
  }
}
