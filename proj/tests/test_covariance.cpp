#include "oracles.hpp"

#include "srcfda/covariance.hpp"
#include "srcfda/errors.hpp"

#include <doctest.h>

#include <random>

using namespace srcfda;

TEST_CASE("matern at zero distance is the scale") {
  CHECK(matern_eval({2.5, 0.3, 3.0}, 0.0) == 2.5);
  CHECK(matern_eval({2.5, 0.3, 0.5}, 0.0) == 2.5);
}

TEST_CASE("matern half-integer closed forms") {
  const double s = 1.7, r = 0.4;
  CHECK(std::abs(matern_eval({s, r, 0.5}, r) - s * std::exp(-1.0)) < 1e-12);
  CHECK(std::abs(matern_eval({s, r, 1.5}, r) - s * (1 + std::sqrt(3.0)) * std::exp(-std::sqrt(3.0))) <
        1e-12);
  for (double d : {0.01, 0.1, 0.3, 0.77, 2.0}) {
    CHECK(std::abs(matern_eval({s, r, 0.5}, d) - oracle::matern_half(s, r, d)) < 1e-12);
    CHECK(std::abs(matern_eval({s, r, 1.5}, d) - oracle::matern_three_halves(s, r, d)) < 1e-12);
    CHECK(std::abs(matern_eval({s, r, 2.5}, d) - oracle::matern_five_halves(s, r, d)) < 1e-12);
  }
}

TEST_CASE("matern is continuous at zero and non-increasing") {
  for (double nu : {0.3, 0.5, 1.2, 3.0, 7.5}) {
    const MaternKernel k{1.0, 0.3, nu};
    CHECK(std::abs(k(1e-14) - 1.0) < 1e-6);
    double prev = k(0.0);
    for (int j = 1; j <= 200; ++j) {
      const double v = k(j * 0.01);
      CHECK(v <= prev + 1e-15);
      prev = v;
    }
  }
}

TEST_CASE("brownian kernels") {
  const BrownianKernel bridge{1.0, BrownianKind::bridge};
  CHECK(brownian_eval(bridge, 0.0, 0.4) == 0.0);
  CHECK(brownian_eval(bridge, 0.4, 1.0) == 0.0);
  CHECK(brownian_eval(bridge, 0.5, 0.5) == 0.25);
  CHECK(brownian_eval({2.0, BrownianKind::motion}, 1.0, 1.0) == 2.0);
}

TEST_CASE("invalid kernel parameters are rejected") {
  CHECK_THROWS_AS((MaternKernel{0.0, 1.0, 1.0}.validate()), ConfigError);
  CHECK_THROWS_AS((MaternKernel{1.0, -1.0, 1.0}.validate()), ConfigError);
  CHECK_THROWS_AS((BrownianKernel{-1.0}.validate()), ConfigError);
}

TEST_CASE("build_cov adds jitter on the diagonal") {
  const MaternKernel k{2.0, 0.3, 3.0};
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(5, 0, 1);
  const auto c = build_cov(k, t, 1e-6);
  CHECK((c.matrix() - c.matrix().transpose()).cwiseAbs().maxCoeff() < 1e-12);
  for (int j = 0; j < 5; ++j) CHECK(c.matrix()(j, j) == doctest::Approx(2.0 + 1e-6).epsilon(1e-14));
}

TEST_CASE("bridge gram has zero endpoint rows") {
  Eigen::VectorXd a(4);
  a << 0, 0.33, 0.67, 1;
  const auto c = build_cov(BrownianKernel{1.0, BrownianKind::bridge}, a);
  const double j = c.jitter();
  for (int l = 0; l < 4; ++l) {
    CHECK(c.matrix()(0, l) == (l == 0 ? j : 0.0));
    CHECK(c.matrix()(3, l) == (l == 3 ? j : 0.0));
  }
  const Eigen::MatrixXd interior = gram(BrownianKernel{1.0}, a).block(1, 1, 2, 2);
  CHECK(oracle::min_eigenvalue(interior) > 0.0);
}

TEST_CASE("gram matrices are symmetric PSD by an eigenvalue oracle") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int rep = 0; rep < 50; ++rep) {
    Eigen::VectorXd t(10);
    for (auto& x : t) x = u(rng);
    std::sort(t.data(), t.data() + t.size());
    const MaternKernel k{0.5 + u(rng), 0.05 + u(rng), 0.5 + 4 * u(rng)};
    const Eigen::MatrixXd G = gram(k, t);
    CHECK((G - G.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(oracle::min_eigenvalue(G) >= -1e-10 * G.trace());
    CHECK(oracle::min_eigenvalue(build_cov(k, t).matrix()) >= 0.0);
    const Eigen::MatrixXd B = gram(BrownianKernel{u(rng) + 0.1, BrownianKind::motion}, t);
    CHECK(oracle::min_eigenvalue(B) >= -1e-12);
  }
}

TEST_CASE("evenly spaced matern gram equals the direct evaluation") {
  const MaternKernel k{100.0, 0.3, 3.0};
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(40, 0.02, 0.98);
  const Eigen::MatrixXd G = gram(k, t);
  for (int i = 0; i < 40; i += 7)
    for (int j = 0; j < 40; j += 5)
      CHECK(std::abs(G(i, j) - matern_eval(k, std::abs(t[i] - t[j]))) < 1e-9);
}

TEST_CASE("spd helpers agree with dense linear algebra") {
  const Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(8, 0, 1);
  const auto c = build_cov(MaternKernel{1.0, 0.2, 1.5}, t, 1e-3);
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(8, -1, 2);
  const Eigen::MatrixXd inv = c.matrix().inverse();
  CHECK(std::abs(c.quad(x) - x.dot(inv * x)) < 1e-8);
  CHECK(std::abs(c.log_det() - std::log(c.matrix().determinant())) < 1e-9);
}
