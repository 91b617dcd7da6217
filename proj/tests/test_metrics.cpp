#include "oracles.hpp"

#include "srcfda/errors.hpp"
#include "srcfda/metrics.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace srcfda;

TEST_CASE("rand and adjusted rand index agree with pair counting on all small labelings") {
  for (int n : {2, 3, 4, 5, 6})
    for (int K : {1, 2, 3}) {
      const auto labelings = oracle::all_labelings(n, K);
      for (const auto& a : labelings)
        for (const auto& b : labelings) {
          CHECK(std::abs(rand_index(a, b) - oracle::rand_index(a, b)) < 1e-12);
          const double want = oracle::adjusted_rand_index(a, b);
          if (std::isnan(want)) continue;
          CHECK(std::abs(adjusted_rand_index(a, b) - want) < 1e-12);
        }
    }
}

TEST_CASE("known values") {
  const std::vector<int> a{1, 1, 2, 2}, b{1, 2, 1, 2};
  CHECK(rand_index(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK(adjusted_rand_index(a, b) == doctest::Approx(-0.5).epsilon(1e-14));
  // contingency [[2,0],[1,1]]: index 1, expected 1*3/6, max 2
  const std::vector<int> c{1, 1, 1, 2};
  CHECK(rand_index(a, c) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(adjusted_rand_index(a, c) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(rand_index(a, a) == 1.0);
  CHECK(adjusted_rand_index(a, a) == 1.0);
}

TEST_CASE("indices are invariant to label names") {
  const std::vector<int> a{1, 1, 2, 2, 3, 3, 1}, b{2, 2, 1, 1, 1, 3, 3};
  const std::vector<int> b_renamed{7, 7, 4, 4, 4, 9, 9};
  CHECK(rand_index(a, b) == rand_index(a, b_renamed));
  CHECK(adjusted_rand_index(a, b) == adjusted_rand_index(a, b_renamed));
  CHECK(rand_index(a, b) == rand_index(b, a));
  CHECK(adjusted_rand_index(a, b) == doctest::Approx(adjusted_rand_index(b, a)).epsilon(1e-14));
}

TEST_CASE("degenerate ari") {
  const std::vector<int> one(5, 1);
  const auto same = adjusted_rand_index_detailed(one, one);
  CHECK(same.degenerate);
  CHECK(same.value == 1.0);
  const std::vector<int> singletons{1, 2, 3, 4, 5};
  const auto diff = adjusted_rand_index_detailed(one, singletons);
  CHECK_FALSE(diff.degenerate);
  CHECK(diff.value == 0.0);
}

TEST_CASE("ari of independent random labelings averages near zero") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> lab(1, 3);
  double sum = 0.0;
  const int reps = 2000;
  for (int r = 0; r < reps; ++r) {
    std::vector<int> a(40), b(40);
    for (auto& x : a) x = lab(rng);
    for (auto& x : b) x = lab(rng);
    sum += adjusted_rand_index(a, b);
  }
  CHECK(std::abs(sum / reps) < 0.01);
}

TEST_CASE("rand distance satisfies the triangle inequality") {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> lab(1, 3);
  for (int r = 0; r < 500; ++r) {
    std::vector<int> a(9), b(9), c(9);
    for (int i = 0; i < 9; ++i) a[i] = lab(rng), b[i] = lab(rng), c[i] = lab(rng);
    const double ab = 1 - rand_index(a, b), bc = 1 - rand_index(b, c), ac = 1 - rand_index(a, c);
    CHECK(ac <= ab + bc + 1e-12);
  }
}

TEST_CASE("metric input checks") {
  CHECK_THROWS_AS(rand_index({1, 2}, {1}), ConfigError);
  CHECK_THROWS_AS(adjusted_rand_index({1}, {1}), ConfigError);
  CHECK_THROWS_AS(rase(Eigen::MatrixXd::Zero(2, 3), Eigen::MatrixXd::Zero(2, 4)), ConfigError);
}

TEST_CASE("rase") {
  Eigen::MatrixXd mu = Eigen::MatrixXd::Random(2, 10);
  CHECK(rase(mu, mu) == 0.0);
  Eigen::MatrixXd shifted = mu;
  shifted.row(0).array() += 0.3;
  shifted.row(1).array() -= 0.4;
  CHECK(rase(shifted, mu) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(rase(shifted, mu) == rase(mu, shifted));
}
