#include "srcfda/simgen.hpp"

#include "srcfda/basis.hpp"
#include "srcfda/errors.hpp"
#include "srcfda/warping.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace srcfda {

namespace {

constexpr double kVarianceFloor = 1e-20;

Eigen::MatrixXd upper_factor(const Eigen::MatrixXd& O, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(O);
  if (llt.info() != Eigen::Success)
    throw ConfigError(std::string("Cholesky factorization failed for ") + what);
  return llt.matrixU();
}

Eigen::MatrixXd spline_fit(const BSplineBasis& basis, const Eigen::VectorXd& times,
                           const Eigen::MatrixXd& values) {
  const Eigen::MatrixXd Psi = basis.design_matrix(times);
  return Psi.colPivHouseholderQr().solve(values.transpose()).transpose();
}

}  // namespace

Eigen::VectorXd ScenarioConfig::default_grid() {
  Eigen::VectorXd t(100);
  for (int j = 1; j <= 100; ++j) t[j - 1] = (j + 1) / 102.0;
  return t;
}

void ScenarioConfig::validate() const {
  if (!(sigma_w2 > 0.0 && sigma_r2 > 0.0 && sigma2 > 0.0))
    throw ConfigError("scenario variances must be positive");
  if (N1 < 1 || N2 < 1) throw ConfigError("group sizes must be >= 1");
  if (grid.size() < 4) throw ConfigError("scenario grid needs at least four points");
  TimeGrid check(grid);
  amplitude.validate();
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> true_means(double b1, const Eigen::VectorXd& t) {
  const double tau = 2.0 * std::numbers::pi;
  Eigen::MatrixXd m1(2, t.size()), m2(2, t.size());
  for (Eigen::Index j = 0; j < t.size(); ++j) {
    m1(0, j) = std::exp(std::cos(tau * t[j]));
    m1(1, j) = std::exp(std::sin(tau * t[j]));
    m2(0, j) = std::exp(std::cos(tau * std::pow(t[j], 1.05) - b1));
    m2(1, j) = std::exp(std::sin(tau * std::pow(t[j], 1.1) + b1));
  }
  return {m1, m2};
}

Simulation generate(const ScenarioConfig& cfg) {
  cfg.validate();
  const Eigen::VectorXd& t = cfg.grid;
  const auto n = t.size();

  GroundTruth truth;
  truth.anchors = WarpParameters::default_anchors();
  std::tie(truth.mu1, truth.mu2) = true_means(cfg.b1, t);
  const BSplineBasis basis = BSplineBasis::equispaced(cfg.knots);
  // Fit on a dense grid so the spline represents the mean over all of [0, 1].
  const Eigen::VectorXd dense = Eigen::VectorXd::LinSpaced(401, 0.0, 1.0);
  const auto [d1, d2] = true_means(cfg.b1, dense);
  truth.coef = {spline_fit(basis, dense, d1), spline_fit(basis, dense, d2)};
  const Eigen::MatrixXd Psi = basis.design_matrix(t);
  truth.tau1 = (Psi * truth.coef[0].transpose()).transpose();
  truth.tau2 = (Psi * truth.coef[1].transpose()).transpose();

  Eigen::Matrix2d O1, O2;
  O1 << 10, 4, 4, 8;
  O2 << 10, 8, 8, 15;
  const Eigen::MatrixXd T1 = upper_factor(O1, "the group-1 warp covariance");
  const Eigen::MatrixXd T2 = upper_factor(O2, "the group-2 warp covariance");
  Eigen::MatrixXd O0 = gram(cfg.amplitude, t);
  O0.diagonal().array() += 1e-8 * cfg.amplitude.scale;
  const Eigen::MatrixXd T0 = upper_factor(O0, "the amplitude covariance");

  const double sw = std::sqrt(std::max(cfg.sigma_w2, kVarianceFloor));
  const double sr = std::sqrt(std::max(cfg.sigma_r2, kVarianceFloor));
  const double se = std::sqrt(std::max(cfg.sigma2, kVarianceFloor));

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> Z(0.0, 1.0);
  std::uniform_real_distribution<double> U(0.0, 1.0);

  const int N = cfg.N1 + cfg.N2;
  std::vector<Curve> curves;
  std::vector<std::string> ids;
  Eigen::MatrixXd v(N, 1);
  curves.reserve(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) {
    const int group = i < cfg.N1 ? 1 : 2;
    const Eigen::MatrixXd& T = group == 1 ? T1 : T2;
    const Eigen::MatrixXd& coef = truth.coef[static_cast<std::size_t>(group - 1)];

    Eigen::Vector2d gamma(sw * Z(rng), sw * Z(rng));
    Eigen::VectorXd w = Eigen::VectorXd::Zero(4);
    w.segment(1, 2) = T.transpose() * gamma;
    const AnchorSpline warp(truth.anchors, w, SplineKind::hyman_monotone);
    Eigen::VectorXd g(n);
    for (Eigen::Index j = 0; j < n; ++j) g[j] = std::clamp(t[j] + warp(t[j]), 0.0, 1.0);
    const Eigen::MatrixXd mean = (basis.design_matrix(g) * coef.transpose()).transpose();

    Eigen::MatrixXd x(2, n);
    for (int a = 0; a < 2; ++a) {
      Eigen::VectorXd gamma0(n);
      for (Eigen::Index j = 0; j < n; ++j) gamma0[j] = sr * Z(rng);
      const Eigen::VectorXd r = T0.transpose() * gamma0;
      for (Eigen::Index j = 0; j < n; ++j) x(a, j) = mean(a, j) + r[j] + se * Z(rng);
    }
    const double u = U(rng);
    v(i, 0) = group == 1 ? 1.0 + u : 1.0 - cfg.b2 + u;

    char id[32];
    std::snprintf(id, sizeof id, "c%03d", i + 1);
    ids.emplace_back(id);
    curves.emplace_back(id, TimeGrid(t), std::move(x));
    truth.labels.push_back(group);
    truth.warps.push_back(w);
  }

  Simulation sim;
  sim.data = FunctionalDataset(std::move(curves), truth.labels);
  sim.scalars = ScalarCovariates(ids, {"v1"}, v);
  sim.truth = std::move(truth);
  return sim;
}

ScenarioConfig scenario_preset(const std::string& name) {
  ScenarioConfig c;
  c.name = name;
  auto small = [&](double b1, double b2) {
    c.b1 = b1;
    c.b2 = b2;
    c.sigma2 = c.sigma_r2 = 1e-4;
    c.sigma_w2 = 0.25e-4;
    c.N1 = c.N2 = 30;
  };
  auto large = [&](double b1, double b2) {
    c.b1 = b1;
    c.b2 = b2;
    c.sigma2 = c.sigma_r2 = 4e-4;
    c.sigma_w2 = 1e-4;
    c.N1 = c.N2 = 50;
  };
  if (name == "1")
    small(0.12, 0.8);
  else if (name == "2")
    small(0.10, 0.8);
  else if (name == "3")
    small(0.08, 0.8);
  else if (name == "4")
    small(0.08, 0.6);
  else if (name == "extreme")
    large(0.05, 0.8);
  else if (name == "recovery")
    large(0.15, 0.8);
  else
    throw ConfigError("unknown scenario '" + name + "'");
  return c;
}

}  // namespace srcfda
