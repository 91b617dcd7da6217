#pragma once

#include "srcfda/covariance.hpp"
#include "srcfda/dataset.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace srcfda {

struct ScenarioConfig {
  std::string name = "custom";
  double b1 = 0.12;  // separation of the mean curves
  double b2 = 0.8;   // separation of the scalar covariate
  double sigma_w2 = 0.25e-4;
  double sigma_r2 = 1e-4;
  double sigma2 = 1e-4;
  int N1 = 30;
  int N2 = 30;
  Eigen::VectorXd grid = default_grid();
  std::uint64_t seed = 1;
  MaternKernel amplitude{100.0, 0.3, 3.0};
  int knots = 8;

  /// t_j = (j + 1) / 102 for j = 1..100.
  static Eigen::VectorXd default_grid();
  void validate() const;
};

struct GroundTruth {
  std::vector<int> labels;             // 1 or 2
  std::vector<Eigen::VectorXd> warps;  // per curve, anchor values of w_i (ends zero)
  Eigen::VectorXd anchors;
  Eigen::MatrixXd mu1, mu2;            // exact means on the grid (2 x n)
  Eigen::MatrixXd tau1, tau2;          // their cubic B-spline fits on the grid
  std::vector<Eigen::MatrixXd> coef;   // [k] 2 x q spline weights of the fits
};

struct Simulation {
  FunctionalDataset data;
  ScalarCovariates scalars;
  GroundTruth truth;
};

/// (mu1, mu2) evaluated at `times`, each 2 x n.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> true_means(double b1, const Eigen::VectorXd& times);

Simulation generate(const ScenarioConfig& cfg);

/// Presets "1", "2", "3", "4", "extreme" and "recovery".
ScenarioConfig scenario_preset(const std::string& name);

}  // namespace srcfda
