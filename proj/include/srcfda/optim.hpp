#pragma once

#include <Eigen/Dense>

#include <functional>

namespace srcfda {

struct NelderMeadOptions {
  int max_evals = 200;
  double initial_step = 0.5;  // simplex edge, per coordinate
  double ftol = 1e-10;        // relative spread of simplex values
  double xtol = 1e-8;         // simplex diameter
};

struct OptimResult {
  Eigen::VectorXd x;
  double f = 0.0;
  double f_start = 0.0;
  int evals = 0;
  bool improved = false;
};

/// Box-constrained Nelder-Mead; trial points are projected onto [lower, upper].
/// The returned point never has a larger value than the (projected) start.
OptimResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                        const Eigen::VectorXd& x0, const Eigen::VectorXd& lower,
                        const Eigen::VectorXd& upper, const NelderMeadOptions& opt = {});

}  // namespace srcfda
