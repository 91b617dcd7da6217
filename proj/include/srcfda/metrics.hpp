#pragma once

#include <Eigen/Dense>

#include <vector>

namespace srcfda {

/// Fraction of unordered pairs on which two labelings agree.
double rand_index(const std::vector<int>& a, const std::vector<int>& b);

struct AriResult {
  double value = 0.0;
  bool degenerate = false;  // zero denominator; value is 1 for identical partitions, else 0
};

AriResult adjusted_rand_index_detailed(const std::vector<int>& a, const std::vector<int>& b);
double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b);

/// Root average squared error sqrt(sum_j ||mu_hat(t_j) - mu(t_j)||^2 / m) of two A x m curves.
double rase(const Eigen::MatrixXd& mu_hat, const Eigen::MatrixXd& mu);

}  // namespace srcfda
