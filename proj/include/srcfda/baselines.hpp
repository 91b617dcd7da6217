#pragma once

#include "srcfda/dataset.hpp"
#include "srcfda/emfit.hpp"
#include "srcfda/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace srcfda {

struct HardClustering {
  std::vector<int> assignments;  // 1-based
  double objective = 0.0;        // final F (k-means-f) or within-cluster SSE (k-means-s)
  std::vector<double> objective_trace;
  int iterations = 0;
  bool converged = false;
  std::vector<int> empty_clusters;  // 1-based clusters left without members
  std::vector<std::string> warnings;
};

struct KmeansSConfig {
  int K = 2;
  std::uint64_t seed = 1;
  int n_init = 10;
  int max_iter = 100;
};

/// Lloyd iterations on the raw covariates (intercept excluded) with k-means++ seeding;
/// the best of n_init restarts by SSE is returned.
HardClustering kmeans_s(const ScalarCovariates& scalars, const KmeansSConfig& config);

struct KmeansFConfig {
  int K = 2;
  std::uint64_t seed = 1;
  int max_iter = 30;
  int refits = 2;  // spline/warp alternations per iteration
  bool estimate_warps = true;
  double warp_penalty = 1.0;  // lambda in lambda * ||w_i||^2_H
  double warp_bound = 0.15;
  Eigen::VectorXd warp_anchors = WarpParameters::default_anchors();
  int knots = 8;
  int degree = 3;
  double eta = 0.0;  // 1e-8 is used when the normal matrix is singular
};

struct KmeansFResult {
  HardClustering clustering;
  SrcParameters params;  // means and warps; isotropic covariance delta I in sigma2
  double delta = 0.0;    // profiled residual variance
  Eigen::MatrixXd distances;  // N x K penalized misfits at the final means
  std::vector<Eigen::MatrixXd> aligned;  // per curve tau_{z_i}(g_i) on its grid
};

/// Functional k-means with alignment. Initial assignments come from k-means-s when
/// `scalars` is given, else a seeded random assignment.
KmeansFResult kmeans_f(const FunctionalDataset& data, const ScalarCovariates* scalars,
                       const KmeansFConfig& config);

/// SRC with free mixing proportions instead of covariate-driven allocation.
FitResult src_f(const FunctionalDataset& data, EmConfig config);

struct SoftnessRow {
  double delta = 0.0;
  double max_deviation = 0.0;  // max_i |max_k M_ki - 1|
  Eigen::MatrixXd M;
};

/// Responsibilities under isotropic components N(mu_k, delta I) with mixing proportions
/// `proportions` (uniform when empty), for each delta. `means[k]` is A x n on the common grid.
std::vector<SoftnessRow> softness_limit_check(const FunctionalDataset& data,
                                              const std::vector<Eigen::MatrixXd>& means,
                                              const std::vector<double>& deltas,
                                              const Eigen::VectorXd& proportions = {});

}  // namespace srcfda
