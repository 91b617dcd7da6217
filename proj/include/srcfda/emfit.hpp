#pragma once

#include "srcfda/covariance.hpp"
#include "srcfda/dataset.hpp"
#include "srcfda/model.hpp"
#include "srcfda/optim.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace srcfda {

enum class WarpOptimizer { gauss_newton, nelder_mead };

/// Sample size used in the AICc small-sample correction.
enum class AiccSampleSize {
  observations,  // A * sum_i n_i scalar measurements
  subjects,      // N curves
};

struct EmConfig {
  int K = 2;
  AllocationKind allocation = AllocationKind::covariates;
  int max_outer_iter = 50;
  int inner_repeats = 3;
  double tol_rel_loglik = 1e-5;
  double eta = 1e-4;  // ridge on spline weights
  std::uint64_t seed = 1;
  int n_starts = 1;

  // Mean curves.
  int knots = 8;
  int degree = 3;

  // Warps.
  Eigen::VectorXd warp_anchors = WarpParameters::default_anchors();
  bool estimate_fixed_warps = true;
  bool estimate_random_warps = true;
  double warp_bound = 0.15;  // box bound on interior anchor values
  WarpOptimizer warp_optimizer = WarpOptimizer::gauss_newton;
  int warp_iterations = 6;  // Gauss-Newton steps per curve and sweep
  int warp_sweeps = 2;      // alternations between fixed and random parts
  int max_warp_evals = 60;  // Nelder-Mead budget per sub-problem

  // Variance parameters.
  bool amplitude_effect = true;
  MaternKernel rho_s_init{1.0, 0.3, 3.0};
  bool estimate_smoothness = false;
  BrownianKernel rho_h_init{1.0, BrownianKind::bridge};
  std::optional<Eigen::MatrixXd> unstructured_h;  // fixed H, replaces the Brownian kernel
  bool estimate_variances = true;
  int max_variance_evals = 60;
  double sigma2_min = 1e-10, sigma2_max = 1e2;
  double kernel_min = 1e-8, kernel_max = 1e3;
  double smoothness_min = 0.25, smoothness_max = 10.0;

  // Allocation model.
  double beta_bound = 50.0;
  int irls_max_iter = 100;

  // Model selection.
  bool count_random_warps = false;
  AiccSampleSize aicc_sample_size = AiccSampleSize::observations;

  /// Tolerated relative decrease of the mixture log-likelihood between outer iterations.
  double ascent_slack = 1e-4;

  void validate() const;
};

/// iid U(0,1) entries normalized per row.
Responsibilities init_responsibilities(std::size_t N, int K, std::mt19937_64& rng);
Responsibilities init_responsibilities(std::size_t N, int K, std::uint64_t seed);

/// Closed-form weighted GLS / ridge estimate of the spline weights of one cluster.
/// `weights` is column k of M; `warped_times[i]` holds g_ki on curve i's grid.
/// Curves with weight < 1e-12 are dropped. Returns A x q.
Eigen::MatrixXd estimate_spline_weights(const FunctionalDataset& data,
                                        const Eigen::VectorXd& weights,
                                        const std::vector<Eigen::VectorXd>& warped_times,
                                        const BSplineBasis& basis,
                                        const AmplitudeCovariances& amplitude, double eta);

/// Penalized objective of one cluster's spline weights (for checking the closed form).
double spline_weight_objective(const FunctionalDataset& data, const Eigen::VectorXd& weights,
                               const std::vector<Eigen::VectorXd>& warped_times,
                               const BSplineBasis& basis, const AmplitudeCovariances& amplitude,
                               double eta, const Eigen::MatrixXd& coef);

struct WarpOptions {
  WarpOptimizer optimizer = WarpOptimizer::gauss_newton;
  bool estimate_fixed = true;
  bool estimate_random = true;
  double bound = 0.15;
  int iterations = 6;
  int sweeps = 2;
  int max_evals = 60;
  /// Multiplier of the prior penalty ||w_ki||^2_H; defaults to the curve dimension A.
  double penalty = -1.0;
};

/// One cluster's warp sub-problem.
struct WarpProblem {
  const FunctionalDataset* data = nullptr;
  const Eigen::VectorXd* weights = nullptr;  // column k of M
  const Eigen::MatrixXd* coef = nullptr;     // A x q spline weights of cluster k
  const BSplineBasis* basis = nullptr;
  const AmplitudeCovariances* amplitude = nullptr;
  Eigen::VectorXd anchors;
  Eigen::MatrixXd warp_cov;  // n_w x n_w H (endpoint rows/cols ignored)
};

struct WarpEstimate {
  Eigen::VectorXd fixed;
  std::vector<Eigen::VectorXd> random;
  double objective_start = 0.0;
  double objective_end = 0.0;
  bool improved = false;
};

/// sum_i M_ki [ sum_a ||x_ai - tau_ak(g_ki)||^2_{I+S} + penalty * ||w_ki||^2_H ].
double warp_objective(const WarpProblem& problem, const Eigen::VectorXd& fixed,
                      const std::vector<Eigen::VectorXd>& random, double penalty);

/// Local minimizer of warp_objective over the interior anchor values, never worse than
/// the starting point.
WarpEstimate estimate_warps(const WarpProblem& problem, const Eigen::VectorXd& fixed0,
                            const std::vector<Eigen::VectorXd>& random0,
                            const WarpOptions& options = {});

struct VarianceOptions {
  bool estimate_smoothness = false;
  bool estimate_rho_h = true;
  int max_evals = 60;
  double initial_step = 0.5;  // in log-parameter space
  double sigma2_min = 1e-10, sigma2_max = 1e2;
  double kernel_min = 1e-8, kernel_max = 1e3;
  double smoothness_min = 0.25, smoothness_max = 10.0;
};

struct VarianceEstimate {
  double sigma2 = 1.0;
  std::optional<MaternKernel> rho_s;
  WarpCovariance rho_h;
  double objective_start = 0.0;
  double objective_end = 0.0;
};

/// Precomputed linearized mixed model (residuals x - G + B W0 and blocks B) around the
/// current warps; the kernels only enter through the covariance.
class LinearizedModel {
 public:
  LinearizedModel(const FunctionalDataset& data, const Eigen::MatrixXd& M,
                  const SrcParameters& params);

  /// Negative profile log-likelihood; sigma2 is profiled in closed form and written to
  /// `sigma2_out` when non-null.
  double objective(const std::optional<MaternKernel>& rho_s, const WarpCovariance& rho_h,
                   const VarianceOptions& bounds, double* sigma2_out = nullptr) const;
  /// Same with a fixed sigma2 (no profiling).
  double objective_at(const std::optional<MaternKernel>& rho_s, const WarpCovariance& rho_h,
                      double sigma2) const;

 private:
  struct Sums {
    double quad = 0.0, logdet = 0.0, count = 0.0;
  };
  Sums sums(const std::optional<MaternKernel>& rho_s, const WarpCovariance& rho_h) const;

  std::vector<Eigen::VectorXd> grids_;
  std::vector<Eigen::MatrixXd> columns_;  // per grid: [r, B_int] blocks side by side
  std::vector<std::vector<double>> block_weight_;
  Eigen::VectorXd anchors_;
  Eigen::Index interior_ = 0;
};

/// Estimates (sigma2, rho_s, rho_h) by minimizing the linearized model's profile
/// likelihood with a bounded Nelder-Mead search over log kernel parameters.
VarianceEstimate estimate_variances(const FunctionalDataset& data, const Eigen::MatrixXd& M,
                                    const SrcParameters& params,
                                    const VarianceOptions& options = {});

struct AllocationEstimate {
  Eigen::MatrixXd beta;  // (K-1) x p
  double gradient_norm = 0.0;
  int iterations = 0;
  bool clipped = false;
};

/// Multinomial logit fit with soft counts M (Newton / IRLS with step halving).
AllocationEstimate estimate_allocation(const Eigen::MatrixXd& M, const Eigen::MatrixXd& design,
                                       const Eigen::MatrixXd& beta0 = {},
                                       double beta_bound = 50.0, int max_iter = 100);
/// Pseudo log-likelihood sum_i sum_k M_ki log pi_ki.
double allocation_loglik(const Eigen::MatrixXd& M, const Eigen::MatrixXd& design,
                         const Eigen::MatrixXd& beta);

/// Full EM fit. `scalars` may be null only for proportion allocation.
FitResult fit(const FunctionalDataset& data, const ScalarCovariates* scalars,
              const EmConfig& config);

/// Corrected AIC; +infinity when N <= P + 1.
double aicc(double loglik, int num_params, double sample_size);
int count_parameters(const EmConfig& config, Eigen::Index dimension, std::size_t N,
                     Eigen::Index covariate_cols);
double aicc_sample_size(const EmConfig& config, const FunctionalDataset& data);

struct SelectionRow {
  int K = 0;
  bool ok = false;
  double aicc = 0.0;
  double loglik = 0.0;
  int num_params = 0;
  std::string error;
};

struct Selection {
  int best_K = 0;
  std::vector<SelectionRow> rows;
  std::vector<FitResult> fits;  // successful fits, in K order
};

/// Fits every K (seed offset by K) and returns the AICc minimizer, ties to the smaller K.
Selection select_k(const FunctionalDataset& data, const ScalarCovariates* scalars,
                   const EmConfig& config, const std::vector<int>& k_range);

}  // namespace srcfda
