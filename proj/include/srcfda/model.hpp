#pragma once

#include "srcfda/basis.hpp"
#include "srcfda/covariance.hpp"
#include "srcfda/dataset.hpp"
#include "srcfda/warping.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace srcfda {

/// How the prior cluster probabilities pi_ki are produced.
enum class AllocationKind {
  covariates,   // multinomial logit on scalar covariates (SRC)
  proportions,  // free mixing proportions shared by all curves (SRC-f)
};

/// All unknowns of the two-level model.
struct SrcParameters {
  int K = 1;
  BSplineBasis basis = BSplineBasis::equispaced(8);
  std::vector<Eigen::MatrixXd> coef;  // [k] A x q spline weights d_ak (row a)
  WarpParameters warps;
  /// Amplitude random-effect kernel S; nullopt means S = 0.
  std::optional<MaternKernel> rho_s = MaternKernel{};
  WarpCovariance rho_h = BrownianKernel{};
  double sigma2 = 1.0;
  AllocationKind allocation = AllocationKind::covariates;
  Eigen::MatrixXd beta;         // (K-1) x p
  Eigen::VectorXd proportions;  // K, used with AllocationKind::proportions

  void validate() const;
};

/// N x K posterior membership weights; rows on the simplex.
struct Responsibilities {
  Eigen::MatrixXd M;

  Eigen::Index curves() const { return M.rows(); }
  Eigen::Index clusters() const { return M.cols(); }
  /// 1-based argmax per row, ties to the lowest index.
  std::vector<int> assignments() const;
  /// Throws ValidationError unless entries are in [0,1] and rows sum to 1 (tol).
  void validate(double tol = 1e-10) const;
};

/// Factorized I + S_i for every curve, shared between curves on identical grids.
class AmplitudeCovariances {
 public:
  AmplitudeCovariances() = default;
  AmplitudeCovariances(const FunctionalDataset& data, const std::optional<MaternKernel>& kernel);

  const SpdMatrix& of_curve(std::size_t i) const { return factors_[grid_index_[i]]; }
  std::size_t grid_of(std::size_t i) const { return grid_index_[i]; }
  std::size_t grid_count() const { return grids_.size(); }
  const Eigen::VectorXd& grid(std::size_t g) const { return grids_[g]; }
  const SpdMatrix& of_grid(std::size_t g) const { return factors_[g]; }
  const std::vector<std::size_t>& grid_index() const { return grid_index_; }

  /// Groups curves by identical grids without factorizing anything.
  static std::pair<std::vector<Eigen::VectorXd>, std::vector<std::size_t>> group_grids(
      const FunctionalDataset& data);

 private:
  std::vector<Eigen::VectorXd> grids_;
  std::vector<std::size_t> grid_index_;
  std::vector<SpdMatrix> factors_;
};

/// Converged fit of SRC or SRC-f.
struct FitResult {
  std::string method = "src";
  std::vector<std::string> curve_ids;
  SrcParameters params;
  Responsibilities responsibilities;
  Eigen::MatrixXd priors;  // N x K pi_ki at the final parameters
  std::vector<double> loglik_trace;
  std::vector<int> assignments;  // 1-based
  double loglik = 0.0;
  double aicc = 0.0;
  int num_params = 0;
  std::vector<Eigen::MatrixXd> aligned;  // per curve, A x n_i fixed-effect curves
  bool converged = false;
  int iterations = 0;
  int ascent_violations = 0;  // decreases larger than the tolerated slack
  std::vector<std::string> warnings;
};

/// sum_a log N(x_ai; tau_ak(g_ki), sigma2 (I + S_i)) given the factorized I + S_i.
double component_loglik(const Curve& curve, const SrcParameters& params, int k, std::size_t i,
                        const SpdMatrix& amplitude);
/// Convenience overload that factorizes I + S_i itself.
double component_loglik(const FunctionalDataset& data, const SrcParameters& params, int k,
                        std::size_t i);
/// N x K matrix of component log-likelihoods.
Eigen::MatrixXd component_logliks(const FunctionalDataset& data, const SrcParameters& params,
                                  const AmplitudeCovariances& amplitude);

/// M_ki proportional to pi_ki exp(loglik_ki), normalized in log space.
Responsibilities responsibilities(const Eigen::MatrixXd& priors, const Eigen::MatrixXd& logliks);

/// sum_i log sum_k pi_ki exp(loglik_ki).
double mixture_loglik(const Eigen::MatrixXd& priors, const Eigen::MatrixXd& logliks);
double mixture_loglik(const SrcParameters& params, const FunctionalDataset& data,
                      const ScalarCovariates* scalars);

/// Multinomial logit with the K-th category as reference; beta is (K-1) x p.
Eigen::MatrixXd allocation_probs(const Eigen::MatrixXd& beta, const Eigen::MatrixXd& design);
/// Prior matrix for the parameters' allocation kind (scalars required for covariates).
Eigen::MatrixXd prior_probs(const SrcParameters& params, std::size_t N,
                            const ScalarCovariates* scalars);

/// Fixed-effect curve sum_k pi_k tau_k(g_ki(t)) on `grid` (A x n).
Eigen::MatrixXd predict_curve(const SrcParameters& params, std::size_t i,
                              const Eigen::VectorXd& pi_row, const Eigen::VectorXd& grid);

/// Warped cluster mean tau_k(g(t)) for explicit anchor values (A x n).
Eigen::MatrixXd warped_mean(const SrcParameters& params, int k, const Eigen::VectorXd& warp_values,
                            const Eigen::VectorXd& grid);

/// Registered cluster patterns: for each k the weighted average over curves of
/// tau_k(g_ki(t)) on `grid`, with weights column k of M (A x n each).
std::vector<Eigen::MatrixXd> cluster_patterns(const SrcParameters& params, const Eigen::MatrixXd& M,
                                              const Eigen::VectorXd& grid);

struct Classification {
  int cluster = 1;  // 1-based
  Eigen::VectorXd posterior;
};

/// Posterior membership of a curve. `random_warps[k]` gives the curve's w_k* anchors;
/// when empty the prior mode w = 0 is used for every cluster.
Classification classify(const Curve& curve, const Eigen::VectorXd& pi_row,
                        const SrcParameters& params,
                        const std::vector<Eigen::VectorXd>& random_warps = {});

}  // namespace srcfda
