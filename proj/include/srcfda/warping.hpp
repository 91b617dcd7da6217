#pragma once

#include "srcfda/basis.hpp"

#include <Eigen/Dense>

#include <vector>

namespace srcfda {

/// Anchor values of the inverse warps g_ki(t) = t + w_k(t) + w_ki(t).
///
/// Both the fixed part (per cluster) and the random part (per cluster and curve) are
/// cubic Hermite interpolants over the shared anchor times, pinned to zero at the first
/// and last anchor.
struct WarpParameters {
  Eigen::VectorXd anchors;
  std::vector<Eigen::VectorXd> fixed;                // [k], length n_w
  std::vector<std::vector<Eigen::VectorXd>> random;  // [k][i], length n_w

  /// Identity warps for K clusters and N curves.
  static WarpParameters identity(const Eigen::VectorXd& anchors, int K, std::size_t N);
  /// Default anchors (0, 0.33, 0.67, 1).
  static Eigen::VectorXd default_anchors();

  Eigen::Index anchor_count() const { return anchors.size(); }
  int clusters() const { return static_cast<int>(fixed.size()); }
  /// w_k + w_ki anchor values.
  Eigen::VectorXd combined(int k, std::size_t i) const { return fixed[k] + random[k][i]; }
  /// Throws ConfigError if an endpoint value is nonzero or sizes disagree.
  void validate() const;
};

/// g(t) = t + hermite(values)(t), clamped to [0, 1].
Eigen::VectorXd eval_g(const Eigen::VectorXd& anchors, const Eigen::VectorXd& values,
                       const Eigen::VectorXd& grid);
Eigen::VectorXd eval_g(const WarpParameters& wp, int k, std::size_t i, const Eigen::VectorXd& grid);

/// B-spline design at warped times.
Eigen::MatrixXd warped_design(const BSplineBasis& basis, const Eigen::VectorXd& g_values);

/// d g(t_j) / d w_ki[l] by central differences with step h. Endpoint columns are zero.
Eigen::MatrixXd warp_jacobian(const WarpParameters& wp, int k, std::size_t i,
                              const Eigen::VectorXd& grid, double h = 1e-6);

/// Rows tau'_ak(g(t_j)) * grad_w g(t_j)' (the linearized-model blocks B_aki).
Eigen::MatrixXd model_jacobian(const BSplineBasis& basis, const Eigen::VectorXd& coef,
                               const WarpParameters& wp, int k, std::size_t i,
                               const Eigen::VectorXd& grid);

/// Precomputed Hermite weights of one grid against the anchors; g is affine in the
/// anchor values, so evaluation and the analytic Jacobian are matrix products.
class WarpEvaluator {
 public:
  WarpEvaluator() = default;
  WarpEvaluator(const Eigen::VectorXd& anchors, const Eigen::VectorXd& grid);

  const Eigen::VectorXd& grid() const { return grid_; }
  Eigen::Index anchor_count() const { return weights_.cols(); }

  /// Clamped warped times for the given anchor values.
  Eigen::VectorXd g(const Eigen::VectorXd& values) const;
  /// Analytic d g / d values restricted to interior anchors (n x (n_w - 2)); rows where
  /// g is clamped are zero.
  Eigen::MatrixXd interior_jacobian(const Eigen::VectorXd& values) const;

 private:
  Eigen::VectorXd grid_;
  Eigen::MatrixXd weights_;
};

}  // namespace srcfda
