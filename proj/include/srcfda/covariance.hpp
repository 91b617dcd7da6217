#pragma once

#include <Eigen/Dense>

#include <variant>

namespace srcfda {

/// Matérn covariance: scale * m_nu(d / range), with the sqrt(2 nu) convention
/// m_nu(h) = 2^(1-nu) / Gamma(nu) * (sqrt(2 nu) h)^nu * K_nu(sqrt(2 nu) h).
struct MaternKernel {
  double scale = 1.0;
  double range = 0.3;
  double smoothness = 3.0;

  void validate() const;
  double operator()(double distance) const;
};

enum class BrownianKind { motion, bridge };

/// scale * min(s, t) (motion) or scale * (min(s, t) - s t) (bridge).
struct BrownianKernel {
  double scale = 1.0;
  BrownianKind kind = BrownianKind::bridge;

  void validate() const;
  double operator()(double s, double t) const;
};

/// Fixed user-supplied symmetric PSD matrix over the warp anchors.
struct UnstructuredCov {
  Eigen::MatrixXd matrix;

  explicit UnstructuredCov(Eigen::MatrixXd m);
};

/// Covariance used for the random warp anchors.
using WarpCovariance = std::variant<BrownianKernel, UnstructuredCov>;

double matern_eval(const MaternKernel& k, double d);
double brownian_eval(const BrownianKernel& k, double s, double t);

/// Gram matrices (no jitter). The Matérn version exploits Toeplitz structure on
/// evenly spaced grids.
Eigen::MatrixXd gram(const MaternKernel& k, const Eigen::VectorXd& times);
Eigen::MatrixXd gram(const BrownianKernel& k, const Eigen::VectorXd& times);
Eigen::MatrixXd gram(const WarpCovariance& k, const Eigen::VectorXd& anchors);

/// Factorized symmetric positive definite matrix (Gram + jitter I).
class SpdMatrix {
 public:
  SpdMatrix() = default;
  /// Factorizes `gram` + jitter I; the jitter is escalated tenfold up to
  /// `max_jitter` until the Cholesky factorization succeeds.
  SpdMatrix(Eigen::MatrixXd gram, double jitter, double max_jitter);

  const Eigen::MatrixXd& matrix() const { return matrix_; }
  const Eigen::LLT<Eigen::MatrixXd>& llt() const { return llt_; }
  double jitter() const { return jitter_; }
  Eigen::Index size() const { return matrix_.rows(); }
  double log_det() const { return log_det_; }

  /// L^{-1} x for the lower Cholesky factor.
  Eigen::VectorXd whiten(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd whiten(const Eigen::MatrixXd& x) const;
  /// x' A^{-1} x.
  double quad(const Eigen::VectorXd& x) const { return whiten(x).squaredNorm(); }
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const { return llt_.solve(b); }
  /// Lower Cholesky factor L with A = L L'.
  Eigen::MatrixXd lower() const { return llt_.matrixL(); }

 private:
  Eigen::MatrixXd matrix_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double jitter_ = 0.0;
  double log_det_ = 0.0;
};

/// Gram matrix on `times` plus jitter, factorized. Default jitter is 1e-8 * scale,
/// escalated at most to 1e-6 * scale.
SpdMatrix build_cov(const MaternKernel& k, const Eigen::VectorXd& times, double jitter = -1.0);
SpdMatrix build_cov(const BrownianKernel& k, const Eigen::VectorXd& times, double jitter = -1.0);

}  // namespace srcfda
