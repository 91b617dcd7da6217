#include "srcfda/covariance.hpp"

#include "srcfda/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace srcfda {

void MaternKernel::validate() const {
  if (!(scale > 0.0) || !(range > 0.0) || !(smoothness > 0.0))
    throw ConfigError("Matérn parameters must be positive");
}

double MaternKernel::operator()(double distance) const {
  const double h = std::abs(distance) / range;
  if (h == 0.0) return scale;
  const double nu = smoothness;
  const double x = std::sqrt(2.0 * nu) * h;
  if (x > 700.0) return 0.0;
  const double log_pre = (1.0 - nu) * std::log(2.0) - std::lgamma(nu) + nu * std::log(x);
  const double k = std::cyl_bessel_k(nu, x);
  if (k == 0.0) return 0.0;
  return scale * std::exp(log_pre + std::log(k));
}

void BrownianKernel::validate() const {
  if (!(scale > 0.0)) throw ConfigError("Brownian scale must be positive");
}

double BrownianKernel::operator()(double s, double t) const {
  const double m = std::min(s, t);
  return kind == BrownianKind::motion ? scale * m : scale * (m - s * t);
}

UnstructuredCov::UnstructuredCov(Eigen::MatrixXd m) : matrix(std::move(m)) {
  if (matrix.rows() != matrix.cols()) throw ConfigError("unstructured covariance must be square");
  if (!matrix.isApprox(matrix.transpose(), 1e-12))
    throw ConfigError("unstructured covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(matrix, Eigen::EigenvaluesOnly);
  const double tr = std::max(matrix.trace(), 0.0);
  if (es.eigenvalues().minCoeff() < -1e-10 * tr)
    throw ConfigError("unstructured covariance is not positive semi-definite");
}

double matern_eval(const MaternKernel& k, double d) { return k(d); }

double brownian_eval(const BrownianKernel& k, double s, double t) { return k(s, t); }

namespace {

bool evenly_spaced(const Eigen::VectorXd& t) {
  if (t.size() < 3) return true;
  const double h = (t[t.size() - 1] - t[0]) / static_cast<double>(t.size() - 1);
  for (Eigen::Index j = 1; j < t.size(); ++j)
    if (std::abs((t[j] - t[j - 1]) - h) > 1e-12 * std::max(1.0, std::abs(h))) return false;
  return true;
}

}  // namespace

Eigen::MatrixXd gram(const MaternKernel& k, const Eigen::VectorXd& times) {
  k.validate();
  const auto n = times.size();
  Eigen::MatrixXd G(n, n);
  if (n > 0 && evenly_spaced(times)) {
    const double h = n > 1 ? (times[n - 1] - times[0]) / static_cast<double>(n - 1) : 0.0;
    Eigen::VectorXd lag(n);
    for (Eigen::Index l = 0; l < n; ++l) lag[l] = k(h * static_cast<double>(l));
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) G(i, j) = lag[std::abs(i - j)];
    return G;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    G(i, i) = k.scale;
    for (Eigen::Index j = 0; j < i; ++j) G(i, j) = G(j, i) = k(times[i] - times[j]);
  }
  return G;
}

Eigen::MatrixXd gram(const BrownianKernel& k, const Eigen::VectorXd& times) {
  k.validate();
  const auto n = times.size();
  Eigen::MatrixXd G(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) G(i, j) = G(j, i) = k(times[i], times[j]);
  return G;
}

Eigen::MatrixXd gram(const WarpCovariance& k, const Eigen::VectorXd& anchors) {
  if (const auto* b = std::get_if<BrownianKernel>(&k)) return gram(*b, anchors);
  const auto& u = std::get<UnstructuredCov>(k);
  if (u.matrix.rows() != anchors.size())
    throw ConfigError("unstructured covariance size does not match the warp anchors");
  return u.matrix;
}

SpdMatrix::SpdMatrix(Eigen::MatrixXd gram, double jitter, double max_jitter)
    : matrix_(std::move(gram)) {
  const auto n = matrix_.rows();
  double j = std::max(jitter, 0.0);
  while (true) {
    Eigen::MatrixXd a = matrix_;
    a.diagonal().array() += j;
    llt_.compute(a);
    if (llt_.info() == Eigen::Success && (llt_.matrixLLT().diagonal().array() > 0.0).all()) {
      matrix_ = std::move(a);
      jitter_ = j;
      break;
    }
    const double next = j > 0.0 ? 10.0 * j : std::max(max_jitter * 1e-4, 1e-300);
    if (next > max_jitter * (1.0 + 1e-12)) {
      std::ostringstream msg;
      msg << "Cholesky factorization failed for " << n << "x" << n
          << " covariance (jitter reached " << j << ", diagonal range ["
          << (n ? matrix_.diagonal().minCoeff() : 0.0) << ", "
          << (n ? matrix_.diagonal().maxCoeff() : 0.0) << "])";
      throw NumericalError(msg.str());
    }
    j = next;
  }
  log_det_ = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
}

Eigen::VectorXd SpdMatrix::whiten(const Eigen::VectorXd& x) const {
  return llt_.matrixL().solve(x);
}

Eigen::MatrixXd SpdMatrix::whiten(const Eigen::MatrixXd& x) const {
  return llt_.matrixL().solve(x);
}

SpdMatrix build_cov(const MaternKernel& k, const Eigen::VectorXd& times, double jitter) {
  const double j = jitter < 0.0 ? 1e-8 * k.scale : jitter;
  return SpdMatrix(gram(k, times), j, std::max(j, 1e-6 * k.scale));
}

SpdMatrix build_cov(const BrownianKernel& k, const Eigen::VectorXd& times, double jitter) {
  const double j = jitter < 0.0 ? 1e-8 * k.scale : jitter;
  return SpdMatrix(gram(k, times), j, std::max(j, 1e-6 * k.scale));
}

}  // namespace srcfda
