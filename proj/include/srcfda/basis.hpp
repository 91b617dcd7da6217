#pragma once

#include <Eigen/Dense>

#include <vector>

namespace srcfda {

/// Clamped B-spline basis on [0, 1].
///
/// The knot vector repeats 0 and 1 (degree + 1) times around the interior knots, so the
/// q = interior + degree + 1 basis functions form a partition of unity on [0, 1]. Arguments
/// outside [0, 1] are clamped to the boundary.
class BSplineBasis {
 public:
  BSplineBasis(int degree, std::vector<double> interior_knots);

  /// `count` equally spaced interior knots.
  static BSplineBasis equispaced(int count, int degree = 3);

  int degree() const { return degree_; }
  const std::vector<double>& interior_knots() const { return interior_; }
  Eigen::Index size() const { return static_cast<Eigen::Index>(interior_.size()) + degree_ + 1; }

  /// Values of all q basis functions at t.
  Eigen::VectorXd row(double t) const;
  /// First derivatives of all q basis functions at t.
  Eigen::VectorXd derivative_row(double t) const;

  /// n x q matrix; row j holds the basis evaluated at times[j].
  Eigen::MatrixXd design_matrix(const Eigen::VectorXd& times) const;
  Eigen::MatrixXd derivative_matrix(const Eigen::VectorXd& times) const;

  /// Spline value sum_l coef[l] psi_l(t) at each time.
  Eigen::VectorXd evaluate(const Eigen::VectorXd& coef, const Eigen::VectorXd& times) const;
  /// Spline value and first derivative at each time, written to `value` and `slope`.
  void evaluate_with_derivative(const Eigen::VectorXd& coef, const Eigen::VectorXd& times,
                                Eigen::VectorXd& value, Eigen::VectorXd& slope) const;

 private:
  // Index of the knot span containing t and the nonzero basis values there.
  Eigen::Index span(double t) const;
  void nonzero(double t, Eigen::Index s, double* out) const;
  void nonzero_derivative(double t, Eigen::Index s, double* out) const;

  int degree_;
  std::vector<double> interior_;
  std::vector<double> knots_;
};

enum class SplineKind { hermite, hyman_monotone };

/// Cubic interpolant through (anchor, value) pairs.
///
/// `hermite` uses three-point finite-difference tangents (one-sided at the ends) and is
/// linear in the values. `hyman_monotone` interprets the values as a warp offset s and
/// filters the tangents of t + s(t) so that the composite is non-decreasing.
class AnchorSpline {
 public:
  AnchorSpline(Eigen::VectorXd anchors, Eigen::VectorXd values,
               SplineKind kind = SplineKind::hermite);

  const Eigen::VectorXd& anchors() const { return anchors_; }
  const Eigen::VectorXd& values() const { return values_; }
  SplineKind kind() const { return kind_; }

  double operator()(double t) const;
  Eigen::VectorXd evaluate(const Eigen::VectorXd& times) const;

  /// Hermite interpolation weights: n x n_w matrix W with s(times) = W * values.
  static Eigen::MatrixXd hermite_weights(const Eigen::VectorXd& anchors,
                                         const Eigen::VectorXd& times);

 private:
  Eigen::VectorXd anchors_;
  Eigen::VectorXd values_;
  SplineKind kind_;
  Eigen::VectorXd nodes_;     // interpolated ordinates (values, or t + values for hyman)
  Eigen::VectorXd tangents_;
};

Eigen::MatrixXd design_matrix(const BSplineBasis& basis, const Eigen::VectorXd& times);
Eigen::VectorXd eval_spline(const AnchorSpline& s, const Eigen::VectorXd& times);

}  // namespace srcfda
