#include "srcfda/warping.hpp"

#include "srcfda/errors.hpp"

#include <algorithm>

namespace srcfda {

WarpParameters WarpParameters::identity(const Eigen::VectorXd& anchors, int K, std::size_t N) {
  WarpParameters wp;
  wp.anchors = anchors;
  const auto nw = anchors.size();
  wp.fixed.assign(static_cast<std::size_t>(K), Eigen::VectorXd::Zero(nw));
  wp.random.assign(static_cast<std::size_t>(K),
                   std::vector<Eigen::VectorXd>(N, Eigen::VectorXd::Zero(nw)));
  return wp;
}

Eigen::VectorXd WarpParameters::default_anchors() {
  Eigen::VectorXd a(4);
  a << 0.0, 0.33, 0.67, 1.0;
  return a;
}

void WarpParameters::validate() const {
  const auto nw = anchors.size();
  if (nw < 2) throw ConfigError("warp needs at least two anchors");
  auto check = [&](const Eigen::VectorXd& v) {
    if (v.size() != nw) throw ConfigError("warp anchor vector has the wrong length");
    if (v[0] != 0.0 || v[nw - 1] != 0.0)
      throw ConfigError("warp endpoint anchor values must be zero");
  };
  for (const auto& f : fixed) check(f);
  if (random.size() != fixed.size()) throw ConfigError("fixed/random warp cluster count differ");
  for (const auto& rk : random)
    for (const auto& r : rk) check(r);
}

Eigen::VectorXd eval_g(const Eigen::VectorXd& anchors, const Eigen::VectorXd& values,
                       const Eigen::VectorXd& grid) {
  AnchorSpline s(anchors, values, SplineKind::hermite);
  Eigen::VectorXd g(grid.size());
  for (Eigen::Index j = 0; j < grid.size(); ++j) g[j] = std::clamp(grid[j] + s(grid[j]), 0.0, 1.0);
  return g;
}

Eigen::VectorXd eval_g(const WarpParameters& wp, int k, std::size_t i,
                       const Eigen::VectorXd& grid) {
  return eval_g(wp.anchors, wp.combined(k, i), grid);
}

Eigen::MatrixXd warped_design(const BSplineBasis& basis, const Eigen::VectorXd& g_values) {
  return basis.design_matrix(g_values);
}

Eigen::MatrixXd warp_jacobian(const WarpParameters& wp, int k, std::size_t i,
                              const Eigen::VectorXd& grid, double h) {
  const auto nw = wp.anchor_count();
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(grid.size(), nw);
  const Eigen::VectorXd base = wp.combined(k, i);
  for (Eigen::Index l = 1; l + 1 < nw; ++l) {
    Eigen::VectorXd up = base, dn = base;
    up[l] += h;
    dn[l] -= h;
    J.col(l) = (eval_g(wp.anchors, up, grid) - eval_g(wp.anchors, dn, grid)) / (2.0 * h);
  }
  return J;
}

Eigen::MatrixXd model_jacobian(const BSplineBasis& basis, const Eigen::VectorXd& coef,
                               const WarpParameters& wp, int k, std::size_t i,
                               const Eigen::VectorXd& grid) {
  const Eigen::VectorXd g = eval_g(wp, k, i, grid);
  Eigen::VectorXd value, slope;
  basis.evaluate_with_derivative(coef, g, value, slope);
  return slope.asDiagonal() * warp_jacobian(wp, k, i, grid);
}

WarpEvaluator::WarpEvaluator(const Eigen::VectorXd& anchors, const Eigen::VectorXd& grid)
    : grid_(grid), weights_(AnchorSpline::hermite_weights(anchors, grid)) {}

Eigen::VectorXd WarpEvaluator::g(const Eigen::VectorXd& values) const {
  return (grid_ + weights_ * values).cwiseMax(0.0).cwiseMin(1.0);
}

Eigen::MatrixXd WarpEvaluator::interior_jacobian(const Eigen::VectorXd& values) const {
  const auto nw = weights_.cols();
  Eigen::MatrixXd J = weights_.middleCols(1, nw - 2);
  const Eigen::VectorXd raw = grid_ + weights_ * values;
  for (Eigen::Index j = 0; j < raw.size(); ++j)
    if (raw[j] < 0.0 || raw[j] > 1.0) J.row(j).setZero();
  return J;
}

}  // namespace srcfda
