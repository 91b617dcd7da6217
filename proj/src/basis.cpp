#include "srcfda/basis.hpp"

#include "srcfda/errors.hpp"

#include <algorithm>
#include <string>
#include <array>
#include <cmath>

namespace srcfda {

namespace {
constexpr int kMaxDegree = 10;
}

BSplineBasis::BSplineBasis(int degree, std::vector<double> interior_knots)
    : degree_(degree), interior_(std::move(interior_knots)) {
  if (degree_ < 0 || degree_ > kMaxDegree)
    throw ConfigError("B-spline degree must be in 0.." + std::to_string(kMaxDegree));
  for (std::size_t i = 0; i < interior_.size(); ++i) {
    if (!(interior_[i] > 0.0 && interior_[i] < 1.0))
      throw ConfigError("interior knots must lie in (0,1)");
    if (i > 0 && !(interior_[i] > interior_[i - 1]))
      throw ConfigError("interior knots must be strictly increasing");
  }
  knots_.assign(static_cast<std::size_t>(degree_ + 1), 0.0);
  knots_.insert(knots_.end(), interior_.begin(), interior_.end());
  knots_.insert(knots_.end(), static_cast<std::size_t>(degree_ + 1), 1.0);
  if (static_cast<int>(knots_.size()) < 2 * (degree_ + 1))
    throw ConfigError("too few knots for the requested degree");
}

BSplineBasis BSplineBasis::equispaced(int count, int degree) {
  if (count < 0) throw ConfigError("negative knot count");
  std::vector<double> k;
  for (int i = 1; i <= count; ++i) k.push_back(static_cast<double>(i) / (count + 1));
  return BSplineBasis(degree, std::move(k));
}

Eigen::Index BSplineBasis::span(double t) const {
  const auto q = size();
  if (t >= 1.0) return q - 1;
  // Last index s with knots_[s] <= t, restricted to [degree, q - 1].
  auto it = std::upper_bound(knots_.begin() + degree_, knots_.begin() + q, t);
  return static_cast<Eigen::Index>(it - knots_.begin()) - 1;
}

void BSplineBasis::nonzero(double t, Eigen::Index s, double* N) const {
  std::array<double, kMaxDegree + 1> left{}, right{};
  N[0] = 1.0;
  for (int j = 1; j <= degree_; ++j) {
    left[j] = t - knots_[static_cast<std::size_t>(s + 1 - j)];
    right[j] = knots_[static_cast<std::size_t>(s + j)] - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double tmp = N[r] / (right[r + 1] + left[j - r]);
      N[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    N[j] = saved;
  }
}

void BSplineBasis::nonzero_derivative(double t, Eigen::Index s, double* D) const {
  const int p = degree_;
  if (p == 0) {
    D[0] = 0.0;
    return;
  }
  // Degree p-1 values on the same span, then N'_{i,p} from the standard recurrence.
  std::array<double, kMaxDegree + 1> lower{};
  {
    std::array<double, kMaxDegree + 1> left{}, right{};
    lower[0] = 1.0;
    for (int j = 1; j <= p - 1; ++j) {
      left[j] = t - knots_[static_cast<std::size_t>(s + 1 - j)];
      right[j] = knots_[static_cast<std::size_t>(s + j)] - t;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        const double tmp = lower[r] / (right[r + 1] + left[j - r]);
        lower[r] = saved + right[r + 1] * tmp;
        saved = left[j - r] * tmp;
      }
      lower[j] = saved;
    }
  }
  // lower[r] is N_{s-p+1+r, p-1}; basis index i = s - p + r for r = 0..p.
  for (int r = 0; r <= p; ++r) {
    const auto i = static_cast<std::size_t>(s - p + r);
    double v = 0.0;
    if (r >= 1) {
      const double den = knots_[i + static_cast<std::size_t>(p)] - knots_[i];
      if (den > 0.0) v += p * lower[r - 1] / den;
    }
    if (r <= p - 1) {
      const double den = knots_[i + static_cast<std::size_t>(p) + 1] - knots_[i + 1];
      if (den > 0.0) v -= p * lower[r] / den;
    }
    D[r] = v;
  }
}

Eigen::VectorXd BSplineBasis::row(double t) const {
  t = std::clamp(t, 0.0, 1.0);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
  const auto s = span(t);
  std::array<double, kMaxDegree + 1> N{};
  nonzero(t, s, N.data());
  for (int r = 0; r <= degree_; ++r) out[s - degree_ + r] = N[static_cast<std::size_t>(r)];
  return out;
}

Eigen::VectorXd BSplineBasis::derivative_row(double t) const {
  t = std::clamp(t, 0.0, 1.0);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(size());
  const auto s = span(t);
  std::array<double, kMaxDegree + 1> D{};
  nonzero_derivative(t, s, D.data());
  for (int r = 0; r <= degree_; ++r) out[s - degree_ + r] = D[static_cast<std::size_t>(r)];
  return out;
}

Eigen::MatrixXd BSplineBasis::design_matrix(const Eigen::VectorXd& times) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(times.size(), size());
  std::array<double, kMaxDegree + 1> N{};
  for (Eigen::Index j = 0; j < times.size(); ++j) {
    const double t = std::clamp(times[j], 0.0, 1.0);
    const auto s = span(t);
    nonzero(t, s, N.data());
    for (int r = 0; r <= degree_; ++r) out(j, s - degree_ + r) = N[static_cast<std::size_t>(r)];
  }
  return out;
}

Eigen::MatrixXd BSplineBasis::derivative_matrix(const Eigen::VectorXd& times) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(times.size(), size());
  std::array<double, kMaxDegree + 1> D{};
  for (Eigen::Index j = 0; j < times.size(); ++j) {
    const double t = std::clamp(times[j], 0.0, 1.0);
    const auto s = span(t);
    nonzero_derivative(t, s, D.data());
    for (int r = 0; r <= degree_; ++r) out(j, s - degree_ + r) = D[static_cast<std::size_t>(r)];
  }
  return out;
}

Eigen::VectorXd BSplineBasis::evaluate(const Eigen::VectorXd& coef,
                                       const Eigen::VectorXd& times) const {
  if (coef.size() != size()) throw ConfigError("coefficient length does not match basis size");
  Eigen::VectorXd out(times.size());
  std::array<double, kMaxDegree + 1> N{};
  for (Eigen::Index j = 0; j < times.size(); ++j) {
    const double t = std::clamp(times[j], 0.0, 1.0);
    const auto s = span(t);
    nonzero(t, s, N.data());
    double v = 0.0;
    for (int r = 0; r <= degree_; ++r) v += N[static_cast<std::size_t>(r)] * coef[s - degree_ + r];
    out[j] = v;
  }
  return out;
}

void BSplineBasis::evaluate_with_derivative(const Eigen::VectorXd& coef,
                                            const Eigen::VectorXd& times, Eigen::VectorXd& value,
                                            Eigen::VectorXd& slope) const {
  if (coef.size() != size()) throw ConfigError("coefficient length does not match basis size");
  value.resize(times.size());
  slope.resize(times.size());
  std::array<double, kMaxDegree + 1> N{}, D{};
  for (Eigen::Index j = 0; j < times.size(); ++j) {
    const double t = std::clamp(times[j], 0.0, 1.0);
    const auto s = span(t);
    nonzero(t, s, N.data());
    nonzero_derivative(t, s, D.data());
    double v = 0.0, dv = 0.0;
    for (int r = 0; r <= degree_; ++r) {
      const double c = coef[s - degree_ + r];
      v += N[static_cast<std::size_t>(r)] * c;
      dv += D[static_cast<std::size_t>(r)] * c;
    }
    value[j] = v;
    slope[j] = dv;
  }
}

Eigen::MatrixXd design_matrix(const BSplineBasis& basis, const Eigen::VectorXd& times) {
  return basis.design_matrix(times);
}

// ---------------------------------------------------------------------------
// AnchorSpline

namespace {

Eigen::VectorXd fd_tangents(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  const auto n = x.size();
  Eigen::VectorXd m(n);
  if (n == 1) {
    m[0] = 0.0;
    return m;
  }
  m[0] = (y[1] - y[0]) / (x[1] - x[0]);
  m[n - 1] = (y[n - 1] - y[n - 2]) / (x[n - 1] - x[n - 2]);
  for (Eigen::Index i = 1; i + 1 < n; ++i) m[i] = (y[i + 1] - y[i - 1]) / (x[i + 1] - x[i - 1]);
  return m;
}

// Hyman (1983) filter: clamp tangents to 3x the adjacent secant slopes.
void hyman_filter(const Eigen::VectorXd& x, const Eigen::VectorXd& y, Eigen::VectorXd& m) {
  const auto n = x.size();
  if (n < 2) return;
  Eigen::VectorXd sec(n - 1);
  for (Eigen::Index i = 0; i + 1 < n; ++i) sec[i] = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
  for (Eigen::Index i = 0; i < n; ++i) {
    double lo_bound;
    double sgn;
    if (i == 0) {
      sgn = (sec[0] > 0) - (sec[0] < 0);
      lo_bound = std::abs(sec[0]);
    } else if (i == n - 1) {
      sgn = (sec[n - 2] > 0) - (sec[n - 2] < 0);
      lo_bound = std::abs(sec[n - 2]);
    } else {
      if (sec[i - 1] * sec[i] <= 0.0) {
        m[i] = 0.0;
        continue;
      }
      sgn = (sec[i] > 0) - (sec[i] < 0);
      lo_bound = std::min(std::abs(sec[i - 1]), std::abs(sec[i]));
    }
    m[i] = sgn * std::min(std::max(0.0, sgn * m[i]), 3.0 * lo_bound);
  }
}

inline double hermite_eval(const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& m, double t) {
  const auto n = x.size();
  if (n == 1) return y[0];
  if (t <= x[0]) return y[0];
  if (t >= x[n - 1]) return y[n - 1];
  auto it = std::upper_bound(x.data(), x.data() + n, t);
  const Eigen::Index k = std::clamp<Eigen::Index>((it - x.data()) - 1, 0, n - 2);
  const double h = x[k + 1] - x[k];
  const double s = (t - x[k]) / h;
  const double s2 = s * s, s3 = s2 * s;
  const double h00 = 2 * s3 - 3 * s2 + 1;
  const double h10 = s3 - 2 * s2 + s;
  const double h01 = -2 * s3 + 3 * s2;
  const double h11 = s3 - s2;
  return h00 * y[k] + h10 * h * m[k] + h01 * y[k + 1] + h11 * h * m[k + 1];
}

}  // namespace

AnchorSpline::AnchorSpline(Eigen::VectorXd anchors, Eigen::VectorXd values, SplineKind kind)
    : anchors_(std::move(anchors)), values_(std::move(values)), kind_(kind) {
  if (anchors_.size() != values_.size())
    throw ConfigError("anchor and value vectors differ in length");
  if (anchors_.size() < 2) throw ConfigError("anchor spline needs at least 2 anchors");
  for (Eigen::Index i = 1; i < anchors_.size(); ++i)
    if (!(anchors_[i] > anchors_[i - 1])) throw ConfigError("anchors must be strictly increasing");
  if (kind_ == SplineKind::hermite) {
    nodes_ = values_;
    tangents_ = fd_tangents(anchors_, nodes_);
  } else {
    nodes_ = anchors_ + values_;
    // No interpolant through decreasing nodes can be monotone.
    for (Eigen::Index i = 1; i < nodes_.size(); ++i)
      if (nodes_[i] < nodes_[i - 1])
        throw ConfigError("monotone warp impossible: t + value decreases between anchors " +
                          std::to_string(i - 1) + " and " + std::to_string(i));
    tangents_ = fd_tangents(anchors_, nodes_);
    hyman_filter(anchors_, nodes_, tangents_);
  }
}

double AnchorSpline::operator()(double t) const {
  const double v = hermite_eval(anchors_, nodes_, tangents_, t);
  if (kind_ == SplineKind::hermite) return v;
  // Outside the anchor range the composite is held constant; report the offset there.
  const double tc = std::clamp(t, anchors_[0], anchors_[anchors_.size() - 1]);
  return v - tc;
}

Eigen::VectorXd AnchorSpline::evaluate(const Eigen::VectorXd& times) const {
  Eigen::VectorXd out(times.size());
  for (Eigen::Index j = 0; j < times.size(); ++j) out[j] = (*this)(times[j]);
  return out;
}

Eigen::MatrixXd AnchorSpline::hermite_weights(const Eigen::VectorXd& anchors,
                                              const Eigen::VectorXd& times) {
  const auto nw = anchors.size();
  Eigen::MatrixXd W(times.size(), nw);
  for (Eigen::Index l = 0; l < nw; ++l) {
    AnchorSpline e(anchors, Eigen::VectorXd::Unit(nw, l), SplineKind::hermite);
    W.col(l) = e.evaluate(times);
  }
  return W;
}

Eigen::VectorXd eval_spline(const AnchorSpline& s, const Eigen::VectorXd& times) {
  return s.evaluate(times);
}

}  // namespace srcfda
