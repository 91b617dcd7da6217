#include "srcfda/emfit.hpp"

#include "srcfda/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace srcfda {

namespace {

constexpr double kDropWeight = 1e-12;
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

Eigen::VectorXd embed(const Eigen::VectorXd& interior) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(interior.size() + 2);
  v.segment(1, interior.size()) = interior;
  return v;
}

Eigen::VectorXd interior_of(const Eigen::VectorXd& v) { return v.segment(1, v.size() - 2); }

Eigen::MatrixXd interior_h(const WarpCovariance& rho_h, const Eigen::VectorXd& anchors) {
  const Eigen::MatrixXd H = gram(rho_h, anchors);
  const auto m = anchors.size() - 2;
  return H.block(1, 1, m, m);
}

}  // namespace

void EmConfig::validate() const {
  if (K < 1) throw ConfigError("K must be >= 1");
  if (max_outer_iter < 1 || inner_repeats < 1 || n_starts < 1)
    throw ConfigError("iteration counts must be positive");
  if (!(tol_rel_loglik > 0.0)) throw ConfigError("tol_rel_loglik must be positive");
  if (!(eta >= 0.0)) throw ConfigError("eta must be >= 0");
  if (knots < 0 || degree < 1) throw ConfigError("invalid spline basis settings");
  if (warp_iterations < 1 || warp_sweeps < 1 || max_warp_evals < 1 || max_variance_evals < 1)
    throw ConfigError("optimizer budgets must be positive");
  if (warp_anchors.size() < 2) throw ConfigError("warp needs at least two anchors");
  for (Eigen::Index j = 1; j < warp_anchors.size(); ++j)
    if (!(warp_anchors[j] > warp_anchors[j - 1]))
      throw ConfigError("warp anchors must be strictly increasing");
  if (!(warp_bound > 0.0)) throw ConfigError("warp_bound must be positive");
  if (!(sigma2_min > 0.0 && sigma2_max > sigma2_min)) throw ConfigError("invalid sigma2 bounds");
  if (!(kernel_min > 0.0 && kernel_max > kernel_min)) throw ConfigError("invalid kernel bounds");
  if (!(beta_bound > 0.0) || irls_max_iter < 1) throw ConfigError("invalid allocation settings");
  if (!(ascent_slack >= 0.0)) throw ConfigError("ascent_slack must be >= 0");
  if (amplitude_effect) rho_s_init.validate();
  rho_h_init.validate();
  if (unstructured_h) {
    if (unstructured_h->rows() != warp_anchors.size())
      throw ConfigError("unstructured H must be n_w x n_w");
    UnstructuredCov check(*unstructured_h);
  }
}

// ---------------------------------------------------------------- initialization

Responsibilities init_responsibilities(std::size_t N, int K, std::mt19937_64& rng) {
  if (N < 1 || K < 1) throw ConfigError("init_responsibilities needs N, K >= 1");
  std::uniform_real_distribution<double> U(0.0, 1.0);
  Responsibilities r;
  r.M.resize(static_cast<Eigen::Index>(N), K);
  for (Eigen::Index i = 0; i < r.M.rows(); ++i) {
    for (Eigen::Index k = 0; k < K; ++k) r.M(i, k) = U(rng);
    const double s = r.M.row(i).sum();
    if (s > 0.0)
      r.M.row(i) /= s;
    else
      r.M.row(i).setConstant(1.0 / K);
  }
  return r;
}

Responsibilities init_responsibilities(std::size_t N, int K, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return init_responsibilities(N, K, rng);
}

// ---------------------------------------------------------------- (i) spline weights

Eigen::MatrixXd estimate_spline_weights(const FunctionalDataset& data,
                                        const Eigen::VectorXd& weights,
                                        const std::vector<Eigen::VectorXd>& warped_times,
                                        const BSplineBasis& basis,
                                        const AmplitudeCovariances& amplitude, double eta) {
  if (eta < 0.0) throw ConfigError("eta must be >= 0");
  if (weights.size() != static_cast<Eigen::Index>(data.size()) ||
      warped_times.size() != data.size())
    throw ConfigError("weights and warped times must have one entry per curve");
  const auto q = basis.size();
  const auto A = data.dimension();
  Eigen::MatrixXd XtX = eta * Eigen::MatrixXd::Identity(q, q);
  Eigen::MatrixXd Xty = Eigen::MatrixXd::Zero(q, A);
  bool any = false;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double w = weights[static_cast<Eigen::Index>(i)];
    if (w < kDropWeight) continue;
    any = true;
    const SpdMatrix& amp = amplitude.of_curve(i);
    const Eigen::MatrixXd Pw = amp.whiten(basis.design_matrix(warped_times[i]));
    const Eigen::MatrixXd Xw = amp.whiten(Eigen::MatrixXd(data.curve(i).values().transpose()));
    XtX.noalias() += w * Pw.transpose() * Pw;
    Xty.noalias() += w * Pw.transpose() * Xw;
  }
  if (!any) throw DegenerateClusterError("cluster has no curve with positive weight");
  Eigen::LDLT<Eigen::MatrixXd> ldlt(XtX);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-14)
    throw NumericalError("singular normal matrix for the spline weights; use eta > 0");
  return ldlt.solve(Xty).transpose();
}

double spline_weight_objective(const FunctionalDataset& data, const Eigen::VectorXd& weights,
                               const std::vector<Eigen::VectorXd>& warped_times,
                               const BSplineBasis& basis, const AmplitudeCovariances& amplitude,
                               double eta, const Eigen::MatrixXd& coef) {
  double total = eta * coef.squaredNorm();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double w = weights[static_cast<Eigen::Index>(i)];
    if (w < kDropWeight) continue;
    const Eigen::MatrixXd fitted = basis.design_matrix(warped_times[i]) * coef.transpose();
    const Eigen::MatrixXd resid = data.curve(i).values().transpose() - fitted;
    total += w * amplitude.of_curve(i).whiten(resid).squaredNorm();
  }
  return total;
}

// ---------------------------------------------------------------- (ii) warps

namespace {

struct CurveTerm {
  std::size_t index = 0;
  double weight = 0.0;
  const SpdMatrix* amp = nullptr;
  const WarpEvaluator* eval = nullptr;
  Eigen::MatrixXd xw;  // n x A whitened observations
};

class WarpWork {
 public:
  WarpWork(const WarpProblem& p, double penalty) : p_(p) {
    if (!p.data || !p.weights || !p.coef || !p.basis || !p.amplitude)
      throw ConfigError("incomplete warp problem");
    const auto nw = p.anchors.size();
    if (nw < 3) throw ConfigError("warps need at least one interior anchor");
    m_ = nw - 2;
    const Eigen::MatrixXd Hint = p.warp_cov.block(1, 1, m_, m_);
    Eigen::LLT<Eigen::MatrixXd> llt(Hint);
    if (llt.info() != Eigen::Success) throw NumericalError("warp covariance is not positive definite");
    P_ = penalty * llt.solve(Eigen::MatrixXd::Identity(m_, m_));
    const auto& amp = *p.amplitude;
    evals_.reserve(amp.grid_count());
    for (std::size_t g = 0; g < amp.grid_count(); ++g) evals_.emplace_back(p.anchors, amp.grid(g));
    terms_.resize(p.data->size());
    for (std::size_t i = 0; i < p.data->size(); ++i) {
      auto& t = terms_[i];
      t.index = i;
      t.weight = (*p.weights)[static_cast<Eigen::Index>(i)];
      t.amp = &amp.of_curve(i);
      t.eval = &evals_[amp.grid_of(i)];
      t.xw = t.amp->whiten(Eigen::MatrixXd(p.data->curve(i).values().transpose()));
    }
  }

  Eigen::Index interior() const { return m_; }
  const std::vector<CurveTerm>& terms() const { return terms_; }

  double misfit(const CurveTerm& t, const Eigen::VectorXd& v) const {
    const Eigen::VectorXd g = t.eval->g(v);
    const Eigen::MatrixXd T = p_.basis->design_matrix(g) * p_.coef->transpose();
    return (t.xw - t.amp->whiten(T)).squaredNorm();
  }

  double prior(const Eigen::VectorXd& u) const { return u.dot(P_ * u); }

  // Whitened residual (stacked by coordinate) and its Jacobian in the interior values.
  void linearize(const CurveTerm& t, const Eigen::VectorXd& v, Eigen::VectorXd& r,
                 Eigen::MatrixXd& J) const {
    const Eigen::VectorXd g = t.eval->g(v);
    const Eigen::MatrixXd T = p_.basis->design_matrix(g) * p_.coef->transpose();
    const Eigen::MatrixXd D = p_.basis->derivative_matrix(g) * p_.coef->transpose();
    const Eigen::MatrixXd Jg = t.eval->interior_jacobian(v);
    const auto n = g.size();
    const auto A = T.cols();
    Eigen::MatrixXd raw(n, A * (1 + m_));
    raw.leftCols(A) = T;
    for (Eigen::Index a = 0; a < A; ++a)
      raw.middleCols(A + a * m_, m_) = D.col(a).asDiagonal() * Jg;
    const Eigen::MatrixXd w = t.amp->whiten(raw);
    r.resize(n * A);
    J.resize(n * A, m_);
    for (Eigen::Index a = 0; a < A; ++a) {
      r.segment(a * n, n) = t.xw.col(a) - w.col(a);
      J.middleRows(a * n, n) = w.middleCols(A + a * m_, m_);
    }
  }

  const Eigen::MatrixXd& precision() const { return P_; }

 private:
  const WarpProblem& p_;
  Eigen::Index m_ = 0;
  Eigen::MatrixXd P_;
  std::vector<WarpEvaluator> evals_;
  std::vector<CurveTerm> terms_;
};

Eigen::VectorXd clamp_box(const Eigen::VectorXd& u, double bound) {
  return u.cwiseMax(-bound).cwiseMin(bound);
}

// Damped Gauss-Newton on a sum of squares plus a quadratic penalty; `eval` returns the
// objective, `lin` the gradient pieces (JtJ, Jtr) at a point. Steps are projected onto the
// box and halved until the objective decreases.
template <class Eval, class Lin>
Eigen::VectorXd gauss_newton(Eigen::VectorXd u, double& fu, double bound, int iterations,
                             const Eigen::MatrixXd& P, Eval&& eval, Lin&& lin) {
  const auto m = u.size();
  for (int it = 0; it < iterations; ++it) {
    Eigen::MatrixXd JtJ = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd Jtr = Eigen::VectorXd::Zero(m);
    lin(u, JtJ, Jtr);
    const Eigen::MatrixXd Hs = JtJ + P;
    const Eigen::VectorXd b = Jtr - P * u;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(Hs + 1e-12 * Eigen::MatrixXd::Identity(m, m));
    if (ldlt.info() != Eigen::Success) break;
    const Eigen::VectorXd delta = ldlt.solve(b);
    if (!delta.allFinite()) break;
    double step = 1.0;
    bool accepted = false;
    Eigen::VectorXd moved;
    for (int ls = 0; ls < 10; ++ls, step *= 0.5) {
      Eigen::VectorXd trial = clamp_box(u + step * delta, bound);
      const double ft = eval(trial);
      if (ft < fu) {
        moved = trial - u;
        u = std::move(trial);
        fu = ft;
        accepted = true;
        break;
      }
    }
    if (!accepted || moved.lpNorm<Eigen::Infinity>() < 1e-9) break;
  }
  return u;
}

}  // namespace

double warp_objective(const WarpProblem& problem, const Eigen::VectorXd& fixed,
                      const std::vector<Eigen::VectorXd>& random, double penalty) {
  if (penalty < 0.0) penalty = static_cast<double>(problem.data->dimension());
  WarpWork work(problem, penalty);
  double total = 0.0;
  for (const auto& t : work.terms()) {
    if (t.weight < kDropWeight) continue;
    total += t.weight * (work.misfit(t, fixed + random[t.index]) +
                         work.prior(interior_of(random[t.index])));
  }
  return total;
}

WarpEstimate estimate_warps(const WarpProblem& problem, const Eigen::VectorXd& fixed0,
                            const std::vector<Eigen::VectorXd>& random0,
                            const WarpOptions& options) {
  const double penalty =
      options.penalty < 0.0 ? static_cast<double>(problem.data->dimension()) : options.penalty;
  WarpWork work(problem, penalty);
  const auto m = work.interior();
  const auto N = problem.data->size();
  if (random0.size() != N) throw ConfigError("one random warp per curve expected");

  Eigen::VectorXd uf = clamp_box(interior_of(fixed0), options.bound);
  std::vector<Eigen::VectorXd> ur(N);
  for (std::size_t i = 0; i < N; ++i) ur[i] = clamp_box(interior_of(random0[i]), options.bound);

  // Per-curve objective (unweighted): misfit + prior.
  auto curve_obj = [&](const CurveTerm& t, const Eigen::VectorXd& f, const Eigen::VectorXd& r) {
    return work.misfit(t, embed(f + r)) + work.prior(r);
  };
  auto total = [&](const Eigen::VectorXd& f, const std::vector<Eigen::VectorXd>& r) {
    double s = 0.0;
    for (const auto& t : work.terms())
      if (t.weight >= kDropWeight) s += t.weight * curve_obj(t, f, r[t.index]);
    return s;
  };

  WarpEstimate out;
  // Objective at entry uses the unprojected start so the descent contract is exact.
  out.objective_start = total(interior_of(fixed0), [&] {
    std::vector<Eigen::VectorXd> r(N);
    for (std::size_t i = 0; i < N; ++i) r[i] = interior_of(random0[i]);
    return r;
  }());

  const Eigen::MatrixXd Zero = Eigen::MatrixXd::Zero(m, m);
  NelderMeadOptions nm;
  nm.max_evals = options.max_evals;
  nm.initial_step = 0.25 * options.bound;
  const Eigen::VectorXd lo = Eigen::VectorXd::Constant(m, -options.bound);
  const Eigen::VectorXd hi = Eigen::VectorXd::Constant(m, options.bound);

  for (int sweep = 0; sweep < options.sweeps; ++sweep) {
    if (options.estimate_fixed) {
      auto eval = [&](const Eigen::VectorXd& f) {
        double s = 0.0;
        for (const auto& t : work.terms())
          if (t.weight >= kDropWeight) s += t.weight * work.misfit(t, embed(f + ur[t.index]));
        return s;
      };
      double fu = eval(uf);
      if (options.optimizer == WarpOptimizer::gauss_newton) {
        auto lin = [&](const Eigen::VectorXd& f, Eigen::MatrixXd& JtJ, Eigen::VectorXd& Jtr) {
          Eigen::VectorXd r;
          Eigen::MatrixXd J;
          for (const auto& t : work.terms()) {
            if (t.weight < kDropWeight) continue;
            work.linearize(t, embed(f + ur[t.index]), r, J);
            JtJ.noalias() += t.weight * J.transpose() * J;
            Jtr.noalias() += t.weight * J.transpose() * r;
          }
        };
        uf = gauss_newton(uf, fu, options.bound, options.iterations, Zero, eval, lin);
      } else {
        auto res = nelder_mead(eval, uf, lo, hi, nm);
        uf = res.x;
      }
    }
    if (options.estimate_random) {
      // Every curve gets its own minimizer; the weight only scales its term.
      for (const auto& t : work.terms()) {
        auto eval = [&](const Eigen::VectorXd& r) { return curve_obj(t, uf, r); };
        Eigen::VectorXd& u = ur[t.index];
        double fu = eval(u);
        if (options.optimizer == WarpOptimizer::gauss_newton) {
          auto lin = [&](const Eigen::VectorXd& r, Eigen::MatrixXd& JtJ, Eigen::VectorXd& Jtr) {
            Eigen::VectorXd res;
            Eigen::MatrixXd J;
            work.linearize(t, embed(uf + r), res, J);
            JtJ.noalias() += J.transpose() * J;
            Jtr.noalias() += J.transpose() * res;
          };
          u = gauss_newton(u, fu, options.bound, options.iterations, work.precision(), eval, lin);
        } else {
          u = nelder_mead(eval, u, lo, hi, nm).x;
        }
      }
    }
    if (options.estimate_fixed && options.estimate_random) {
      // Shifting mass between w_k and all w_ki leaves every g_ki unchanged; only the
      // prior moves, and it is minimized by the weighted mean of the combined warps.
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(m);
      double wsum = 0.0;
      for (const auto& t : work.terms())
        if (t.weight >= kDropWeight) {
          mean += t.weight * (uf + ur[t.index]);
          wsum += t.weight;
        }
      if (wsum > 0.0) {
        mean /= wsum;
        std::vector<Eigen::VectorXd> shifted(N);
        bool inside = mean.cwiseAbs().maxCoeff() <= options.bound;
        for (std::size_t i = 0; i < N && inside; ++i) {
          shifted[i] = uf + ur[i] - mean;
          inside = shifted[i].cwiseAbs().maxCoeff() <= options.bound;
        }
        if (inside && total(mean, shifted) < total(uf, ur)) {
          uf = mean;
          ur = std::move(shifted);
        }
      }
    }
  }

  const double end = total(uf, ur);
  if (end <= out.objective_start) {
    out.fixed = embed(uf);
    out.random.resize(N);
    for (std::size_t i = 0; i < N; ++i) out.random[i] = embed(ur[i]);
    out.objective_end = end;
    out.improved = end < out.objective_start;
  } else {
    out.fixed = fixed0;
    out.random = random0;
    out.objective_end = out.objective_start;
    out.improved = false;
  }
  return out;
}

// ---------------------------------------------------------------- (iii) variances

LinearizedModel::LinearizedModel(const FunctionalDataset& data, const Eigen::MatrixXd& M,
                                 const SrcParameters& params)
    : anchors_(params.warps.anchors) {
  if (M.rows() != static_cast<Eigen::Index>(data.size()) || M.cols() != params.K)
    throw ConfigError("responsibility matrix does not match the data");
  double colmax = 0.0;
  for (int k = 0; k < params.K; ++k) colmax = std::max(colmax, M.col(k).sum());
  if (colmax < 1e-8) throw DegenerateClusterError("all cluster weights vanish");

  interior_ = anchors_.size() - 2;
  const auto m = interior_;
  const auto A = data.dimension();
  std::vector<std::size_t> grid_index;
  std::tie(grids_, grid_index) = AmplitudeCovariances::group_grids(data);
  std::vector<WarpEvaluator> evals;
  for (const auto& g : grids_) evals.emplace_back(anchors_, g);

  // Count blocks per grid first.
  std::vector<Eigen::Index> count(grids_.size(), 0);
  for (std::size_t i = 0; i < data.size(); ++i)
    for (int k = 0; k < params.K; ++k)
      if (M(static_cast<Eigen::Index>(i), k) >= kDropWeight) count[grid_index[i]] += A;
  columns_.resize(grids_.size());
  block_weight_.resize(grids_.size());
  for (std::size_t g = 0; g < grids_.size(); ++g)
    columns_[g].resize(grids_[g].size(), count[g] * (1 + m));
  std::vector<Eigen::Index> next(grids_.size(), 0);

  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto gi = grid_index[i];
    const auto& ev = evals[gi];
    const auto& x = data.curve(i).values();
    for (int k = 0; k < params.K; ++k) {
      const double w = M(static_cast<Eigen::Index>(i), k);
      if (w < kDropWeight) continue;
      const Eigen::VectorXd v0 = params.warps.combined(k, i);
      const Eigen::VectorXd g0 = ev.g(v0);
      const Eigen::MatrixXd Jg = ev.interior_jacobian(v0);
      const auto& coef = params.coef[static_cast<std::size_t>(k)];
      const Eigen::MatrixXd T = params.basis.design_matrix(g0) * coef.transpose();
      const Eigen::MatrixXd D = params.basis.derivative_matrix(g0) * coef.transpose();
      const Eigen::VectorXd w0 = interior_of(params.warps.random[static_cast<std::size_t>(k)][i]);
      for (Eigen::Index a = 0; a < A; ++a) {
        const Eigen::MatrixXd B = D.col(a).asDiagonal() * Jg;
        auto& cols = columns_[gi];
        const Eigen::Index c = next[gi];
        cols.col(c) = x.row(a).transpose() - T.col(a) + B * w0;
        cols.middleCols(c + 1, m) = B;
        next[gi] += 1 + m;
        block_weight_[gi].push_back(w);
      }
    }
  }
}

LinearizedModel::Sums LinearizedModel::sums(const std::optional<MaternKernel>& rho_s,
                                            const WarpCovariance& rho_h) const {
  const auto m = interior_;
  const Eigen::MatrixXd H = interior_h(rho_h, anchors_);
  Sums s;
  for (std::size_t g = 0; g < grids_.size(); ++g) {
    const auto n = grids_[g].size();
    const auto& X = columns_[g];
    if (X.cols() == 0) continue;
    double logdet0 = 0.0;
    Eigen::MatrixXd Y;
    if (rho_s) {
      Eigen::MatrixXd A0 = gram(*rho_s, grids_[g]);
      A0.diagonal().array() += 1.0;
      Eigen::LLT<Eigen::MatrixXd> llt(A0);
      if (llt.info() != Eigen::Success) return {std::numeric_limits<double>::infinity(), 0.0, 1.0};
      logdet0 = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
      Y = llt.matrixL().solve(X);
    } else {
      Y = X;
    }
    const auto blocks = static_cast<Eigen::Index>(block_weight_[g].size());
    for (Eigen::Index b = 0; b < blocks; ++b) {
      const double w = block_weight_[g][static_cast<std::size_t>(b)];
      const Eigen::Index c = b * (1 + m);
      const auto z = Y.col(c);
      const auto U = Y.middleCols(c + 1, m);
      const Eigen::MatrixXd UtU = U.transpose() * U;
      const Eigen::VectorXd Utz = U.transpose() * z;
      const Eigen::MatrixXd C2 = Eigen::MatrixXd::Identity(m, m) + UtU * H;
      Eigen::PartialPivLU<Eigen::MatrixXd> lu(C2);
      const double det = lu.determinant();
      if (!(det > 0.0)) return {std::numeric_limits<double>::infinity(), 0.0, 1.0};
      // z' (I + U H U')^{-1} z = z'z - z'U H (I + U'U H)^{-1} U'z
      const Eigen::RowVectorXd zUH = Utz.transpose() * H;
      const double quad = z.squaredNorm() - zUH * lu.solve(Utz);
      s.quad += w * std::max(quad, 0.0);
      s.logdet += w * (logdet0 + std::log(det));
      s.count += w * static_cast<double>(n);
    }
  }
  return s;
}

double LinearizedModel::objective_at(const std::optional<MaternKernel>& rho_s,
                                     const WarpCovariance& rho_h, double sigma2) const {
  const Sums s = sums(rho_s, rho_h);
  if (!std::isfinite(s.quad)) return std::numeric_limits<double>::infinity();
  return s.logdet + s.count * std::log(sigma2) + s.quad / sigma2 + s.count * kLog2Pi;
}

double LinearizedModel::objective(const std::optional<MaternKernel>& rho_s,
                                  const WarpCovariance& rho_h, const VarianceOptions& bounds,
                                  double* sigma2_out) const {
  const Sums s = sums(rho_s, rho_h);
  if (!std::isfinite(s.quad)) return std::numeric_limits<double>::infinity();
  const double s2 = std::clamp(s.quad / s.count, bounds.sigma2_min, bounds.sigma2_max);
  if (sigma2_out) *sigma2_out = s2;
  return s.logdet + s.count * std::log(s2) + s.quad / s2 + s.count * kLog2Pi;
}

VarianceEstimate estimate_variances(const FunctionalDataset& data, const Eigen::MatrixXd& M,
                                    const SrcParameters& params, const VarianceOptions& options) {
  const LinearizedModel lm(data, M, params);

  const bool brownian = std::holds_alternative<BrownianKernel>(params.rho_h);
  const bool fit_h = brownian && options.estimate_rho_h;
  const bool fit_s = params.rho_s.has_value();
  const bool fit_nu = fit_s && options.estimate_smoothness;

  auto unpack = [&](const Eigen::VectorXd& x, std::optional<MaternKernel>& s, WarpCovariance& h) {
    Eigen::Index j = 0;
    s = params.rho_s;
    h = params.rho_h;
    if (fit_s) {
      s->scale = std::exp(x[j++]);
      s->range = std::exp(x[j++]);
      if (fit_nu) s->smoothness = std::exp(x[j++]);
    }
    if (fit_h) std::get<BrownianKernel>(h).scale = std::exp(x[j++]);
  };

  std::vector<double> x0, lo, hi;
  const double kl = std::log(options.kernel_min), ku = std::log(options.kernel_max);
  if (fit_s) {
    x0.push_back(std::log(std::clamp(params.rho_s->scale, options.kernel_min, options.kernel_max)));
    x0.push_back(std::log(std::clamp(params.rho_s->range, options.kernel_min, options.kernel_max)));
    lo.insert(lo.end(), {kl, kl});
    hi.insert(hi.end(), {ku, ku});
    if (fit_nu) {
      x0.push_back(std::log(std::clamp(params.rho_s->smoothness, options.smoothness_min,
                                       options.smoothness_max)));
      lo.push_back(std::log(options.smoothness_min));
      hi.push_back(std::log(options.smoothness_max));
    }
  }
  if (fit_h) {
    x0.push_back(std::log(std::clamp(std::get<BrownianKernel>(params.rho_h).scale,
                                     options.kernel_min, options.kernel_max)));
    lo.push_back(kl);
    hi.push_back(ku);
  }

  VarianceEstimate out;
  out.rho_s = params.rho_s;
  out.rho_h = params.rho_h;
  // Entry value: the current parameters with sigma2 profiled (never worse than the
  // current sigma2 at the same kernels).
  out.objective_start = lm.objective(params.rho_s, params.rho_h, options, &out.sigma2);

  if (!x0.empty()) {
    auto f = [&](const Eigen::VectorXd& x) {
      std::optional<MaternKernel> s;
      WarpCovariance h = params.rho_h;
      unpack(x, s, h);
      return lm.objective(s, h, options);
    };
    const Eigen::Map<const Eigen::VectorXd> xs(x0.data(), static_cast<Eigen::Index>(x0.size()));
    const Eigen::Map<const Eigen::VectorXd> ls(lo.data(), static_cast<Eigen::Index>(lo.size()));
    const Eigen::Map<const Eigen::VectorXd> us(hi.data(), static_cast<Eigen::Index>(hi.size()));
    NelderMeadOptions nm;
    nm.max_evals = options.max_evals;
    nm.initial_step = options.initial_step;
    nm.ftol = 1e-9;
    const OptimResult res = nelder_mead(f, xs, ls, us, nm);
    if (res.f < out.objective_start) {
      unpack(res.x, out.rho_s, out.rho_h);
      out.objective_end = lm.objective(out.rho_s, out.rho_h, options, &out.sigma2);
      return out;
    }
  }
  out.objective_end = out.objective_start;
  return out;
}

// ---------------------------------------------------------------- (iv) allocation

double allocation_loglik(const Eigen::MatrixXd& M, const Eigen::MatrixXd& design,
                         const Eigen::MatrixXd& beta) {
  const Eigen::MatrixXd pi = allocation_probs(beta, design);
  double s = 0.0;
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index k = 0; k < M.cols(); ++k)
      if (M(i, k) > 0.0) s += M(i, k) * std::log(std::max(pi(i, k), 1e-300));
  return s;
}

AllocationEstimate estimate_allocation(const Eigen::MatrixXd& M, const Eigen::MatrixXd& design,
                                       const Eigen::MatrixXd& beta0, double beta_bound,
                                       int max_iter) {
  const auto N = M.rows();
  const auto K = M.cols();
  const auto p = design.cols();
  if (design.rows() != N) throw ConfigError("design rows do not match the responsibilities");
  AllocationEstimate out;
  out.beta = Eigen::MatrixXd::Zero(K - 1, p);
  if (K == 1) return out;
  if (beta0.rows() == K - 1 && beta0.cols() == p && beta0.allFinite()) out.beta = beta0;
  if (out.beta.norm() > beta_bound) out.beta *= beta_bound / out.beta.norm();

  const auto d = (K - 1) * p;
  auto flat = [&](const Eigen::MatrixXd& b) {
    Eigen::VectorXd v(d);
    for (Eigen::Index k = 0; k + 1 < K; ++k) v.segment(k * p, p) = b.row(k).transpose();
    return v;
  };
  auto unflat = [&](const Eigen::VectorXd& v) {
    Eigen::MatrixXd b(K - 1, p);
    for (Eigen::Index k = 0; k + 1 < K; ++k) b.row(k) = v.segment(k * p, p).transpose();
    return b;
  };

  double L = allocation_loglik(M, design, out.beta);
  const double gtol = 1e-9 * static_cast<double>(N);
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::MatrixXd pi = allocation_probs(out.beta, design);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index i = 0; i < N; ++i) {
      const double s = M.row(i).sum();
      const Eigen::RowVectorXd v = design.row(i);
      const Eigen::MatrixXd vv = v.transpose() * v;
      for (Eigen::Index k = 0; k + 1 < K; ++k) {
        grad.segment(k * p, p) += (M(i, k) - s * pi(i, k)) * v.transpose();
        for (Eigen::Index l = 0; l + 1 < K; ++l) {
          const double c = s * ((k == l ? pi(i, k) : 0.0) - pi(i, k) * pi(i, l));
          info.block(k * p, l * p, p, p) += c * vv;
        }
      }
    }
    out.gradient_norm = grad.norm();
    out.iterations = it;
    if (out.gradient_norm <= gtol) break;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-12)
      ldlt.compute(info + 1e-8 * Eigen::MatrixXd::Identity(d, d));
    Eigen::VectorXd step = ldlt.solve(grad);
    if (!step.allFinite()) step = grad;
    const Eigen::VectorXd b = flat(out.beta);
    bool accepted = false;
    double t = 1.0;
    for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
      const Eigen::MatrixXd trial = unflat(b + t * step);
      const double Lt = allocation_loglik(M, design, trial);
      if (Lt >= L) {
        out.beta = trial;
        L = Lt;
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    if (out.beta.norm() > beta_bound) {
      out.beta *= beta_bound / out.beta.norm();
      out.clipped = true;
      break;
    }
  }
  if (!out.clipped) {
    // Final gradient at the returned point.
    const Eigen::MatrixXd pi = allocation_probs(out.beta, design);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(d);
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index k = 0; k + 1 < K; ++k)
        grad.segment(k * p, p) += (M(i, k) - M.row(i).sum() * pi(i, k)) * design.row(i).transpose();
    out.gradient_norm = grad.norm();
  }
  return out;
}

// ---------------------------------------------------------------- model selection

double aicc(double loglik, int num_params, double sample_size) {
  const double P = num_params;
  if (sample_size <= P + 1.0) return std::numeric_limits<double>::infinity();
  return -2.0 * loglik + 2.0 * P + 2.0 * P * (P + 1.0) / (sample_size - P - 1.0);
}

int count_parameters(const EmConfig& config, Eigen::Index dimension, std::size_t N,
                     Eigen::Index covariate_cols) {
  const int K = config.K;
  const int q = config.knots + config.degree + 1;
  const int nint = static_cast<int>(config.warp_anchors.size()) - 2;
  int P = K * static_cast<int>(dimension) * q;
  if (config.estimate_fixed_warps) P += K * nint;
  if (config.amplitude_effect && config.estimate_variances)
    P += config.estimate_smoothness ? 3 : 2;
  if (!config.unstructured_h && config.estimate_variances) P += 1;
  P += 1;
  if (config.allocation == AllocationKind::covariates)
    P += (K - 1) * static_cast<int>(covariate_cols);
  else
    P += K - 1;
  if (config.count_random_warps && config.estimate_random_warps)
    P += K * static_cast<int>(N) * nint;
  return P;
}

double aicc_sample_size(const EmConfig& config, const FunctionalDataset& data) {
  if (config.aicc_sample_size == AiccSampleSize::subjects) return static_cast<double>(data.size());
  return static_cast<double>(data.dimension() * data.total_points());
}

// ---------------------------------------------------------------- EM driver

namespace {

std::vector<Eigen::VectorXd> warped_times(const FunctionalDataset& data,
                                          const WarpParameters& warps, int k) {
  std::vector<Eigen::VectorXd> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    out[i] = eval_g(warps, k, i, data.curve(i).grid().points());
  return out;
}

FitResult run_em(const FunctionalDataset& data, const Eigen::MatrixXd& design,
                 const EmConfig& cfg, std::mt19937_64& rng) {
  const auto N = data.size();
  const auto Ni = static_cast<Eigen::Index>(N);
  const int K = cfg.K;

  SrcParameters params;
  params.K = K;
  params.basis = BSplineBasis::equispaced(cfg.knots, cfg.degree);
  params.coef.assign(static_cast<std::size_t>(K),
                     Eigen::MatrixXd::Zero(data.dimension(), params.basis.size()));
  params.warps = WarpParameters::identity(cfg.warp_anchors, K, N);
  params.rho_s = cfg.amplitude_effect ? std::optional<MaternKernel>(cfg.rho_s_init) : std::nullopt;
  if (cfg.unstructured_h)
    params.rho_h = UnstructuredCov(*cfg.unstructured_h);
  else
    params.rho_h = cfg.rho_h_init;
  params.sigma2 = 1.0;
  params.allocation = cfg.allocation;
  params.beta = Eigen::MatrixXd::Zero(K - 1, design.cols());
  params.proportions = Eigen::VectorXd::Constant(K, 1.0 / K);

  FitResult res;
  res.method = cfg.allocation == AllocationKind::covariates ? "src" : "src-f";
  res.curve_ids = data.ids();

  Eigen::MatrixXd M = init_responsibilities(N, K, rng).M;
  Eigen::MatrixXd pi = M;
  std::vector<bool> reinitialized(static_cast<std::size_t>(K), false);

  WarpOptions wopt;
  wopt.optimizer = cfg.warp_optimizer;
  wopt.estimate_fixed = cfg.estimate_fixed_warps;
  wopt.estimate_random = cfg.estimate_random_warps;
  wopt.bound = cfg.warp_bound;
  wopt.iterations = cfg.warp_iterations;
  wopt.sweeps = cfg.warp_sweeps;
  wopt.max_evals = cfg.max_warp_evals;

  VarianceOptions vopt;
  vopt.estimate_smoothness = cfg.estimate_smoothness;
  vopt.max_evals = cfg.max_variance_evals;
  vopt.sigma2_min = cfg.sigma2_min;
  vopt.sigma2_max = cfg.sigma2_max;
  vopt.kernel_min = cfg.kernel_min;
  vopt.kernel_max = cfg.kernel_max;
  vopt.smoothness_min = cfg.smoothness_min;
  vopt.smoothness_max = cfg.smoothness_max;

  AmplitudeCovariances amp(data, params.rho_s);
  const bool warps_on = cfg.estimate_fixed_warps || cfg.estimate_random_warps;
  Eigen::MatrixXd logliks;
  bool first_variance = true;

  // The warp penalty makes the M-step ascend a penalized objective, so the observed
  // log-likelihood can dip slightly; the best iterate is what gets returned.
  struct Snapshot {
    SrcParameters params;
    Eigen::MatrixXd M, pi;
    double L = -std::numeric_limits<double>::infinity();
    int iteration = 0;
  } best;

  for (int outer = 0; outer < cfg.max_outer_iter; ++outer) {
    for (int rep = 0; rep < cfg.inner_repeats; ++rep) {
      for (int k = 0; k < K; ++k) {
        const Eigen::VectorXd wk = M.col(k);
        params.coef[static_cast<std::size_t>(k)] = estimate_spline_weights(
            data, wk, warped_times(data, params.warps, k), params.basis, amp, cfg.eta);
      }
      if (warps_on) {
        const Eigen::MatrixXd H = gram(params.rho_h, params.warps.anchors);
        for (int k = 0; k < K; ++k) {
          const auto ku = static_cast<std::size_t>(k);
          const Eigen::VectorXd wk = M.col(k);
          WarpProblem prob;
          prob.data = &data;
          prob.weights = &wk;
          prob.coef = &params.coef[ku];
          prob.basis = &params.basis;
          prob.amplitude = &amp;
          prob.anchors = params.warps.anchors;
          prob.warp_cov = H;
          const WarpEstimate we =
              estimate_warps(prob, params.warps.fixed[ku], params.warps.random[ku], wopt);
          params.warps.fixed[ku] = we.fixed;
          params.warps.random[ku] = we.random;
        }
      }
      if (cfg.estimate_variances) {
        // A wide first search, then local refinements around the previous estimate.
        vopt.initial_step = first_variance ? 1.0 : 0.3;
        first_variance = false;
        const VarianceEstimate ve = estimate_variances(data, M, params, vopt);
        params.sigma2 = ve.sigma2;
        params.rho_s = ve.rho_s;
        params.rho_h = ve.rho_h;
        amp = AmplitudeCovariances(data, params.rho_s);
      } else {
        LinearizedModel(data, M, params).objective(params.rho_s, params.rho_h, vopt, &params.sigma2);
      }
    }

    logliks = component_logliks(data, params, amp);
    M = responsibilities(pi, logliks).M;
    for (int k = 0; k < K && K > 1; ++k) {
      if (M.col(k).maxCoeff() >= 1e-6) continue;
      const auto ku = static_cast<std::size_t>(k);
      if (reinitialized[ku])
        throw DegenerateClusterError("cluster " + std::to_string(k + 1) +
                                     " lost all its curves after re-initialization");
      reinitialized[ku] = true;
      res.warnings.push_back("cluster " + std::to_string(k + 1) +
                             " collapsed; responsibilities re-initialized");
      std::uniform_real_distribution<double> U(0.0, 1.0);
      for (Eigen::Index i = 0; i < Ni; ++i) M(i, k) = U(rng);
      for (Eigen::Index i = 0; i < Ni; ++i) M.row(i) /= M.row(i).sum();
    }

    if (cfg.allocation == AllocationKind::covariates) {
      const AllocationEstimate ae =
          estimate_allocation(M, design, params.beta, cfg.beta_bound, cfg.irls_max_iter);
      if (ae.clipped && std::find(res.warnings.begin(), res.warnings.end(),
                                  "allocation coefficients clipped at the norm bound") ==
                            res.warnings.end())
        res.warnings.push_back("allocation coefficients clipped at the norm bound");
      params.beta = ae.beta;
      pi = allocation_probs(params.beta, design);
    } else {
      params.proportions = M.colwise().mean().transpose();
      pi = params.proportions.transpose().replicate(Ni, 1);
    }

    const double L = mixture_loglik(pi, logliks);
    if (!std::isfinite(L)) throw NumericalError("mixture log-likelihood is not finite");
    res.loglik_trace.push_back(L);
    res.iterations = outer + 1;
    if (L > best.L) best = {params, M, pi, L, outer + 1};
    if (res.loglik_trace.size() >= 2) {
      const double prev = res.loglik_trace[res.loglik_trace.size() - 2];
      if (L < prev - cfg.ascent_slack * std::abs(prev)) ++res.ascent_violations;
      if (std::abs(L - prev) < cfg.tol_rel_loglik * std::abs(prev)) {
        res.converged = true;
        break;
      }
    }
  }
  if (res.ascent_violations > 0)
    res.warnings.push_back(std::to_string(res.ascent_violations) +
                           " outer iteration(s) decreased the log-likelihood");
  if (!res.converged) res.warnings.push_back("maximum number of outer iterations reached");
  if (best.L > res.loglik_trace.back()) {
    params = std::move(best.params);
    M = std::move(best.M);
    pi = std::move(best.pi);
    res.warnings.push_back("returned outer iteration " + std::to_string(best.iteration) +
                           ", which has the highest log-likelihood");
  }

  res.params = params;
  res.responsibilities.M = M;
  res.priors = pi;
  res.assignments = res.responsibilities.assignments();
  res.loglik = std::max(best.L, res.loglik_trace.back());
  res.aligned.resize(N);
  for (std::size_t i = 0; i < N; ++i)
    res.aligned[i] = predict_curve(params, i, pi.row(static_cast<Eigen::Index>(i)).transpose(),
                                   data.curve(i).grid().points());
  return res;
}

}  // namespace

FitResult fit(const FunctionalDataset& data, const ScalarCovariates* scalars,
              const EmConfig& config) {
  config.validate();
  validate_for_fit(data);
  const auto N = static_cast<Eigen::Index>(data.size());
  Eigen::MatrixXd design = Eigen::MatrixXd::Ones(N, 1);
  if (config.allocation == AllocationKind::covariates && config.K > 1) {
    if (!scalars) throw ConfigError("SRC needs scalar covariates");
    design = scalars->aligned_to(data.ids()).design();
  }

  std::mt19937_64 rng(config.seed);
  std::optional<FitResult> best;
  std::string last_error;
  for (int s = 0; s < config.n_starts; ++s) {
    try {
      FitResult r = run_em(data, design, config, rng);
      if (!best || r.loglik > best->loglik) best = std::move(r);
    } catch (const DegenerateClusterError& e) {
      if (config.n_starts == 1) throw;
      last_error = e.what();
    }
  }
  if (!best) throw DegenerateClusterError("every start collapsed: " + last_error);

  FitResult& r = *best;
  r.num_params = count_parameters(config, data.dimension(), data.size(), design.cols());
  r.aicc = aicc(r.loglik, r.num_params, aicc_sample_size(config, data));
  if (std::isinf(r.aicc))
    r.warnings.push_back("AICc undefined: sample size does not exceed the parameter count + 1");
  return r;
}

Selection select_k(const FunctionalDataset& data, const ScalarCovariates* scalars,
                   const EmConfig& config, const std::vector<int>& k_range) {
  if (k_range.empty()) throw ConfigError("K range is empty");
  std::vector<int> ks = k_range;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  Selection sel;
  double best = std::numeric_limits<double>::infinity();
  for (int K : ks) {
    EmConfig c = config;
    c.K = K;
    c.seed = config.seed + static_cast<std::uint64_t>(K);
    SelectionRow row;
    row.K = K;
    try {
      FitResult r = fit(data, scalars, c);
      row.ok = true;
      row.aicc = r.aicc;
      row.loglik = r.loglik;
      row.num_params = r.num_params;
      if (sel.best_K == 0 || r.aicc < best) {
        best = r.aicc;
        sel.best_K = K;
      }
      sel.fits.push_back(std::move(r));
    } catch (const Error& e) {
      row.error = e.what();
    }
    sel.rows.push_back(row);
  }
  if (sel.best_K == 0) throw NumericalError("no K in the range could be fitted");
  return sel;
}

}  // namespace srcfda
