#include "srcfda/model.hpp"

#include "srcfda/errors.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <numbers>

namespace srcfda {

void SrcParameters::validate() const {
  if (K < 1) throw ConfigError("K must be >= 1");
  if (static_cast<int>(coef.size()) != K) throw ConfigError("spline weights missing for a cluster");
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw ConfigError("sigma2 must be positive");
  if (rho_s) rho_s->validate();
  if (const auto* b = std::get_if<BrownianKernel>(&rho_h)) b->validate();
  if (!beta.allFinite()) throw ConfigError("beta must be finite");
  warps.validate();
}

std::vector<int> Responsibilities::assignments() const {
  std::vector<int> out(static_cast<std::size_t>(M.rows()));
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < M.cols(); ++k)
      if (M(i, k) > M(i, best)) best = k;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best) + 1;
  }
  return out;
}

void Responsibilities::validate(double tol) const {
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    if ((M.row(i).array() < 0.0).any() || (M.row(i).array() > 1.0 + tol).any())
      throw ValidationError("responsibility outside [0,1]");
    if (std::abs(M.row(i).sum() - 1.0) > tol)
      throw ValidationError("responsibility row does not sum to 1");
  }
}

std::pair<std::vector<Eigen::VectorXd>, std::vector<std::size_t>>
AmplitudeCovariances::group_grids(const FunctionalDataset& data) {
  std::vector<Eigen::VectorXd> grids;
  std::vector<std::size_t> index(data.size());
  std::map<std::vector<double>, std::size_t> seen;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& p = data.curve(i).grid().points();
    std::vector<double> key(p.data(), p.data() + p.size());
    auto [it, inserted] = seen.try_emplace(std::move(key), grids.size());
    if (inserted) grids.push_back(p);
    index[i] = it->second;
  }
  return {std::move(grids), std::move(index)};
}

AmplitudeCovariances::AmplitudeCovariances(const FunctionalDataset& data,
                                           const std::optional<MaternKernel>& kernel) {
  std::tie(grids_, grid_index_) = group_grids(data);
  factors_.reserve(grids_.size());
  for (const auto& g : grids_) {
    const auto n = g.size();
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
    double max_jitter = 1e-10;
    if (kernel) {
      A += gram(*kernel, g);
      max_jitter = std::max(1e-10, 1e-6 * kernel->scale);
    }
    factors_.emplace_back(std::move(A), 0.0, max_jitter);
  }
}

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double block_loglik(const Eigen::VectorXd& resid, const SpdMatrix& amp, double sigma2) {
  const double n = static_cast<double>(resid.size());
  return -0.5 * (n * kLog2Pi + n * std::log(sigma2) + amp.log_det() + amp.quad(resid) / sigma2);
}

}  // namespace

Eigen::MatrixXd warped_mean(const SrcParameters& params, int k, const Eigen::VectorXd& warp_values,
                            const Eigen::VectorXd& grid) {
  const Eigen::VectorXd g = eval_g(params.warps.anchors, warp_values, grid);
  const Eigen::MatrixXd Psi = params.basis.design_matrix(g);
  return (Psi * params.coef[static_cast<std::size_t>(k)].transpose()).transpose();
}

double component_loglik(const Curve& curve, const SrcParameters& params, int k, std::size_t i,
                        const SpdMatrix& amplitude) {
  const Eigen::MatrixXd mean = warped_mean(params, k, params.warps.combined(k, i),
                                           curve.grid().points());
  double ll = 0.0;
  for (Eigen::Index a = 0; a < curve.dimension(); ++a)
    ll += block_loglik((curve.values().row(a) - mean.row(a)).transpose(), amplitude,
                       params.sigma2);
  if (std::isnan(ll)) throw NumericalError("component log-likelihood is NaN");
  return ll;
}

double component_loglik(const FunctionalDataset& data, const SrcParameters& params, int k,
                        std::size_t i) {
  const auto& c = data.curve(i);
  const auto n = c.size();
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
  if (params.rho_s) A += gram(*params.rho_s, c.grid().points());
  SpdMatrix amp(std::move(A), 0.0, params.rho_s ? 1e-6 * params.rho_s->scale : 1e-10);
  return component_loglik(c, params, k, i, amp);
}

Eigen::MatrixXd component_logliks(const FunctionalDataset& data, const SrcParameters& params,
                                  const AmplitudeCovariances& amplitude) {
  Eigen::MatrixXd L(static_cast<Eigen::Index>(data.size()), params.K);
  for (std::size_t i = 0; i < data.size(); ++i)
    for (int k = 0; k < params.K; ++k)
      L(static_cast<Eigen::Index>(i), k) =
          component_loglik(data.curve(i), params, k, i, amplitude.of_curve(i));
  return L;
}

Responsibilities responsibilities(const Eigen::MatrixXd& priors, const Eigen::MatrixXd& logliks) {
  if (priors.rows() != logliks.rows() || priors.cols() != logliks.cols())
    throw ConfigError("prior and log-likelihood matrices differ in shape");
  const double ninf = -std::numeric_limits<double>::infinity();
  Responsibilities r;
  r.M.resize(priors.rows(), priors.cols());
  Eigen::VectorXd logpost(priors.cols());
  for (Eigen::Index i = 0; i < priors.rows(); ++i) {
    double mx = ninf;
    for (Eigen::Index k = 0; k < priors.cols(); ++k) {
      if (std::isnan(logliks(i, k))) throw NumericalError("NaN component log-likelihood");
      logpost[k] = priors(i, k) > 0.0 ? std::log(priors(i, k)) + logliks(i, k) : ninf;
      mx = std::max(mx, logpost[k]);
    }
    if (mx == ninf) throw NumericalError("curve has zero prior mass in every cluster");
    double s = 0.0;
    for (Eigen::Index k = 0; k < priors.cols(); ++k) {
      const double e = logpost[k] == ninf ? 0.0 : std::exp(logpost[k] - mx);
      r.M(i, k) = e;
      s += e;
    }
    r.M.row(i) /= s;
  }
  return r;
}

double mixture_loglik(const Eigen::MatrixXd& priors, const Eigen::MatrixXd& logliks) {
  const double ninf = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (Eigen::Index i = 0; i < priors.rows(); ++i) {
    double mx = ninf;
    for (Eigen::Index k = 0; k < priors.cols(); ++k)
      if (priors(i, k) > 0.0) mx = std::max(mx, std::log(priors(i, k)) + logliks(i, k));
    double s = 0.0;
    for (Eigen::Index k = 0; k < priors.cols(); ++k)
      if (priors(i, k) > 0.0) s += std::exp(std::log(priors(i, k)) + logliks(i, k) - mx);
    total += mx + std::log(s);
  }
  return total;
}

Eigen::MatrixXd allocation_probs(const Eigen::MatrixXd& beta, const Eigen::MatrixXd& design) {
  const auto N = design.rows();
  const auto K = beta.rows() + 1;
  if (beta.rows() > 0 && beta.cols() != design.cols())
    throw ConfigError("beta column count does not match the covariate design");
  Eigen::MatrixXd pi(N, K);
  for (Eigen::Index i = 0; i < N; ++i) {
    Eigen::VectorXd eta(K);
    for (Eigen::Index k = 0; k + 1 < K; ++k) eta[k] = design.row(i).dot(beta.row(k));
    eta[K - 1] = 0.0;
    const double mx = eta.maxCoeff();
    Eigen::VectorXd e = (eta.array() - mx).exp();
    pi.row(i) = (e / e.sum()).transpose();
  }
  return pi;
}

Eigen::MatrixXd prior_probs(const SrcParameters& params, std::size_t N,
                            const ScalarCovariates* scalars) {
  const auto n = static_cast<Eigen::Index>(N);
  if (params.allocation == AllocationKind::proportions) {
    Eigen::VectorXd p = params.proportions.size() == params.K
                            ? params.proportions
                            : Eigen::VectorXd::Constant(params.K, 1.0 / params.K);
    return p.transpose().replicate(n, 1);
  }
  if (params.K == 1) return Eigen::MatrixXd::Ones(n, 1);
  if (!scalars) throw ConfigError("covariate allocation needs scalar covariates");
  if (scalars->rows() != n) throw ConfigError("scalar covariates do not match the dataset");
  return allocation_probs(params.beta, scalars->design());
}

double mixture_loglik(const SrcParameters& params, const FunctionalDataset& data,
                      const ScalarCovariates* scalars) {
  AmplitudeCovariances amp(data, params.rho_s);
  return mixture_loglik(prior_probs(params, data.size(), scalars),
                        component_logliks(data, params, amp));
}

Eigen::MatrixXd predict_curve(const SrcParameters& params, std::size_t i,
                              const Eigen::VectorXd& pi_row, const Eigen::VectorXd& grid) {
  if (pi_row.size() != params.K) throw ConfigError("prior row has the wrong length");
  Eigen::MatrixXd out;
  for (int k = 0; k < params.K; ++k) {
    Eigen::MatrixXd m = warped_mean(params, k, params.warps.combined(k, i), grid);
    if (k == 0)
      out = pi_row[0] * m;
    else
      out += pi_row[k] * m;
  }
  return out;
}

std::vector<Eigen::MatrixXd> cluster_patterns(const SrcParameters& params, const Eigen::MatrixXd& M,
                                              const Eigen::VectorXd& grid) {
  if (M.cols() != params.K) throw ConfigError("responsibilities do not match K");
  std::vector<Eigen::MatrixXd> out;
  for (int k = 0; k < params.K; ++k) {
    Eigen::MatrixXd acc;
    double total = 0.0;
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      const double w = M(i, k);
      if (w <= 0.0) continue;
      const Eigen::MatrixXd m =
          warped_mean(params, k, params.warps.combined(k, static_cast<std::size_t>(i)), grid);
      if (acc.size() == 0)
        acc = w * m;
      else
        acc += w * m;
      total += w;
    }
    if (total <= 0.0)
      acc = warped_mean(params, k, params.warps.fixed[static_cast<std::size_t>(k)], grid);
    else
      acc /= total;
    out.push_back(std::move(acc));
  }
  return out;
}

Classification classify(const Curve& curve, const Eigen::VectorXd& pi_row,
                        const SrcParameters& params,
                        const std::vector<Eigen::VectorXd>& random_warps) {
  if (pi_row.size() != params.K) throw ConfigError("prior row has the wrong length");
  if (!random_warps.empty() && static_cast<int>(random_warps.size()) != params.K)
    throw ConfigError("one random warp per cluster expected");
  const auto n = curve.size();
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
  if (params.rho_s) A += gram(*params.rho_s, curve.grid().points());
  SpdMatrix amp(std::move(A), 0.0, params.rho_s ? 1e-6 * params.rho_s->scale : 1e-10);

  Eigen::MatrixXd ll(1, params.K);
  for (int k = 0; k < params.K; ++k) {
    Eigen::VectorXd w = params.warps.fixed[static_cast<std::size_t>(k)];
    if (!random_warps.empty()) w += random_warps[static_cast<std::size_t>(k)];
    const Eigen::MatrixXd mean = warped_mean(params, k, w, curve.grid().points());
    double v = 0.0;
    for (Eigen::Index a = 0; a < curve.dimension(); ++a)
      v += block_loglik((curve.values().row(a) - mean.row(a)).transpose(), amp, params.sigma2);
    ll(0, k) = v;
  }
  Classification c;
  c.posterior = responsibilities(pi_row.transpose(), ll).M.row(0).transpose();
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < c.posterior.size(); ++k)
    if (c.posterior[k] > c.posterior[best]) best = k;
  c.cluster = static_cast<int>(best) + 1;
  return c;
}

}  // namespace srcfda
