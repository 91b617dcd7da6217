#include "srcfda/baselines.hpp"

#include "srcfda/errors.hpp"

#include <algorithm>
#include <limits>
#include <random>

namespace srcfda {

// ---------------------------------------------------------------- k-means-s

namespace {

std::vector<int> nearest(const Eigen::MatrixXd& X, const Eigen::MatrixXd& C, double& sse) {
  std::vector<int> z(static_cast<std::size_t>(X.rows()));
  sse = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    Eigen::Index best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < C.rows(); ++k) {
      const double d = (X.row(i) - C.row(k)).squaredNorm();
      if (d < bd) {
        bd = d;
        best = k;
      }
    }
    z[static_cast<std::size_t>(i)] = static_cast<int>(best);
    sse += bd;
  }
  return z;
}

Eigen::MatrixXd plus_plus(const Eigen::MatrixXd& X, int K, std::mt19937_64& rng) {
  const auto N = X.rows();
  Eigen::MatrixXd C(K, X.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, N - 1);
  C.row(0) = X.row(first(rng));
  Eigen::VectorXd D2(N);
  for (int k = 1; k < K; ++k) {
    for (Eigen::Index i = 0; i < N; ++i) {
      double d = std::numeric_limits<double>::infinity();
      for (int l = 0; l < k; ++l) d = std::min(d, (X.row(i) - C.row(l)).squaredNorm());
      D2[i] = d;
    }
    const double total = D2.sum();
    Eigen::Index pick = first(rng);
    if (total > 0.0) {
      std::uniform_real_distribution<double> U(0.0, total);
      double u = U(rng), acc = 0.0;
      pick = N - 1;
      for (Eigen::Index i = 0; i < N; ++i) {
        acc += D2[i];
        if (u < acc) {
          pick = i;
          break;
        }
      }
    }
    C.row(k) = X.row(pick);
  }
  return C;
}

}  // namespace

HardClustering kmeans_s(const ScalarCovariates& scalars, const KmeansSConfig& config) {
  if (config.K < 1 || config.n_init < 1 || config.max_iter < 1)
    throw ConfigError("k-means-s needs K, n_init, max_iter >= 1");
  const Eigen::MatrixXd X = scalars.raw();
  if (X.rows() == 0) throw ValidationError("k-means-s needs at least one subject");
  if (X.cols() == 0) throw ValidationError("k-means-s needs at least one scalar covariate");
  if (config.K > X.rows()) throw ConfigError("K exceeds the number of subjects");

  std::mt19937_64 rng(config.seed);
  HardClustering best;
  best.objective = std::numeric_limits<double>::infinity();
  for (int run = 0; run < config.n_init; ++run) {
    Eigen::MatrixXd C = plus_plus(X, config.K, rng);
    double sse = 0.0;
    std::vector<int> z = nearest(X, C, sse);
    HardClustering h;
    h.objective_trace.push_back(sse);
    for (int it = 0; it < config.max_iter; ++it) {
      Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(config.K, X.cols());
      Eigen::VectorXd cnt = Eigen::VectorXd::Zero(config.K);
      for (Eigen::Index i = 0; i < X.rows(); ++i) {
        sum.row(z[static_cast<std::size_t>(i)]) += X.row(i);
        cnt[z[static_cast<std::size_t>(i)]] += 1.0;
      }
      for (int k = 0; k < config.K; ++k)
        if (cnt[k] > 0.0) C.row(k) = sum.row(k) / cnt[k];
      std::vector<int> nz = nearest(X, C, sse);
      h.objective_trace.push_back(sse);
      h.iterations = it + 1;
      if (nz == z) {
        h.converged = true;
        break;
      }
      z = std::move(nz);
    }
    h.objective = sse;
    h.assignments.resize(z.size());
    std::vector<int> count(static_cast<std::size_t>(config.K), 0);
    for (std::size_t i = 0; i < z.size(); ++i) {
      h.assignments[i] = z[i] + 1;
      ++count[static_cast<std::size_t>(z[i])];
    }
    for (int k = 0; k < config.K; ++k)
      if (count[static_cast<std::size_t>(k)] == 0) h.empty_clusters.push_back(k + 1);
    if (h.objective < best.objective) best = std::move(h);
  }
  return best;
}

// ---------------------------------------------------------------- k-means-f

namespace {

Eigen::MatrixXd fit_means(const FunctionalDataset& data, const Eigen::VectorXd& w,
                          const SrcParameters& params, int k, const AmplitudeCovariances& amp,
                          double eta) {
  std::vector<Eigen::VectorXd> g(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    g[i] = eval_g(params.warps, k, i, data.curve(i).grid().points());
  try {
    return estimate_spline_weights(data, w, g, params.basis, amp, eta);
  } catch (const NumericalError&) {
    if (eta > 0.0) throw;
    return estimate_spline_weights(data, w, g, params.basis, amp, 1e-8);
  }
}

}  // namespace

KmeansFResult kmeans_f(const FunctionalDataset& data, const ScalarCovariates* scalars,
                       const KmeansFConfig& config) {
  if (config.K < 1 || config.max_iter < 1 || config.refits < 1)
    throw ConfigError("k-means-f needs K, max_iter, refits >= 1");
  if (!(config.warp_penalty >= 0.0)) throw ConfigError("warp penalty must be >= 0");
  validate_for_fit(data);
  const auto N = data.size();
  const int K = config.K;
  if (static_cast<std::size_t>(K) > N) throw ConfigError("K exceeds the number of curves");

  KmeansFResult out;
  SrcParameters& params = out.params;
  params.K = K;
  params.basis = BSplineBasis::equispaced(config.knots, config.degree);
  params.coef.assign(static_cast<std::size_t>(K),
                     Eigen::MatrixXd::Zero(data.dimension(), params.basis.size()));
  params.warps = WarpParameters::identity(config.warp_anchors, K, N);
  params.rho_s.reset();
  params.rho_h = BrownianKernel{1.0, BrownianKind::bridge};
  params.allocation = AllocationKind::proportions;
  params.proportions = Eigen::VectorXd::Constant(K, 1.0 / K);

  const AmplitudeCovariances amp(data, std::nullopt);
  const Eigen::MatrixXd H = gram(params.rho_h, params.warps.anchors);
  const auto m = params.warps.anchors.size() - 2;
  const Eigen::MatrixXd Hinv = H.block(1, 1, m, m).inverse();

  std::mt19937_64 rng(config.seed);
  std::vector<int> z(N);
  if (scalars && scalars->cols() > 1) {
    KmeansSConfig ks;
    ks.K = K;
    ks.seed = config.seed;
    const auto h = kmeans_s(scalars->aligned_to(data.ids()), ks);
    for (std::size_t i = 0; i < N; ++i) z[i] = h.assignments[i] - 1;
  } else {
    std::uniform_int_distribution<int> U(0, K - 1);
    for (auto& v : z) v = U(rng);
  }

  WarpOptions wopt;
  wopt.estimate_fixed = false;
  wopt.estimate_random = config.estimate_warps;
  wopt.bound = config.warp_bound;
  wopt.penalty = config.warp_penalty;

  auto distances = [&]() {
    Eigen::MatrixXd D(static_cast<Eigen::Index>(N), K);
    for (std::size_t i = 0; i < N; ++i) {
      const auto& c = data.curve(i);
      for (int k = 0; k < K; ++k) {
        const Eigen::VectorXd v = params.warps.combined(k, i);
        const Eigen::MatrixXd mean = warped_mean(params, k, v, c.grid().points());
        const Eigen::VectorXd u = v.segment(1, m);
        D(static_cast<Eigen::Index>(i), k) =
            (c.values() - mean).squaredNorm() + config.warp_penalty * u.dot(Hinv * u);
      }
    }
    return D;
  };

  HardClustering& hc = out.clustering;
  Eigen::MatrixXd D;
  for (int it = 0; it < config.max_iter; ++it) {
    // Re-seed empty clusters with the curve farthest from its own mean.
    for (int k = 0; k < K; ++k) {
      if (std::count(z.begin(), z.end(), k) > 0) continue;
      std::size_t pick = N;
      double worst = -1.0;
      for (std::size_t i = 0; i < N; ++i) {
        if (std::count(z.begin(), z.end(), z[i]) < 2) continue;
        const double d = D.size() ? D(static_cast<Eigen::Index>(i), z[i]) : 0.0;
        if (d > worst) {
          worst = d;
          pick = i;
        }
      }
      if (pick == N) throw DegenerateClusterError("cannot re-seed an empty k-means-f cluster");
      z[pick] = k;
      hc.warnings.push_back("empty cluster " + std::to_string(k + 1) + " re-seeded");
    }

    for (int r = 0; r < config.refits; ++r) {
      for (int k = 0; k < K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        Eigen::VectorXd w(static_cast<Eigen::Index>(N));
        for (std::size_t i = 0; i < N; ++i) w[static_cast<Eigen::Index>(i)] = z[i] == k;
        params.coef[ku] = fit_means(data, w, params, k, amp, config.eta);
        if (!config.estimate_warps) continue;
        WarpProblem prob;
        prob.data = &data;
        prob.weights = &w;
        prob.coef = &params.coef[ku];
        prob.basis = &params.basis;
        prob.amplitude = &amp;
        prob.anchors = params.warps.anchors;
        prob.warp_cov = H;
        const WarpEstimate we =
            estimate_warps(prob, params.warps.fixed[ku], params.warps.random[ku], wopt);
        params.warps.random[ku] = we.random;
      }
    }

    D = distances();
    std::vector<int> nz(N);
    double F = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      Eigen::Index best;
      F += D.row(static_cast<Eigen::Index>(i)).minCoeff(&best);
      nz[i] = static_cast<int>(best);
    }
    hc.objective_trace.push_back(F);
    hc.objective = F;
    hc.iterations = it + 1;
    if (nz == z) {
      hc.converged = true;
      break;
    }
    z = std::move(nz);
  }

  hc.assignments.resize(N);
  for (std::size_t i = 0; i < N; ++i) hc.assignments[i] = z[i] + 1;
  for (int k = 0; k < K; ++k)
    if (std::count(z.begin(), z.end(), k) == 0) hc.empty_clusters.push_back(k + 1);
  out.distances = D;
  out.delta = std::max(hc.objective / static_cast<double>(data.dimension() * data.total_points()),
                       1e-12);
  params.sigma2 = out.delta;
  for (int k = 0; k < K; ++k)
    params.proportions[k] =
        static_cast<double>(std::count(z.begin(), z.end(), k)) / static_cast<double>(N);
  out.aligned.resize(N);
  for (std::size_t i = 0; i < N; ++i)
    out.aligned[i] =
        warped_mean(params, z[i], params.warps.combined(z[i], i), data.curve(i).grid().points());
  return out;
}

// ---------------------------------------------------------------- SRC-f

FitResult src_f(const FunctionalDataset& data, EmConfig config) {
  config.allocation = AllocationKind::proportions;
  return fit(data, nullptr, config);
}

// ---------------------------------------------------------------- softness limit

std::vector<SoftnessRow> softness_limit_check(const FunctionalDataset& data,
                                              const std::vector<Eigen::MatrixXd>& means,
                                              const std::vector<double>& deltas,
                                              const Eigen::VectorXd& proportions) {
  const auto N = static_cast<Eigen::Index>(data.size());
  const auto K = static_cast<Eigen::Index>(means.size());
  if (K < 1) throw ConfigError("softness check needs at least one mean");
  Eigen::VectorXd p = proportions.size() == K ? proportions : Eigen::VectorXd::Constant(K, 1.0 / K);
  const Eigen::MatrixXd priors = p.transpose().replicate(N, 1);
  Eigen::MatrixXd sq(N, K);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto& x = data.curve(static_cast<std::size_t>(i)).values();
    for (Eigen::Index k = 0; k < K; ++k) {
      if (means[static_cast<std::size_t>(k)].rows() != x.rows() ||
          means[static_cast<std::size_t>(k)].cols() != x.cols())
        throw ConfigError("mean curves must match the curves' common grid");
      sq(i, k) = (x - means[static_cast<std::size_t>(k)]).squaredNorm();
    }
  }
  std::vector<SoftnessRow> rows;
  for (double delta : deltas) {
    if (!(delta > 0.0)) throw ConfigError("delta must be positive");
    SoftnessRow row;
    row.delta = delta;
    row.M = responsibilities(priors, -sq / (2.0 * delta)).M;
    for (Eigen::Index i = 0; i < N; ++i)
      row.max_deviation = std::max(row.max_deviation, std::abs(row.M.row(i).maxCoeff() - 1.0));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace srcfda
