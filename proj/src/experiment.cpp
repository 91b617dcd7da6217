#include "srcfda/experiment.hpp"

#include "srcfda/errors.hpp"
#include "srcfda/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <mutex>
#include <thread>

namespace srcfda {

double matched_rase(const std::vector<Eigen::MatrixXd>& patterns, const GroundTruth& truth) {
  const std::vector<const Eigen::MatrixXd*> mus{&truth.mu1, &truth.mu2};
  const std::size_t G = mus.size();
  if (patterns.empty()) throw ConfigError("no cluster patterns to compare");
  // Assign each true group a distinct cluster when possible; otherwise clusters may repeat.
  std::vector<std::size_t> idx(patterns.size());
  std::iota(idx.begin(), idx.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  if (patterns.size() >= G) {
    do {
      double s = 0.0;
      for (std::size_t g = 0; g < G; ++g) s += rase(patterns[idx[g]], *mus[g]);
      best = std::min(best, s / static_cast<double>(G));
    } while (std::next_permutation(idx.begin(), idx.end()));
  } else {
    double s = 0.0;
    for (std::size_t g = 0; g < G; ++g) {
      double b = std::numeric_limits<double>::infinity();
      for (const auto& p : patterns) b = std::min(b, rase(p, *mus[g]));
      s += b;
    }
    best = s / static_cast<double>(G);
  }
  return best;
}

ReplicationOutcome run_replication(const Simulation& sim, const ExperimentConfig& config,
                                   std::uint64_t fit_seed) {
  ReplicationOutcome out;
  const auto& truth = sim.truth.labels;
  const Eigen::VectorXd grid = sim.data.curve(0).grid().points();
  for (const auto& method : config.methods) {
    MethodOutcome mo;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (method == "src" || method == "src-f") {
        EmConfig ec = config.em;
        ec.seed = fit_seed;
        const FitResult f =
            method == "src" ? fit(sim.data, &sim.scalars, ec) : src_f(sim.data, ec);
        mo.assignments = f.assignments;
        mo.loglik_trace = f.loglik_trace;
        mo.loglik = f.loglik;
        mo.ascent_violations = f.ascent_violations;
        if (config.compute_rase)
          mo.rase = matched_rase(cluster_patterns(f.params, f.responsibilities.M, grid), sim.truth);
      } else if (method == "kmeans-f") {
        KmeansFConfig kc = config.kmeans_f;
        kc.K = config.em.K;
        kc.seed = fit_seed;
        const KmeansFResult r = kmeans_f(sim.data, &sim.scalars, kc);
        mo.assignments = r.clustering.assignments;
        if (config.compute_rase) {
          Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sim.data.size()), kc.K);
          for (std::size_t i = 0; i < mo.assignments.size(); ++i)
            Z(static_cast<Eigen::Index>(i), mo.assignments[i] - 1) = 1.0;
          mo.rase = matched_rase(cluster_patterns(r.params, Z, grid), sim.truth);
        }
      } else if (method == "kmeans-s") {
        KmeansSConfig kc = config.kmeans_s;
        kc.K = config.em.K;
        kc.seed = fit_seed;
        mo.assignments = kmeans_s(sim.scalars, kc).assignments;
      } else {
        throw ConfigError("unknown method '" + method + "'");
      }
      mo.ri = rand_index(truth, mo.assignments);
      mo.ari = adjusted_rand_index(truth, mo.assignments);
      mo.ok = true;
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      mo.error = e.what();
    }
    mo.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.methods[method] = std::move(mo);
  }
  return out;
}

std::vector<ReplicationOutcome> run_scenario(const ScenarioConfig& scenario, int reps,
                                             std::uint64_t seed, const ExperimentConfig& config,
                                             int threads) {
  if (reps < 1) throw ConfigError("reps must be >= 1");
  std::vector<ReplicationOutcome> results(static_cast<std::size_t>(reps));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int r = next++; r < reps; r = next++) {
      try {
        ScenarioConfig sc = scenario;
        sc.seed = seed + static_cast<std::uint64_t>(r);
        const Simulation sim = generate(sc);
        results[static_cast<std::size_t>(r)] = run_replication(sim, config, sc.seed);
        results[static_cast<std::size_t>(r)].data_seed = sc.seed;
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int n = std::clamp(threads, 1, reps);
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

int thread_count_from_env() {
  const char* v = std::getenv("SRC_FDA_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError("SRC_FDA_THREADS must be a positive integer");
  return static_cast<int>(std::min<long>(n, 256));
}

std::map<std::string, MethodSummary> summarize(const std::vector<ReplicationOutcome>& reps) {
  std::map<std::string, MethodSummary> out;
  for (const auto& r : reps)
    for (const auto& [name, m] : r.methods) {
      auto& s = out[name];
      if (!m.ok) {
        ++s.failed;
        continue;
      }
      ++s.ok;
      s.mean_ri += m.ri;
      s.mean_ari += m.ari;
      s.mean_rase += m.rase;
    }
  for (auto& [name, s] : out)
    if (s.ok > 0) {
      s.mean_ri /= s.ok;
      s.mean_ari /= s.ok;
      s.mean_rase /= s.ok;
    }
  return out;
}

}  // namespace srcfda
